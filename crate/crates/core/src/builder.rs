//! Convenience constructors for desk-scale problems.
//!
//! Tests, benches and examples build scalar and small matrix problems
//! constantly; this keeps them to one line each.

use nalgebra::{DMatrix, DVector};

use crate::model::{CoefficientFrame, CoefficientSchedule, Dims, ProblemSpec};

/// Builder for a scalar (n = 1, d = 1) problem with one interval.
///
/// Defaults: every coefficient zero, `r1 = r2 = 1`, `g = 0`, `x0 = 1`,
/// `horizon = 1`. Channels can be removed entirely with [`no_l1`] /
/// [`no_l2`].
///
/// [`no_l1`]: ScalarBuilder::no_l1
/// [`no_l2`]: ScalarBuilder::no_l2
#[derive(Debug, Clone)]
pub struct ScalarBuilder {
    a: f64,
    b1: f64,
    b2: f64,
    c: f64,
    d1: f64,
    d2: f64,
    q: f64,
    r1: f64,
    r2: f64,
    g: f64,
    x0: f64,
    horizon: f64,
    with_l1: bool,
    with_l2: bool,
}

pub fn scalar_problem() -> ScalarBuilder {
    ScalarBuilder {
        a: 0.0,
        b1: 0.0,
        b2: 0.0,
        c: 0.0,
        d1: 0.0,
        d2: 0.0,
        q: 0.0,
        r1: 1.0,
        r2: 1.0,
        g: 0.0,
        x0: 1.0,
        horizon: 1.0,
        with_l1: true,
        with_l2: true,
    }
}

macro_rules! setter {
    ($($field:ident),*) => {
        $(pub fn $field(mut self, v: f64) -> Self { self.$field = v; self })*
    };
}

impl ScalarBuilder {
    setter!(a, b1, b2, c, d1, d2, q, r1, r2, g, x0, horizon);

    /// Drop the deterministic control channel (l1 = 0).
    pub fn no_l1(mut self) -> Self {
        self.with_l1 = false;
        self
    }

    /// Drop the random control channel (l2 = 0).
    pub fn no_l2(mut self) -> Self {
        self.with_l2 = false;
        self
    }

    pub fn build(self) -> ProblemSpec {
        let l1 = usize::from(self.with_l1);
        let l2 = usize::from(self.with_l2);
        let col = |on: bool, v: f64| {
            if on {
                DMatrix::from_row_slice(1, 1, &[v])
            } else {
                DMatrix::zeros(1, 0)
            }
        };
        let sq = |on: bool, v: f64| {
            if on {
                DMatrix::from_row_slice(1, 1, &[v])
            } else {
                DMatrix::zeros(0, 0)
            }
        };
        let frame = CoefficientFrame {
            a: DMatrix::from_row_slice(1, 1, &[self.a]),
            b1: col(self.with_l1, self.b1),
            b2: col(self.with_l2, self.b2),
            c: vec![DMatrix::from_row_slice(1, 1, &[self.c])],
            d1: vec![col(self.with_l1, self.d1)],
            d2: vec![col(self.with_l2, self.d2)],
            q: DMatrix::from_row_slice(1, 1, &[self.q]),
            r1: sq(self.with_l1, self.r1),
            r2: sq(self.with_l2, self.r2),
        };
        ProblemSpec::new(
            Dims { n: 1, l1, l2, d: 1 },
            self.horizon,
            CoefficientSchedule {
                breakpoints: vec![0.0, self.horizon],
                frames: vec![frame],
            },
            DMatrix::from_row_slice(1, 1, &[self.g]),
            DVector::from_vec(vec![self.x0]),
        )
    }
}

/// Single-interval matrix problem from explicit blocks.
pub fn matrix_problem(
    dims: Dims,
    horizon: f64,
    frame: CoefficientFrame,
    g: DMatrix<f64>,
    x0: DVector<f64>,
) -> ProblemSpec {
    ProblemSpec::new(
        dims,
        horizon,
        CoefficientSchedule {
            breakpoints: vec![0.0, horizon],
            frames: vec![frame],
        },
        g,
        x0,
    )
}
