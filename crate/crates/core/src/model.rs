//! Problem data: dimensions, piecewise-constant coefficient schedule,
//! cost weights, and admissibility classification.
//!
//! A problem is a controlled linear SDE
//!
//! ```text
//! dX = [A X + B1 u1 + B2 u2] dt + sum_j [C^j X + D1^j u1 + D2^j u2] dW^j
//! ```
//!
//! with quadratic running cost weights `Q, R1, R2`, terminal weight `G`
//! and two control channels: `u1` restricted to deterministic time
//! functions, `u2` adapted to the driving Brownian motion. All
//! coefficients are piecewise constant on `[0, T]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Problem dimensions.
///
/// `l1 = 0` or `l2 = 0` removes a control channel structurally: the
/// corresponding blocks are empty matrices and every product over the
/// empty dimension is a zero matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Deterministic-control dimension.
    pub l1: usize,
    /// Random-control dimension.
    pub l2: usize,
    /// Brownian dimension.
    pub d: usize,
}

impl Dims {
    pub fn check(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Parse("dims.n must be at least 1".into()));
        }
        if self.d < 1 {
            return Err(Error::Parse("dims.d must be at least 1".into()));
        }
        if self.l1 + self.l2 < 1 {
            return Err(Error::Parse("dims require l1 + l2 >= 1".into()));
        }
        Ok(())
    }
}

/// Constant coefficient matrices on one schedule interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFrame {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// State diffusion per Brownian component, length `d`.
    pub c: Vec<DMatrix<f64>>,
    /// Deterministic-control diffusion per Brownian component.
    pub d1: Vec<DMatrix<f64>>,
    /// Random-control diffusion per Brownian component.
    pub d2: Vec<DMatrix<f64>>,
    pub q: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
}

/// `sum_j left[j]' * s * right[j]` — the multi-noise contraction used in
/// every structure map.
fn contract(left: &[DMatrix<f64>], s: &DMatrix<f64>, right: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = left[0].ncols();
    let cols = right[0].ncols();
    let mut acc = DMatrix::zeros(rows, cols);
    for (l, r) in left.iter().zip(right.iter()) {
        acc += l.transpose() * s * r;
    }
    acc
}

impl CoefficientFrame {
    fn check_dims(&self, dims: &Dims, interval: usize) -> Result<()> {
        let Dims { n, l1, l2, d } = *dims;
        let at = |name: &str| format!("{name} on interval {interval}");
        linalg::expect_shape(&self.a, n, n, &at("A"))?;
        linalg::expect_shape(&self.b1, n, l1, &at("B1"))?;
        linalg::expect_shape(&self.b2, n, l2, &at("B2"))?;
        for (family, mats, cols) in [("C", &self.c, n), ("D1", &self.d1, l1), ("D2", &self.d2, l2)]
        {
            if mats.len() != d {
                return Err(Error::dims(
                    at(family),
                    format!("{d} diffusion blocks"),
                    format!("{}", mats.len()),
                ));
            }
            for (j, m) in mats.iter().enumerate() {
                linalg::expect_shape(m, n, cols, &at(&format!("{family}[{j}]")))?;
            }
        }
        linalg::expect_shape(&self.q, n, n, &at("Q"))?;
        linalg::expect_shape(&self.r1, l1, l1, &at("R1"))?;
        linalg::expect_shape(&self.r2, l2, l2, &at("R2"))?;
        Ok(())
    }

    /// `sum_j (C^j)' S C^j`, an n x n matrix.
    pub fn c_s_c(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.c, s, &self.c)
    }

    /// `sum_j (C^j)' S D1^j`, an n x l1 matrix.
    pub fn c_s_d1(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.c, s, &self.d1)
    }

    /// `sum_j (C^j)' S D2^j`, an n x l2 matrix.
    pub fn c_s_d2(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.c, s, &self.d2)
    }

    /// `sum_j (D1^j)' S D1^j`, an l1 x l1 matrix.
    pub fn d1_s_d1(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.d1, s, &self.d1)
    }

    /// `sum_j (D1^j)' S D2^j`, an l1 x l2 matrix.
    pub fn d1_s_d2(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.d1, s, &self.d2)
    }

    /// `sum_j (D2^j)' S D2^j`, an l2 x l2 matrix.
    pub fn d2_s_d2(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        contract(&self.d2, s, &self.d2)
    }

    /// `sum_j (D1^j)' D1^j` — control-noise Gram matrix of the
    /// deterministic channel (singular-case admissibility).
    pub fn d1_gram(&self) -> DMatrix<f64> {
        let eye = DMatrix::identity(self.a.nrows(), self.a.nrows());
        contract(&self.d1, &eye, &self.d1)
    }

    /// `sum_j (D2^j)' D2^j`.
    pub fn d2_gram(&self) -> DMatrix<f64> {
        let eye = DMatrix::identity(self.a.nrows(), self.a.nrows());
        contract(&self.d2, &eye, &self.d2)
    }

    /// Vertical stack `[M^1; ...; M^d]` of a diffusion family, used where
    /// a map must exist as one matrix rather than inside a contraction.
    pub fn stack(family: &[DMatrix<f64>]) -> DMatrix<f64> {
        let rows: usize = family.iter().map(|m| m.nrows()).sum();
        let cols = family[0].ncols();
        let mut out = DMatrix::zeros(rows, cols);
        let mut row = 0;
        for m in family {
            out.view_mut((row, 0), (m.nrows(), cols)).copy_from(m);
            row += m.nrows();
        }
        out
    }
}

/// Piecewise-constant coefficients: `frames[k]` holds on
/// `[breakpoints[k], breakpoints[k+1])`, the last frame also at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    pub breakpoints: Vec<f64>,
    pub frames: Vec<CoefficientFrame>,
}

/// Validation tolerances, overridable per problem file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest accepted `||M - M'||_F` before symmetrization.
    pub sym: f64,
    /// Smallest accepted eigenvalue of a nominally PSD weight.
    pub psd: f64,
    /// Uniform positivity threshold for classification.
    pub uniform: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sym: 1e-12,
            psd: 1e-10,
            uniform: 1e-10,
        }
    }
}

/// Which existence theorem admits the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegularityTag {
    /// Both control weights uniformly positive definite.
    Regular,
    /// `R2` only PSD, compensated by `(D2)'D2 > 0` and `G > 0`.
    SingularR2,
    /// `R1` only PSD, compensated by `(D1)'D1 > 0` and `G > 0`.
    SingularR1,
}

impl RegularityTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegularityTag::Regular => "Regular",
            RegularityTag::SingularR2 => "SingularR2",
            RegularityTag::SingularR1 => "SingularR1",
        }
    }
}

/// Eigenvalue bounds recorded while classifying; `None` for blocks that
/// are empty (vacuously positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityEvidence {
    pub min_eig_r1: Option<f64>,
    pub min_eig_r2: Option<f64>,
    pub min_eig_g: f64,
    pub min_eig_d1_gram: Option<f64>,
    pub min_eig_d2_gram: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityClass {
    pub tag: RegularityTag,
    pub evidence: RegularityEvidence,
}

/// Full problem description. Immutable after [`ProblemSpec::validate`];
/// solvers and the simulator share it read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dims: Dims,
    pub horizon: f64,
    pub schedule: CoefficientSchedule,
    /// Terminal weight G.
    pub terminal_weight: DMatrix<f64>,
    /// Initial state x0.
    pub initial_state: DVector<f64>,
    pub tolerances: Tolerances,
    regularity: Option<RegularityClass>,
}

impl ProblemSpec {
    pub fn new(
        dims: Dims,
        horizon: f64,
        schedule: CoefficientSchedule,
        terminal_weight: DMatrix<f64>,
        initial_state: DVector<f64>,
    ) -> ProblemSpec {
        ProblemSpec {
            dims,
            horizon,
            schedule,
            terminal_weight,
            initial_state,
            tolerances: Tolerances::default(),
            regularity: None,
        }
    }

    /// Classification recorded by the last successful [`validate`].
    ///
    /// [`validate`]: ProblemSpec::validate
    pub fn regularity(&self) -> Option<&RegularityClass> {
        self.regularity.as_ref()
    }

    pub fn is_singular(&self) -> bool {
        matches!(
            self.regularity.map(|r| r.tag),
            Some(RegularityTag::SingularR2) | Some(RegularityTag::SingularR1)
        )
    }

    /// Whether the schedule has a single interval (time-invariant data).
    pub fn is_time_invariant(&self) -> bool {
        self.schedule.frames.len() == 1
    }

    /// Check shapes, breakpoints, symmetry and positivity, symmetrize the
    /// weights in place, and classify the problem. Idempotent: a second
    /// call returns the same class and changes no entry.
    pub fn validate(&mut self) -> Result<RegularityClass> {
        self.dims.check()?;
        if !(self.horizon > 0.0) {
            return Err(Error::Parse("horizon must be positive".into()));
        }

        let bps = &self.schedule.breakpoints;
        if bps.len() < 2 || self.schedule.frames.len() + 1 != bps.len() {
            return Err(Error::Parse(format!(
                "schedule must have one more breakpoint than frames, got {} breakpoints and {} frames",
                bps.len(),
                self.schedule.frames.len()
            )));
        }
        if bps[0] != 0.0 || *bps.last().unwrap() != self.horizon {
            return Err(Error::Parse(
                "breakpoints must start at 0 and end at the horizon".into(),
            ));
        }
        if bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse("breakpoints must be strictly increasing".into()));
        }

        let n = self.dims.n;
        for (k, frame) in self.schedule.frames.iter().enumerate() {
            frame.check_dims(&self.dims, k)?;
        }
        linalg::expect_shape(&self.terminal_weight, n, n, "G")?;
        if self.initial_state.len() != n {
            return Err(Error::dims(
                "x0",
                format!("{n}"),
                format!("{}", self.initial_state.len()),
            ));
        }

        let tol = self.tolerances;
        for (k, frame) in self.schedule.frames.iter_mut().enumerate() {
            for (name, m) in [
                ("Q", &mut frame.q),
                ("R1", &mut frame.r1),
                ("R2", &mut frame.r2),
            ] {
                enforce_symmetric_psd(m, &format!("{name} on interval {k}"), tol)?;
            }
        }
        enforce_symmetric_psd(&mut self.terminal_weight, "G", tol)?;

        let class = self.classify();
        self.regularity = Some(class?);
        Ok(self.regularity.unwrap())
    }

    fn classify(&self) -> Result<RegularityClass> {
        let frames = &self.schedule.frames;
        let fold_min = |f: &dyn Fn(&CoefficientFrame) -> DMatrix<f64>| {
            frames
                .iter()
                .map(|fr| linalg::min_sym_eig(&f(fr)))
                .fold(f64::INFINITY, f64::min)
        };
        let opt = |dim: usize, v: f64| if dim == 0 { None } else { Some(v) };

        let r1_min = fold_min(&|fr: &CoefficientFrame| fr.r1.clone());
        let r2_min = fold_min(&|fr: &CoefficientFrame| fr.r2.clone());
        let d1_gram_min = fold_min(&|fr: &CoefficientFrame| linalg::symmetric_part(&fr.d1_gram()));
        let d2_gram_min = fold_min(&|fr: &CoefficientFrame| linalg::symmetric_part(&fr.d2_gram()));
        let g_min = linalg::min_sym_eig(&self.terminal_weight);

        let evidence = RegularityEvidence {
            min_eig_r1: opt(self.dims.l1, r1_min),
            min_eig_r2: opt(self.dims.l2, r2_min),
            min_eig_g: g_min,
            min_eig_d1_gram: opt(self.dims.l1, d1_gram_min),
            min_eig_d2_gram: opt(self.dims.l2, d2_gram_min),
        };

        let eps = self.tolerances.uniform;
        let tag = if r1_min >= eps && r2_min >= eps {
            RegularityTag::Regular
        } else if r1_min >= eps && d2_gram_min >= eps && g_min >= eps {
            RegularityTag::SingularR2
        } else if r2_min >= eps && d1_gram_min >= eps && g_min >= eps {
            RegularityTag::SingularR1
        } else {
            return Err(Error::Inadmissible {
                details: format!(
                    "min eig R1 = {r1_min:.3e}, min eig R2 = {r2_min:.3e}, \
                     min eig (D1)'D1 = {d1_gram_min:.3e}, min eig (D2)'D2 = {d2_gram_min:.3e}, \
                     min eig G = {g_min:.3e}; need R1,R2 >= {eps:.1e}, or one weight singular \
                     with its control-noise Gram matrix and G uniformly positive"
                ),
            });
        };

        Ok(RegularityClass { tag, evidence })
    }

    /// Coefficient frame in force at time `t`: right-continuous at
    /// breakpoints, left-continuous at the horizon.
    pub fn frame_at(&self, t: f64) -> Result<&CoefficientFrame> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let bps = &self.schedule.breakpoints;
        // Last interval owns its right endpoint.
        let idx = bps[1..bps.len() - 1].partition_point(|&b| b <= t);
        Ok(&self.schedule.frames[idx])
    }
}

fn enforce_symmetric_psd(m: &mut DMatrix<f64>, what: &str, tol: Tolerances) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let defect = linalg::asymmetry(m);
    if defect > tol.sym {
        return Err(Error::NotSymmetric {
            what: what.into(),
            defect,
            tol: tol.sym,
        });
    }
    linalg::symmetrize(m);
    let min_eig = linalg::min_sym_eig(m);
    if min_eig < -tol.psd {
        return Err(Error::NotPsd {
            what: what.into(),
            min_eig,
            tol: -tol.psd,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON problem files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FrameFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    b1: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    b2: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "D1")]
    d1: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "D2")]
    d2: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R1")]
    r1: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    r2: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleFile {
    breakpoints: Vec<f64>,
    frames: Vec<FrameFile>,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    dims: Dims,
    horizon: f64,
    schedule: ScheduleFile,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tolerances: Option<Tolerances>,
}

/// Row-major nested arrays -> matrix. A matrix with zero rows may be
/// written as `[]`; one with zero columns as `rows` empty arrays.
fn rows_to_mat(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    let got_rows = rows.len();
    if got_rows != nrows && !(nrows == 0 && got_rows == 0) {
        return Err(Error::dims(
            what,
            format!("{nrows} rows"),
            format!("{got_rows}"),
        ));
    }
    let mut flat = Vec::with_capacity(nrows * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::dims(
                format!("{what} row {i}"),
                format!("{ncols} entries"),
                format!("{}", row.len()),
            ));
        }
        flat.extend_from_slice(row);
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, flat))
}

fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn family_to_rows(family: &[DMatrix<f64>]) -> Vec<Vec<Vec<f64>>> {
    family.iter().map(mat_to_rows).collect()
}

fn rows_to_family(
    rows: &[Vec<Vec<f64>>],
    d: usize,
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<Vec<DMatrix<f64>>> {
    if rows.len() != d {
        return Err(Error::dims(
            what,
            format!("{d} diffusion blocks"),
            format!("{}", rows.len()),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(j, m)| rows_to_mat(m, nrows, ncols, &format!("{what}[{j}]")))
        .collect()
}

impl ProblemSpec {
    /// Parse a problem file. The result still needs [`validate`].
    ///
    /// [`validate`]: ProblemSpec::validate
    pub fn from_json(text: &str) -> Result<ProblemSpec> {
        let file: ProblemFile = serde_json::from_str(text)?;
        let Dims { n, l1, l2, d } = file.dims;
        let mut frames = Vec::with_capacity(file.schedule.frames.len());
        for (k, f) in file.schedule.frames.iter().enumerate() {
            let at = |name: &str| format!("{name} on interval {k}");
            frames.push(CoefficientFrame {
                a: rows_to_mat(&f.a, n, n, &at("A"))?,
                b1: rows_to_mat(&f.b1, n, l1, &at("B1"))?,
                b2: rows_to_mat(&f.b2, n, l2, &at("B2"))?,
                c: rows_to_family(&f.c, d, n, n, &at("C"))?,
                d1: rows_to_family(&f.d1, d, n, l1, &at("D1"))?,
                d2: rows_to_family(&f.d2, d, n, l2, &at("D2"))?,
                q: rows_to_mat(&f.q, n, n, &at("Q"))?,
                r1: rows_to_mat(&f.r1, l1, l1, &at("R1"))?,
                r2: rows_to_mat(&f.r2, l2, l2, &at("R2"))?,
            });
        }
        let mut spec = ProblemSpec::new(
            file.dims,
            file.horizon,
            CoefficientSchedule {
                breakpoints: file.schedule.breakpoints,
                frames,
            },
            rows_to_mat(&file.g, n, n, "G")?,
            DVector::from_vec(file.x0),
        );
        if let Some(tol) = file.tolerances {
            spec.tolerances = tol;
        }
        Ok(spec)
    }

    pub fn from_path(path: &std::path::Path) -> Result<ProblemSpec> {
        ProblemSpec::from_json(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the problem-file schema.
    pub fn to_json(&self) -> Result<String> {
        let file = ProblemFile {
            dims: self.dims,
            horizon: self.horizon,
            schedule: ScheduleFile {
                breakpoints: self.schedule.breakpoints.clone(),
                frames: self
                    .schedule
                    .frames
                    .iter()
                    .map(|f| FrameFile {
                        a: mat_to_rows(&f.a),
                        b1: mat_to_rows(&f.b1),
                        b2: mat_to_rows(&f.b2),
                        c: family_to_rows(&f.c),
                        d1: family_to_rows(&f.d1),
                        d2: family_to_rows(&f.d2),
                        q: mat_to_rows(&f.q),
                        r1: mat_to_rows(&f.r1),
                        r2: mat_to_rows(&f.r2),
                    })
                    .collect(),
            },
            g: mat_to_rows(&self.terminal_weight),
            x0: self.initial_state.iter().copied().collect(),
            tolerances: if self.tolerances == Tolerances::default() {
                None
            } else {
                Some(self.tolerances)
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::scalar_problem;

    #[test]
    fn strictly_positive_weights_classify_regular() {
        let mut spec = scalar_problem()
            .q(1.0)
            .g(0.0)
            .r1(1.0)
            .r2(1.0)
            .b1(1.0)
            .b2(1.0)
            .build();
        let class = spec.validate().unwrap();
        assert_eq!(class.tag, RegularityTag::Regular);
    }

    #[test]
    fn singular_r2_requires_control_noise_and_terminal_weight() {
        let mut spec = scalar_problem()
            .q(1.0)
            .g(1.0)
            .r1(1.0)
            .r2(0.0)
            .b2(1.0)
            .d2(1.0)
            .build();
        assert_eq!(spec.validate().unwrap().tag, RegularityTag::SingularR2);

        // Same weights without the control noise: nothing admits it.
        let mut bad = scalar_problem().q(1.0).g(1.0).r1(1.0).r2(0.0).b2(1.0).build();
        match bad.validate() {
            Err(Error::Inadmissible { .. }) => {}
            other => panic!("expected Inadmissible, got {other:?}"),
        }
    }

    #[test]
    fn negative_weight_is_rejected() {
        let mut spec = scalar_problem().q(1.0).r1(-0.1).r2(1.0).build();
        match spec.validate() {
            Err(Error::NotPsd { what, .. }) => assert!(what.starts_with("R1")),
            other => panic!("expected NotPSD, got {other:?}"),
        }
    }

    #[test]
    fn asymmetry_beyond_tolerance_is_rejected() {
        let mut spec = scalar_problem().build();
        spec.dims = Dims {
            n: 2,
            l1: 1,
            l2: 1,
            d: 1,
        };
        let f = &mut spec.schedule.frames[0];
        f.a = DMatrix::zeros(2, 2);
        f.b1 = DMatrix::zeros(2, 1);
        f.b2 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        f.c = vec![DMatrix::zeros(2, 2)];
        f.d1 = vec![DMatrix::zeros(2, 1)];
        f.d2 = vec![DMatrix::zeros(2, 1)];
        f.q = DMatrix::from_row_slice(2, 2, &[1.0, 1e-6, 0.0, 1.0]);
        spec.terminal_weight = DMatrix::identity(2, 2);
        spec.initial_state = DVector::from_vec(vec![1.0, 0.0]);
        match spec.validate() {
            Err(Error::NotSymmetric { what, .. }) => assert!(what.starts_with("Q")),
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn validate_is_idempotent() {
        let mut spec = scalar_problem().q(1.0).r1(1.0).r2(1.0).b2(1.0).build();
        let first = spec.validate().unwrap();
        let snapshot = spec.clone();
        let second = spec.validate().unwrap();
        assert_eq!(first, second);
        assert_eq!(snapshot, spec);
    }

    #[test]
    fn frame_lookup_is_right_continuous_and_closed_at_horizon() {
        let mut spec = scalar_problem().build();
        // Two intervals split at 0.5 with distinguishable A.
        let mut second = spec.schedule.frames[0].clone();
        spec.schedule.frames[0].a[(0, 0)] = 1.0;
        second.a[(0, 0)] = 2.0;
        spec.schedule.breakpoints = vec![0.0, 0.5, 1.0];
        spec.schedule.frames.push(second);
        spec.validate().unwrap();

        assert_eq!(spec.frame_at(0.25).unwrap().a[(0, 0)], 1.0);
        assert_eq!(spec.frame_at(0.5).unwrap().a[(0, 0)], 2.0);
        assert_eq!(spec.frame_at(1.0).unwrap().a[(0, 0)], 2.0);
        assert!(matches!(
            spec.frame_at(1.0 + 1e-9),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn json_round_trip_preserves_the_problem() {
        let mut spec = scalar_problem().q(1.0).r1(1.0).r2(1.0).b1(1.0).b2(1.0).build();
        spec.validate().unwrap();
        let text = spec.to_json().unwrap();
        let mut back = ProblemSpec::from_json(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(spec.schedule, back.schedule);
        assert_eq!(spec.terminal_weight, back.terminal_weight);
        assert_eq!(spec.initial_state, back.initial_state);
    }

    #[test]
    fn empty_control_channel_parses_and_validates() {
        // l1 = 0: the deterministic channel is structurally absent.
        let text = r#"{
            "dims": {"n": 1, "l1": 0, "l2": 1, "d": 1},
            "horizon": 1.0,
            "schedule": {
                "breakpoints": [0.0, 1.0],
                "frames": [{
                    "A": [[0.0]], "B1": [[]], "B2": [[1.0]],
                    "C": [[[0.0]]], "D1": [[[]]], "D2": [[[0.0]]],
                    "Q": [[0.0]], "R1": [], "R2": [[1.0]]
                }]
            },
            "G": [[1.0]],
            "x0": [1.0]
        }"#;
        let mut spec = ProblemSpec::from_json(text).unwrap();
        assert_eq!(spec.validate().unwrap().tag, RegularityTag::Regular);
        assert_eq!(spec.schedule.frames[0].b1.shape(), (1, 0));
    }
}
