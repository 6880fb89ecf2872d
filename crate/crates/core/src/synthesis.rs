//! Feedback gains `M1, M2, M3` and the closed-loop matrices.
//!
//! The optimal controls are `u1 = M1 Xbar` and
//! `u2 = M2 X + (M3 - M2) Xbar`, with the gains built pointwise from
//! `(P1, P2)`. Each gain is computed along two algebraically identical
//! routes; disagreement beyond 1e-9 always indicates a coding fault and
//! is reported as a hard error rather than a warning.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::model::{CoefficientFrame, ProblemSpec};
use crate::riccati::RiccatiSolution;

/// Largest accepted disagreement between the two gain representations.
pub const REPRESENTATION_TOL: f64 = 1e-9;

/// Time-sampled feedback gains.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub grid: TimeGrid,
    /// l1 x n, applied to the mean state.
    pub m1: Vec<DMatrix<f64>>,
    /// l2 x n, applied to the realized state.
    pub m2: Vec<DMatrix<f64>>,
    /// l2 x n, applied to the mean state through `M3 - M2`.
    pub m3: Vec<DMatrix<f64>>,
}

/// Gains at one instant from the Riccati pair and the coefficient frame.
///
/// Returns `(M1, M2, M3)`. Both representations of `M1`/`M3` are
/// evaluated and must agree to [`REPRESENTATION_TOL`].
pub fn gains_at(
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    frame: &CoefficientFrame,
    t: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let lambda2 = linalg::symmetric_part(&(&frame.r2 + frame.d2_s_d2(p1)));
    let w = linalg::spd_inverse(&lambda2).ok_or(Error::SingularLambda2 { t })?;
    let e = frame.d1_s_d2(p1);
    let lambda_hat = linalg::symmetric_part(
        &(&frame.r1 + frame.d1_s_d1(p1) - &e * &w * e.transpose()),
    );
    let hat_inv = linalg::spd_inverse(&lambda_hat).ok_or(Error::SingularLambdaHat { t })?;

    let csd1 = frame.c_s_d1(p1);
    let csd2 = frame.c_s_d2(p1);
    let theta1 = frame.b2.transpose() * p1 + csd2.transpose();
    let theta2 = frame.b2.transpose() * p2 + csd2.transpose();

    let m2 = -(&w * &theta1);
    let m1 = -(&hat_inv * (frame.b1.transpose() * p2 + csd1.transpose() - &e * &w * &theta2));
    let m3 = -(&w * (&theta2 + e.transpose() * &m1));

    // Alternate representation: the deterministic gain through the
    // noise-compressed cross term gamma' = (D1)' U(p1) C.
    let gamma_t = csd1.transpose() - &e * &w * csd2.transpose();
    let inner = frame.b1.transpose() * p2 + gamma_t - &e * &w * (frame.b2.transpose() * p2);
    let m1_alt = -(&hat_inv * inner);
    let m3_alt = -(&w * (&theta2 + e.transpose() * &m1_alt));

    let defect = linalg::max_abs(&(&m1 - &m1_alt)).max(linalg::max_abs(&(&m3 - &m3_alt)));
    if defect > REPRESENTATION_TOL {
        return Err(Error::RepresentationMismatch { t, defect });
    }

    Ok((m1, m2, m3))
}

/// Gains at every grid node.
pub fn build_gain_schedule(
    spec: &ProblemSpec,
    grid: &TimeGrid,
    riccati: &RiccatiSolution,
) -> Result<GainSchedule> {
    grid.expect_same(&riccati.grid, "gain schedule")?;
    let nodes = grid.node_count();
    let mut m1 = Vec::with_capacity(nodes);
    let mut m2 = Vec::with_capacity(nodes);
    let mut m3 = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let t = grid.time(i);
        let frame = spec.frame_at(t)?;
        let (g1, g2, g3) = gains_at(&riccati.p1[i], &riccati.p2[i], frame, t)?;
        m1.push(g1);
        m2.push(g2);
        m3.push(g3);
    }
    Ok(GainSchedule {
        grid: *grid,
        m1,
        m2,
        m3,
    })
}

impl GainSchedule {
    /// One row per node: `t`, then row-major M1, M2, M3, 17 significant
    /// digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        let mut header = |name: &str, rows: usize, cols: usize| {
            for r in 0..rows {
                for c in 0..cols {
                    out.push_str(&format!(",{name}_{r}_{c}"));
                }
            }
        };
        let (l1, n1) = self.m1[0].shape();
        let (l2, n2) = self.m2[0].shape();
        header("m1", l1, n1);
        header("m2", l2, n2);
        header("m3", l2, n2);
        out.push('\n');
        for i in 0..self.grid.node_count() {
            out.push_str(&format!("{:.16e}", self.grid.time(i)));
            for m in [&self.m1[i], &self.m2[i], &self.m3[i]] {
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        out.push_str(&format!(",{:.16e}", m[(r, c)]));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Node-sampled closed-loop matrices of the optimal (or any gain-form)
/// feedback system.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub grid: TimeGrid,
    /// `A + B2 M2`, multiplies the realized state in the drift.
    pub drift_state: Vec<DMatrix<f64>>,
    /// `B1 M1 - B2 M2 + B2 M3`, multiplies the mean in the drift.
    pub drift_mean: Vec<DMatrix<f64>>,
    /// Per Brownian component: `C^j + D2^j M2`.
    pub diff_state: Vec<Vec<DMatrix<f64>>>,
    /// Per Brownian component: `D1^j M1 - D2^j M2 + D2^j M3`.
    pub diff_mean: Vec<Vec<DMatrix<f64>>>,
    /// `A + B1 M1 + B2 M3`, generator of the mean ODE.
    pub mean_generator: Vec<DMatrix<f64>>,
}

/// Assemble the closed loop; the algebraic identity
/// `mean_generator = drift_state + drift_mean` is checked at every node.
pub fn build_closed_loop(spec: &ProblemSpec, gains: &GainSchedule) -> Result<ClosedLoopSystem> {
    let grid = gains.grid;
    let nodes = grid.node_count();
    let mut sys = ClosedLoopSystem {
        grid,
        drift_state: Vec::with_capacity(nodes),
        drift_mean: Vec::with_capacity(nodes),
        diff_state: Vec::with_capacity(nodes),
        diff_mean: Vec::with_capacity(nodes),
        mean_generator: Vec::with_capacity(nodes),
    };
    for i in 0..nodes {
        let t = grid.time(i);
        let frame = spec.frame_at(t)?;
        let (m1, m2, m3) = (&gains.m1[i], &gains.m2[i], &gains.m3[i]);
        let drift_state = &frame.a + &frame.b2 * m2;
        let drift_mean = &frame.b1 * m1 - &frame.b2 * m2 + &frame.b2 * m3;
        let mean_generator = &frame.a + &frame.b1 * m1 + &frame.b2 * m3;
        let defect = linalg::max_abs(&(&mean_generator - (&drift_state + &drift_mean)));
        if defect > 1e-12 {
            return Err(Error::RepresentationMismatch { t, defect });
        }
        sys.diff_state.push(
            frame
                .c
                .iter()
                .zip(frame.d2.iter())
                .map(|(c, d2)| c + d2 * m2)
                .collect(),
        );
        sys.diff_mean.push(
            frame
                .d1
                .iter()
                .zip(frame.d2.iter())
                .map(|(d1, d2)| d1 * m1 - d2 * m2 + d2 * m3)
                .collect(),
        );
        sys.drift_state.push(drift_state);
        sys.drift_mean.push(drift_mean);
        sys.mean_generator.push(mean_generator);
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::scalar_problem;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_value_gives_zero_gains() {
        let mut spec = scalar_problem().b1(1.0).b2(1.0).d1(0.5).d2(0.5).c(0.3).build();
        spec.validate().unwrap();
        let frame = &spec.schedule.frames[0];
        let z = DMatrix::zeros(1, 1);
        let (m1, m2, m3) = gains_at(&z, &z, frame, 0.0).unwrap();
        assert_eq!(m1[(0, 0)], 0.0);
        assert_eq!(m2[(0, 0)], 0.0);
        assert_eq!(m3[(0, 0)], 0.0);
    }

    #[test]
    fn deterministic_only_feedback_when_random_channel_is_dead() {
        // B2 = 0, D2 = 0 but l2 retained:
        // M1 = -(R1 + D1'P1D1)^-1 (B1'P2 + D1'P1C), M2 = M3 = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0_f64))
        };
        let n = 2;
        let a = draw(n, n);
        let b1 = draw(n, 1);
        let c = draw(n, n);
        let d1 = draw(n, 1);
        let frame = CoefficientFrame {
            a,
            b1: b1.clone(),
            b2: DMatrix::zeros(n, 1),
            c: vec![c.clone()],
            d1: vec![d1.clone()],
            d2: vec![DMatrix::zeros(n, 1)],
            q: DMatrix::identity(n, n),
            r1: DMatrix::identity(1, 1),
            r2: DMatrix::identity(1, 1),
        };
        let z = draw(n, n);
        let p1 = &z * z.transpose();
        let z = draw(n, n);
        let p2 = &z * z.transpose();
        let (m1, m2, m3) = gains_at(&p1, &p2, &frame, 0.0).unwrap();
        assert_eq!(linalg::max_abs(&m2), 0.0);
        assert_eq!(linalg::max_abs(&m3), 0.0);
        let lam = DMatrix::identity(1, 1) + d1.transpose() * &p1 * &d1;
        let expect = -(lam.try_inverse().unwrap()
            * (b1.transpose() * &p2 + d1.transpose() * &p1 * &c));
        assert!(linalg::max_abs(&(&m1 - expect)) < 1e-12);
    }

    #[test]
    fn gains_match_direct_transcription() {
        // Independent direct transcription of the gain formulas for a
        // seeded 2-state instance with one noise and scalar channels.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut draw = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0_f64))
        };
        let n = 2;
        let frame = CoefficientFrame {
            a: draw(n, n),
            b1: draw(n, 1),
            b2: draw(n, 1),
            c: vec![draw(n, n)],
            d1: vec![draw(n, 1)],
            d2: vec![draw(n, 1)],
            q: DMatrix::identity(n, n),
            r1: DMatrix::from_row_slice(1, 1, &[0.7]),
            r2: DMatrix::from_row_slice(1, 1, &[1.3]),
        };
        let z1 = draw(n, n);
        let z2 = draw(n, n);
        let p1 = &z1 * z1.transpose();
        let p2 = &z2 * z2.transpose();
        let (m1, m2, m3) = gains_at(&p1, &p2, &frame, 0.0).unwrap();

        // Transcription with explicit inverses, d = 1.
        let (c, d1, d2) = (&frame.c[0], &frame.d1[0], &frame.d2[0]);
        let lam2 = &frame.r2 + d2.transpose() * &p1 * d2;
        let w = lam2.clone().try_inverse().unwrap();
        let lam1 = &frame.r1 + d1.transpose() * &p1 * d1;
        let bracket = &lam1
            - d1.transpose() * &p1 * d2 * &w * (d2.transpose() * &p1 * d1);
        let th1 = frame.b2.transpose() * &p1 + d2.transpose() * &p1 * c;
        let th2 = frame.b2.transpose() * &p2 + d2.transpose() * &p1 * c;
        let m1_ref = -(bracket.try_inverse().unwrap()
            * (frame.b1.transpose() * &p2 + d1.transpose() * &p1 * c
                - d1.transpose() * &p1 * d2 * &w * &th2));
        let m2_ref = -(&w * &th1);
        let m3_ref = -(&w * (&th2 + d2.transpose() * &p1 * d1 * &m1_ref));

        assert!(linalg::max_abs(&(&m1 - m1_ref)) < 1e-12);
        assert!(linalg::max_abs(&(&m2 - m2_ref)) < 1e-12);
        assert!(linalg::max_abs(&(&m3 - m3_ref)) < 1e-12);
    }

    #[test]
    fn schedule_and_closed_loop_on_the_tanh_problem() {
        let mut spec = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let grid = crate::TimeGrid::aligned(&spec, 512).unwrap();
        let sol = RiccatiSolution::solve(&spec, &grid).unwrap();
        let gains = build_gain_schedule(&spec, &grid, &sol).unwrap();
        let s2 = 2.0_f64.sqrt();
        let expect = -(s2.tanh() / s2);
        assert_abs_diff_eq!(gains.m3[0][(0, 0)], expect, epsilon = 1e-9);
        assert_abs_diff_eq!(gains.m1[0][(0, 0)], expect, epsilon = 1e-9);

        let sys = build_closed_loop(&spec, &gains).unwrap();
        assert_abs_diff_eq!(sys.mean_generator[0][(0, 0)], 2.0 * expect, epsilon = 1e-9);
    }

    #[test]
    fn zero_gains_give_the_open_loop() {
        let mut spec = scalar_problem().a(0.4).c(0.7).b1(1.0).b2(1.0).build();
        spec.validate().unwrap();
        let grid = crate::TimeGrid::aligned(&spec, 8).unwrap();
        let nodes = grid.node_count();
        let gains = GainSchedule {
            grid,
            m1: vec![DMatrix::zeros(1, 1); nodes],
            m2: vec![DMatrix::zeros(1, 1); nodes],
            m3: vec![DMatrix::zeros(1, 1); nodes],
        };
        let sys = build_closed_loop(&spec, &gains).unwrap();
        assert_eq!(sys.drift_state[0][(0, 0)], 0.4);
        assert_eq!(sys.diff_state[0][0][(0, 0)], 0.7);
        assert_eq!(sys.drift_mean[0][(0, 0)], 0.0);
        assert_eq!(sys.diff_mean[0][0][(0, 0)], 0.0);
    }

    #[test]
    fn mean_feedbacks_coincide_without_deterministic_channel() {
        let mut spec = scalar_problem().no_l1().b2(1.0).d2(0.4).c(0.3).q(1.0).g(1.0).build();
        spec.validate().unwrap();
        let grid = crate::TimeGrid::aligned(&spec, 128).unwrap();
        let sol = RiccatiSolution::solve(&spec, &grid).unwrap();
        let gains = build_gain_schedule(&spec, &grid, &sol).unwrap();
        for (m2, m3) in gains.m2.iter().zip(gains.m3.iter()) {
            assert!(linalg::max_abs(&(m2 - m3)) < 1e-10);
        }
        let sys = build_closed_loop(&spec, &gains).unwrap();
        for dm in &sys.drift_mean {
            assert!(linalg::max_abs(dm) < 1e-10);
        }
        for dj in &sys.diff_mean {
            for m in dj {
                assert!(linalg::max_abs(m) < 1e-10);
            }
        }
    }
}
