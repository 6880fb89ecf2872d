//! Structure maps and the four matrix equations.
//!
//! The decoupled pair solved here parametrizes the value function of the
//! mixed-controller problem:
//!
//! ```text
//! P1' + P1 A + A'P1 + C'P1C + Q - Theta1(P1)' Lambda2(P1)^-1 Theta1(P1) = 0,  P1(T) = G
//! P2' + P2 At(P1) + At(P1)'P2 + Qt(P1) - P2 N(P1) P2 = 0,                     P2(T) = G
//! ```
//!
//! with the maps `Lambda1, Lambda2, LambdaHat, U, Qt, At, N, Theta1,
//! Theta2` defined below. The classical fully-adapted Riccati equation in
//! the stacked blocks `B = (B1, B2)`, `D = (D1, D2)`, `R = diag(R1, R2)`
//! is kept as a baseline, and the stationary (algebraic) pair is obtained
//! by extending the horizon until the finite-horizon solutions settle.
//!
//! All multi-noise products are the contractions
//! `X' S Y := sum_j (X^j)' S Y^j`. Integration is classical RK4 with a
//! fixed step; coefficients are constant within each grid interval, and
//! the `P2` sweep re-derives the `P1` stage values from the `P1` equation
//! itself (joint stages) rather than interpolating, which keeps the
//! scheme fourth order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::model::{CoefficientFrame, ProblemSpec};

/// Hard failure threshold for any solution trajectory, in Frobenius norm.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Discretization slack allowed on the nonnegativity of P1, P2 nodes.
pub const NODE_PSD_SLACK: f64 = 1e-8;

/// Internal steps per unit time for the horizon-extension (ARE) sweep.
const ARE_STEPS_PER_UNIT: f64 = 256.0;

// ---------------------------------------------------------------------------
// Structure maps
// ---------------------------------------------------------------------------

/// The derived matrix maps evaluated at a symmetric `S` (and a second
/// argument `P2` for `theta2`; [`StructureMaps::eval`] uses `S` in both
/// slots).
///
/// `u` is the control-noise compression `S - S D2 Lambda2^-1(S) (D2)' S`
/// in stacked form: for `d` Brownian components it is the
/// `(n d) x (n d)` matrix built from `I_d (x) S` and the vertical stack
/// of the `S D2^j`; for `d = 1` this is exactly the `n x n` map. The
/// sandwiched products `C' U C`, `C' U D1`, `(D1)' U D1` that enter
/// `q_tilde` and `a_tilde` are expanded through the contraction
/// identities rather than formed from `u`.
#[derive(Debug, Clone)]
pub struct StructureMaps {
    /// `R1 + (D1)' S D1`, l1 x l1.
    pub lambda1: DMatrix<f64>,
    /// `R2 + (D2)' S D2`, l2 x l2.
    pub lambda2: DMatrix<f64>,
    /// `Lambda1 - (D1)'S D2 Lambda2^-1 (D2)'S D1`, l1 x l1.
    pub lambda_hat: DMatrix<f64>,
    /// Stacked control-noise compression, (n d) x (n d).
    pub u: DMatrix<f64>,
    /// Effective state weight of the mean equation, n x n.
    pub q_tilde: DMatrix<f64>,
    /// Effective drift of the mean equation, n x n.
    pub a_tilde: DMatrix<f64>,
    /// Quadratic-term kernel of the mean equation, n x n.
    pub n_map: DMatrix<f64>,
    /// `(B2)' S + (D2)' S C`, l2 x n.
    pub theta1: DMatrix<f64>,
    /// `(B2)' P2 + (D2)' S C`, l2 x n.
    pub theta2: DMatrix<f64>,
}

impl StructureMaps {
    /// Evaluate every map at the single matrix `s` (both Riccati slots).
    ///
    /// `t` only labels error messages.
    pub fn eval(s: &DMatrix<f64>, frame: &CoefficientFrame, t: f64) -> Result<StructureMaps> {
        StructureMaps::eval_pair(s, s, frame, t)
    }

    /// Evaluate with distinct Riccati arguments: `p1` fills the diffusion
    /// slot everywhere, `p2` only the `(B2)' P2` part of `theta2`.
    pub fn eval_pair(
        p1: &DMatrix<f64>,
        p2: &DMatrix<f64>,
        frame: &CoefficientFrame,
        t: f64,
    ) -> Result<StructureMaps> {
        let lambda2 = linalg::symmetric_part(&(&frame.r2 + frame.d2_s_d2(p1)));
        let w = linalg::spd_inverse(&lambda2).ok_or(Error::SingularLambda2 { t })?;

        let e = frame.d1_s_d2(p1);
        let lambda1 = linalg::symmetric_part(&(&frame.r1 + frame.d1_s_d1(p1)));
        let lambda_hat = linalg::symmetric_part(&(&lambda1 - &e * &w * e.transpose()));
        let hat_inv =
            linalg::spd_inverse(&lambda_hat).ok_or(Error::SingularLambdaHat { t })?;

        let cpc = frame.c_s_c(p1);
        let csd1 = frame.c_s_d1(p1);
        let csd2 = frame.c_s_d2(p1);

        // gamma = C' U(p1) D1 and cuc = C' U(p1) C via the contraction
        // identities.
        let gamma = &csd1 - &csd2 * &w * e.transpose();
        let cuc = &cpc - &csd2 * &w * csd2.transpose();

        let q_tilde =
            linalg::symmetric_part(&(&frame.q + &cuc - &gamma * &hat_inv * gamma.transpose()));

        let beta = &frame.b1 - &frame.b2 * &w * e.transpose();
        let a_tilde = &frame.a - &frame.b2 * &w * csd2.transpose() - &beta * &hat_inv * gamma.transpose();
        let n_map = linalg::symmetric_part(
            &(&frame.b2 * &w * frame.b2.transpose() + &beta * &hat_inv * beta.transpose()),
        );

        let theta1 = frame.b2.transpose() * p1 + csd2.transpose();
        let theta2 = frame.b2.transpose() * p2 + csd2.transpose();

        let u = stacked_noise_compression(p1, frame, &w);

        Ok(StructureMaps {
            lambda1,
            lambda2,
            lambda_hat,
            u,
            q_tilde,
            a_tilde,
            n_map,
            theta1,
            theta2,
        })
    }
}

/// `I_d (x) S  -  stack(S D2^j) Lambda2^-1 stack(S D2^j)'`.
fn stacked_noise_compression(
    s: &DMatrix<f64>,
    frame: &CoefficientFrame,
    lambda2_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = s.nrows();
    let d = frame.d2.len();
    let mut big = DMatrix::zeros(n * d, n * d);
    for j in 0..d {
        big.view_mut((j * n, j * n), (n, n)).copy_from(s);
    }
    let sd2 = CoefficientFrame::stack(&frame.d2.iter().map(|m| s * m).collect::<Vec<_>>());
    linalg::symmetric_part(&(big - &sd2 * lambda2_inv * sd2.transpose()))
}

// ---------------------------------------------------------------------------
// Backward rates (dP/dt along each equation)
// ---------------------------------------------------------------------------

fn p1_rate(p: &DMatrix<f64>, frame: &CoefficientFrame, t: f64) -> Result<DMatrix<f64>> {
    let lambda2 = linalg::symmetric_part(&(&frame.r2 + frame.d2_s_d2(p)));
    let w = linalg::spd_inverse(&lambda2).ok_or(Error::SingularLambda2 { t })?;
    let theta1 = frame.b2.transpose() * p + frame.c_s_d2(p).transpose();
    Ok(-(p * &frame.a
        + frame.a.transpose() * p
        + frame.c_s_c(p)
        + &frame.q
        - theta1.transpose() * &w * &theta1))
}

fn p2_rate(
    p2: &DMatrix<f64>,
    p1: &DMatrix<f64>,
    frame: &CoefficientFrame,
    t: f64,
) -> Result<DMatrix<f64>> {
    let maps = StructureMaps::eval(p1, frame, t)?;
    Ok(-(p2 * &maps.a_tilde + maps.a_tilde.transpose() * p2 + &maps.q_tilde
        - p2 * &maps.n_map * p2))
}

fn classic_rate(k: &DMatrix<f64>, frame: &CoefficientFrame, t: f64) -> Result<DMatrix<f64>> {
    let l = frame.b1.ncols() + frame.b2.ncols();
    let n = frame.a.nrows();
    let d = frame.c.len();

    // Stacked blocks B = (B1, B2), D^j = (D1^j, D2^j), R = diag(R1, R2).
    let mut b = DMatrix::zeros(n, l);
    b.view_mut((0, 0), (n, frame.b1.ncols())).copy_from(&frame.b1);
    b.view_mut((0, frame.b1.ncols()), (n, frame.b2.ncols()))
        .copy_from(&frame.b2);
    let mut r = DMatrix::zeros(l, l);
    r.view_mut((0, 0), (frame.r1.nrows(), frame.r1.nrows()))
        .copy_from(&frame.r1);
    r.view_mut(
        (frame.r1.nrows(), frame.r1.nrows()),
        (frame.r2.nrows(), frame.r2.nrows()),
    )
    .copy_from(&frame.r2);

    let mut ckd = DMatrix::zeros(n, l);
    let mut dkd = DMatrix::zeros(l, l);
    for j in 0..d {
        let mut dj = DMatrix::zeros(n, l);
        dj.view_mut((0, 0), (n, frame.d1[j].ncols()))
            .copy_from(&frame.d1[j]);
        dj.view_mut((0, frame.d1[j].ncols()), (n, frame.d2[j].ncols()))
            .copy_from(&frame.d2[j]);
        ckd += frame.c[j].transpose() * k * &dj;
        dkd += dj.transpose() * k * dj;
    }

    let lambda = linalg::symmetric_part(&(r + dkd));
    let lambda_inv = linalg::spd_inverse(&lambda).ok_or(Error::SingularLambda { t })?;
    let phi = k * &b + ckd;
    Ok(-(frame.a.transpose() * k + k * &frame.a + frame.c_s_c(k) + &frame.q
        - &phi * &lambda_inv * phi.transpose()))
}

// ---------------------------------------------------------------------------
// Backward RK4 sweeps
// ---------------------------------------------------------------------------

fn check_node(
    m: &DMatrix<f64>,
    what: &str,
    t: f64,
    require_strictly_positive: bool,
) -> Result<()> {
    if m.norm() > BLOWUP_LIMIT {
        return Err(Error::BlowUp {
            what: what.into(),
            t,
            path: None,
        });
    }
    let min_eig = linalg::min_sym_eig(m);
    if min_eig < -NODE_PSD_SLACK || (require_strictly_positive && min_eig <= 0.0) {
        return Err(Error::NotPositive {
            what: what.into(),
            t,
            min_eig,
        });
    }
    Ok(())
}

/// One backward RK4 step of a single matrix equation, stages symmetrized.
fn rk4_back<F>(y: &DMatrix<f64>, h: f64, mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let k1 = f(y)?;
    let y1 = linalg::symmetric_part(&(y - (h / 2.0) * &k1));
    let k2 = f(&y1)?;
    let y2 = linalg::symmetric_part(&(y - (h / 2.0) * &k2));
    let k3 = f(&y2)?;
    let y3 = linalg::symmetric_part(&(y - h * &k3));
    let k4 = f(&y3)?;
    Ok(linalg::symmetric_part(
        &(y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)),
    ))
}

/// Solve the P1 equation backward from `P1(T) = G`. Nodes are
/// symmetrized, checked against blow-up, and in the singular classes
/// checked strictly positive.
pub fn solve_p1(spec: &ProblemSpec, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    let strict = spec.is_singular();
    let mut out = vec![DMatrix::zeros(0, 0); grid.node_count()];
    out[grid.steps()] = spec.terminal_weight.clone();
    for i in (0..grid.steps()).rev() {
        let t = grid.time(i);
        let frame = spec.frame_at(t)?;
        out[i] = rk4_back(&out[i + 1], grid.dt(), |p| p1_rate(p, frame, t))?;
        check_node(&out[i], "P1", t, strict)?;
    }
    Ok(out)
}

/// Solve the P2 equation backward from `P2(T) = G` given the P1 node
/// trajectory on the same grid. Interior stage values of P1 are obtained
/// by stepping the P1 equation jointly within each interval.
pub fn solve_p2(
    spec: &ProblemSpec,
    grid: &TimeGrid,
    p1: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    if p1.len() != grid.node_count() {
        return Err(Error::GridMismatch {
            details: format!(
                "P1 trajectory has {} nodes, grid has {}",
                p1.len(),
                grid.node_count()
            ),
        });
    }
    let h = grid.dt();
    let mut out = vec![DMatrix::zeros(0, 0); grid.node_count()];
    out[grid.steps()] = spec.terminal_weight.clone();
    for i in (0..grid.steps()).rev() {
        let t = grid.time(i);
        let frame = spec.frame_at(t)?;
        let sym = linalg::symmetric_part;

        let s0 = &p1[i + 1];
        let y0 = &out[i + 1];
        let k1s = p1_rate(s0, frame, t)?;
        let k1p = p2_rate(y0, s0, frame, t)?;
        let s1 = sym(&(s0 - (h / 2.0) * &k1s));
        let y1 = sym(&(y0 - (h / 2.0) * &k1p));
        let k2s = p1_rate(&s1, frame, t)?;
        let k2p = p2_rate(&y1, &s1, frame, t)?;
        let s2 = sym(&(s0 - (h / 2.0) * &k2s));
        let y2 = sym(&(y0 - (h / 2.0) * &k2p));
        let k3s = p1_rate(&s2, frame, t)?;
        let k3p = p2_rate(&y2, &s2, frame, t)?;
        let s3 = sym(&(s0 - h * &k3s));
        let y3 = sym(&(y0 - h * &k3p));
        let k4p = p2_rate(&y3, &s3, frame, t)?;

        out[i] = sym(&(y0 - (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)));
        check_node(&out[i], "P2", t, false)?;
    }
    Ok(out)
}

/// Solve the classical fully-adapted Riccati equation backward from
/// `K(T) = G` in the stacked blocks.
pub fn solve_classic(spec: &ProblemSpec, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
    let mut out = vec![DMatrix::zeros(0, 0); grid.node_count()];
    out[grid.steps()] = spec.terminal_weight.clone();
    for i in (0..grid.steps()).rev() {
        let t = grid.time(i);
        let frame = spec.frame_at(t)?;
        out[i] = rk4_back(&out[i + 1], grid.dt(), |k| classic_rate(k, frame, t))?;
        check_node(&out[i], "K", t, false)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Solution containers
// ---------------------------------------------------------------------------

/// Time-sampled solutions of the decoupled pair, plus the classical
/// baseline when requested.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p1: Vec<DMatrix<f64>>,
    pub p2: Vec<DMatrix<f64>>,
    pub k_classic: Option<Vec<DMatrix<f64>>>,
}

impl RiccatiSolution {
    pub fn solve(spec: &ProblemSpec, grid: &TimeGrid) -> Result<RiccatiSolution> {
        let p1 = solve_p1(spec, grid)?;
        let p2 = solve_p2(spec, grid, &p1)?;
        Ok(RiccatiSolution {
            grid: *grid,
            p1,
            p2,
            k_classic: None,
        })
    }

    pub fn solve_with_classic(spec: &ProblemSpec, grid: &TimeGrid) -> Result<RiccatiSolution> {
        let mut sol = RiccatiSolution::solve(spec, grid)?;
        sol.k_classic = Some(solve_classic(spec, grid)?);
        Ok(sol)
    }

    /// Optimal value `0.5 <P2(0) x0, x0>`.
    pub fn predicted_value(&self, x0: &DVector<f64>) -> f64 {
        0.5 * (x0.transpose() * &self.p2[0] * x0)[(0, 0)]
    }

    /// Classical fully-adapted value `0.5 <K(0) x0, x0>`.
    pub fn classical_value(&self, x0: &DVector<f64>) -> Option<f64> {
        self.k_classic
            .as_ref()
            .map(|k| 0.5 * (x0.transpose() * &k[0] * x0)[(0, 0)])
    }

    /// One row per node: `t`, then row-major P1, P2 and (when present) K,
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.p1[0].nrows();
        let mut out = String::from("t");
        let mut header = |name: &str| {
            for r in 0..n {
                for c in 0..n {
                    out.push_str(&format!(",{name}_{r}_{c}"));
                }
            }
        };
        header("p1");
        header("p2");
        if self.k_classic.is_some() {
            header("k");
        }
        out.push('\n');
        for i in 0..self.grid.node_count() {
            out.push_str(&format!("{:.16e}", self.grid.time(i)));
            let mut row = |m: &DMatrix<f64>| {
                for r in 0..n {
                    for c in 0..n {
                        out.push_str(&format!(",{:.16e}", m[(r, c)]));
                    }
                }
            };
            row(&self.p1[i]);
            row(&self.p2[i]);
            if let Some(k) = &self.k_classic {
                row(&k[i]);
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stationary (algebraic) pair by horizon extension
// ---------------------------------------------------------------------------

/// Stationary solutions and the horizon trace that produced them.
#[derive(Debug, Clone)]
pub struct AREResult {
    pub p1inf: DMatrix<f64>,
    pub p2inf: DMatrix<f64>,
    /// Frobenius norm of the stationary P1 equation at `p1inf`.
    pub residual1: f64,
    /// Frobenius norm of the stationary P2 equation at `p2inf`.
    pub residual2: f64,
    /// Horizons at which the finite-horizon pair was read off.
    pub horizons_used: Vec<f64>,
    /// `P2^T(0)` at each recorded horizon.
    pub p2_trace: Vec<DMatrix<f64>>,
    /// Whether the trace was nondecreasing in the PSD order (slack 1e-10).
    pub p2_monotone: bool,
}

/// Solve the stationary pair for a time-invariant problem with `Q > 0`.
///
/// Finite-horizon pairs with terminal weight zero are solved on horizons
/// `t_step, 2 t_step, ...` (the terminal-weight choice makes the backward
/// flow autonomous, so each longer horizon continues the previous sweep);
/// iteration stops when two consecutive read-offs differ by less than
/// `tol` in Frobenius norm. The stationary residuals are then verified
/// below `10 tol`, positivity of both limits is checked, and the trace of
/// `P2^T(0)` is recorded with its monotonicity flag. Divergence or
/// reaching `t_max` reports `NoConvergence`: the system is then likely
/// not stabilizable through the random control channel.
pub fn solve_algebraic(
    spec: &ProblemSpec,
    tol: f64,
    t_step: f64,
    t_max: f64,
) -> Result<AREResult> {
    if !spec.is_time_invariant() {
        return Err(Error::Inadmissible {
            details: "time-invariant (single-interval) schedule required".into(),
        });
    }
    if !(tol > 0.0 && t_step > 0.0 && t_max >= t_step) {
        return Err(Error::Parse(
            "need tol > 0, t_step > 0 and t_max >= t_step".into(),
        ));
    }
    let frame = &spec.schedule.frames[0];
    let q_min = linalg::min_sym_eig(&frame.q);
    if q_min < spec.tolerances.uniform {
        return Err(Error::Inadmissible {
            details: format!(
                "stationary problem requires Q uniformly positive definite, min eig Q = {q_min:.3e}"
            ),
        });
    }

    let n = spec.dims.n;
    let steps_per_leg = ((t_step * ARE_STEPS_PER_UNIT).ceil() as usize).max(1);
    let h = t_step / steps_per_leg as f64;
    let sym = linalg::symmetric_part;

    // Extending the horizon in tau = T - t runs the backward flow
    // further, so each substep is a backward RK4 step of the joint pair.
    let mut s = DMatrix::zeros(n, n);
    let mut p = DMatrix::zeros(n, n);
    let mut horizons = Vec::new();
    let mut trace: Vec<DMatrix<f64>> = Vec::new();
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    let max_legs = (t_max / t_step).round() as usize;
    for leg in 1..=max_legs.max(1) {
        let tau_leg = leg as f64 * t_step;
        for _ in 0..steps_per_leg {
            let k1s = p1_rate(&s, frame, tau_leg)?;
            let k1p = p2_rate(&p, &s, frame, tau_leg)?;
            let s1 = sym(&(&s - (h / 2.0) * &k1s));
            let p1s = sym(&(&p - (h / 2.0) * &k1p));
            let k2s = p1_rate(&s1, frame, tau_leg)?;
            let k2p = p2_rate(&p1s, &s1, frame, tau_leg)?;
            let s2 = sym(&(&s - (h / 2.0) * &k2s));
            let p2s = sym(&(&p - (h / 2.0) * &k2p));
            let k3s = p1_rate(&s2, frame, tau_leg)?;
            let k3p = p2_rate(&p2s, &s2, frame, tau_leg)?;
            let s3 = sym(&(&s - h * &k3s));
            let p3s = sym(&(&p - h * &k3p));
            let k4s = p1_rate(&s3, frame, tau_leg)?;
            let k4p = p2_rate(&p3s, &s3, frame, tau_leg)?;
            s = sym(&(&s - (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)));
            p = sym(&(&p - (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)));
            if s.norm() > BLOWUP_LIMIT || p.norm() > BLOWUP_LIMIT {
                return Err(Error::NoConvergence { reached: tau_leg });
            }
        }
        horizons.push(tau_leg);
        trace.push(p.clone());

        if let Some((s_prev, p_prev)) = prev.take() {
            if (&s - &s_prev).norm() < tol && (&p - &p_prev).norm() < tol {
                return finish_are(spec, frame, s, p, horizons, trace, tol);
            }
        }
        prev = Some((s.clone(), p.clone()));
    }
    Err(Error::NoConvergence { reached: t_max })
}

fn finish_are(
    spec: &ProblemSpec,
    frame: &CoefficientFrame,
    p1inf: DMatrix<f64>,
    p2inf: DMatrix<f64>,
    horizons_used: Vec<f64>,
    p2_trace: Vec<DMatrix<f64>>,
    tol: f64,
) -> Result<AREResult> {
    let t_end = *horizons_used.last().unwrap();
    let residual1 = p1_rate(&p1inf, frame, t_end)?.norm();
    let residual2 = p2_rate(&p2inf, &p1inf, frame, t_end)?.norm();
    let limit = tol * 10.0;
    for residual in [residual1, residual2] {
        if residual > limit {
            return Err(Error::AreResidual { residual, limit });
        }
    }
    for (m, what) in [(&p1inf, "P1inf"), (&p2inf, "P2inf")] {
        let min_eig = linalg::min_sym_eig(m);
        if min_eig <= 0.0 {
            return Err(Error::NotPositive {
                what: what.into(),
                t: t_end,
                min_eig,
            });
        }
    }
    let p2_monotone = p2_trace
        .windows(2)
        .all(|w| linalg::min_sym_eig(&(&w[1] - &w[0])) >= -1e-10);
    let _ = spec;
    Ok(AREResult {
        p1inf,
        p2inf,
        residual1,
        residual2,
        horizons_used,
        p2_trace,
        p2_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::scalar_problem;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn grid_of(spec: &ProblemSpec, steps: usize) -> TimeGrid {
        TimeGrid::aligned(spec, steps).unwrap()
    }

    #[test]
    fn structure_maps_collapse_at_zero() {
        let mut spec = scalar_problem().q(1.0).b1(2.0).b2(3.0).r1(0.5).r2(0.25).build();
        spec.validate().unwrap();
        let frame = &spec.schedule.frames[0];
        let maps = StructureMaps::eval(&DMatrix::zeros(1, 1), frame, 0.0).unwrap();
        assert_eq!(maps.lambda2[(0, 0)], 0.25);
        assert_eq!(maps.lambda_hat[(0, 0)], 0.5);
        assert_eq!(maps.u[(0, 0)], 0.0);
        assert_eq!(maps.q_tilde[(0, 0)], 1.0);
        assert_eq!(maps.a_tilde[(0, 0)], 0.0);
        // N = B2 R2^-1 B2' + B1 R1^-1 B1' = 9/0.25 + 4/0.5 = 44.
        assert_abs_diff_eq!(maps.n_map[(0, 0)], 44.0, epsilon = 1e-12);
        assert_eq!(maps.theta1, maps.theta2);
    }

    #[test]
    fn structure_maps_without_control_noise() {
        let mut spec = scalar_problem()
            .q(1.0)
            .a(0.5)
            .c(2.0)
            .b1(1.0)
            .b2(1.0)
            .r1(1.0)
            .r2(1.0)
            .build();
        spec.validate().unwrap();
        let frame = &spec.schedule.frames[0];
        let s = DMatrix::from_row_slice(1, 1, &[0.7]);
        let maps = StructureMaps::eval(&s, frame, 0.0).unwrap();
        assert_eq!(maps.u[(0, 0)], 0.7);
        // Qtilde = Q + C'SC = 1 + 4 * 0.7
        assert_abs_diff_eq!(maps.q_tilde[(0, 0)], 1.0 + 4.0 * 0.7, epsilon = 1e-14);
        assert_eq!(maps.a_tilde[(0, 0)], 0.5);
        assert_abs_diff_eq!(maps.n_map[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_lambda2_is_reported() {
        let mut spec = scalar_problem().q(1.0).r1(1.0).r2(1.0).build();
        spec.validate().unwrap();
        let mut frame = spec.schedule.frames[0].clone();
        frame.r2[(0, 0)] = 0.0; // no control noise either -> Lambda2 = 0
        let err = StructureMaps::eval(&DMatrix::zeros(1, 1), &frame, 0.25).unwrap_err();
        assert!(matches!(err, Error::SingularLambda2 { t } if t == 0.25));
    }

    #[test]
    fn p1_fixed_point_for_zero_coefficients() {
        // All coefficients zero, G = I (n = 2): P1 stays at I.
        let mut spec = scalar_problem().build();
        spec.dims = crate::model::Dims { n: 2, l1: 1, l2: 1, d: 1 };
        let f = &mut spec.schedule.frames[0];
        f.a = DMatrix::zeros(2, 2);
        f.b1 = DMatrix::zeros(2, 1);
        f.b2 = DMatrix::zeros(2, 1);
        f.c = vec![DMatrix::zeros(2, 2)];
        f.d1 = vec![DMatrix::zeros(2, 1)];
        f.d2 = vec![DMatrix::zeros(2, 1)];
        f.q = DMatrix::zeros(2, 2);
        spec.terminal_weight = DMatrix::identity(2, 2);
        spec.initial_state = DVector::from_vec(vec![1.0, 0.0]);
        spec.validate().unwrap();
        let grid = grid_of(&spec, 64);
        let p1 = solve_p1(&spec, &grid).unwrap();
        for m in &p1 {
            assert!((m - DMatrix::identity(2, 2)).norm() < 1e-14);
        }
    }

    #[test]
    fn p1_matches_linear_lyapunov_solution() {
        // q = 1, everything else zero: P1(t) = T - t.
        let mut spec = scalar_problem().q(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 128);
        let p1 = solve_p1(&spec, &grid).unwrap();
        for (i, m) in p1.iter().enumerate() {
            assert_abs_diff_eq!(m[(0, 0)], 1.0 - grid.time(i), epsilon = 1e-13);
        }
    }

    #[test]
    fn p1_matches_scalar_riccati_closed_form() {
        // P' = P^2, P(T) = g: P(t) = g / (1 + g (T - t)).
        let mut spec = scalar_problem().b2(1.0).g(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 512);
        let p1 = solve_p1(&spec, &grid).unwrap();
        for (i, m) in p1.iter().enumerate() {
            let exact = 1.0 / (1.0 + (1.0 - grid.time(i)));
            assert_abs_diff_eq!(m[(0, 0)], exact, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(p1[0][(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn p2_equals_p1_without_deterministic_channel() {
        let mut spec = scalar_problem().no_l1().b2(1.0).g(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 256);
        let p1 = solve_p1(&spec, &grid).unwrap();
        let p2 = solve_p2(&spec, &grid, &p1).unwrap();
        for (a, b) in p1.iter().zip(p2.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn p2_vanishes_for_zero_cost() {
        let mut spec = scalar_problem().a(0.3).b1(1.0).b2(1.0).c(0.2).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 64);
        let p1 = solve_p1(&spec, &grid).unwrap();
        let p2 = solve_p2(&spec, &grid, &p1).unwrap();
        for m in &p2 {
            assert_eq!(m[(0, 0)], 0.0);
        }
    }

    #[test]
    fn p2_matches_tanh_oracle_without_noise() {
        // No noise, b1 = b2 = r1 = r2 = q = 1, g = 0:
        // P2 = K with K(t) = tanh(sqrt(2) (T - t)) / sqrt(2).
        let mut spec = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 512);
        let p1 = solve_p1(&spec, &grid).unwrap();
        let p2 = solve_p2(&spec, &grid, &p1).unwrap();
        let s2 = 2.0_f64.sqrt();
        for (i, m) in p2.iter().enumerate() {
            let exact = (s2 * (1.0 - grid.time(i))).tanh() / s2;
            assert_abs_diff_eq!(m[(0, 0)], exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn classic_matches_tanh_oracle_and_p2() {
        let mut spec = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 512);
        let k = solve_classic(&spec, &grid).unwrap();
        let s2 = 2.0_f64.sqrt();
        assert_abs_diff_eq!(k[0][(0, 0)], s2.tanh() / s2, epsilon = 1e-10);

        let p1 = solve_p1(&spec, &grid).unwrap();
        let p2 = solve_p2(&spec, &grid, &p1).unwrap();
        for (a, b) in k.iter().zip(p2.iter()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn classic_fixed_point_for_zero_coefficients() {
        let mut spec = scalar_problem().g(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 32);
        let k = solve_classic(&spec, &grid).unwrap();
        for m in &k {
            assert_eq!(m[(0, 0)], 1.0);
        }
    }

    #[test]
    fn classic_equals_p1_without_deterministic_channel() {
        let mut spec = scalar_problem().no_l1().b2(1.0).d2(0.3).c(0.4).q(1.0).g(1.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 256);
        let p1 = solve_p1(&spec, &grid).unwrap();
        let k = solve_classic(&spec, &grid).unwrap();
        for (a, b) in p1.iter().zip(k.iter()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn blowup_is_reported_with_time() {
        let mut spec = scalar_problem().a(5.0).q(1e6).horizon(10.0).build();
        spec.validate().unwrap();
        let grid = grid_of(&spec, 512);
        match solve_p1(&spec, &grid) {
            Err(Error::BlowUp { what, t, .. }) => {
                assert_eq!(what, "P1");
                assert!(t < 10.0);
            }
            other => panic!("expected BlowUp, got {other:?}"),
        }
    }

    #[test]
    fn are_scalar_reference() {
        let mut spec = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let are = solve_algebraic(&spec, 1e-8, 5.0, 500.0).unwrap();
        assert_abs_diff_eq!(are.p1inf[(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(are.p2inf[(0, 0)], 0.5_f64.sqrt(), epsilon = 1e-6);
        assert!(are.residual1 <= 1e-5 && are.residual2 <= 1e-5);
        assert!(are.p2_monotone);
    }

    #[test]
    fn are_reduces_to_p1_without_deterministic_channel() {
        let mut spec = scalar_problem().no_l1().b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let are = solve_algebraic(&spec, 1e-8, 5.0, 500.0).unwrap();
        assert_abs_diff_eq!(are.p1inf[(0, 0)], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(are.p2inf[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn are_detects_unstabilizable_drift() {
        let mut spec = scalar_problem().a(1.0).b1(1.0).q(1.0).build();
        spec.validate().unwrap();
        match solve_algebraic(&spec, 1e-8, 5.0, 500.0) {
            Err(Error::NoConvergence { .. }) => {}
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn are_rejects_time_varying_schedules() {
        let mut spec = scalar_problem().b2(1.0).q(1.0).build();
        let frame = spec.schedule.frames[0].clone();
        spec.schedule.breakpoints = vec![0.0, 0.5, 1.0];
        spec.schedule.frames.push(frame);
        spec.validate().unwrap();
        assert!(matches!(
            solve_algebraic(&spec, 1e-8, 5.0, 500.0),
            Err(Error::Inadmissible { .. })
        ));
    }
}
