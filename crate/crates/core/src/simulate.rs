//! Mean ODE integration, Euler-Maruyama path simulation and Monte Carlo
//! cost estimation.
//!
//! The mean entering the feedback is the deterministic solution of the
//! mean ODE, never the empirical ensemble mean: paths are decoupled and
//! embarrassingly parallel. Results are a pure function of
//! `(seed, path index)` — each path owns one ChaCha stream selected by
//! its index, so worker count and scheduling order cannot change a
//! single bit of the output.
//!
//! Two discretizations of the mean coexist on purpose:
//!
//! - [`simulate_mean`] integrates the mean ODE with RK4 and is the
//!   high-accuracy reference for the mean dynamics;
//! - [`simulate_paths`] carries its own left-point Euler mean skeleton,
//!   built from the very same step kernel as the paths. Feedback and
//!   recorded controls use the skeleton, which makes every path collapse
//!   onto it bitwise when the diffusion vanishes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{CoefficientFrame, ProblemSpec};
use crate::riccati::RiccatiSolution;
use crate::synthesis::GainSchedule;

/// Euclidean-norm limit on any simulated state.
pub const PATH_BLOWUP_LIMIT: f64 = 1e12;

/// Node-sampled affine feedback:
/// `u1 = F1 Xbar + h1` (deterministic by construction) and
/// `u2 = F2 X + F2bar Xbar + h2`.
#[derive(Debug, Clone)]
pub struct AffinePolicy {
    pub grid: TimeGrid,
    pub f1: Vec<DMatrix<f64>>,
    pub h1: Vec<DVector<f64>>,
    pub f2: Vec<DMatrix<f64>>,
    pub f2bar: Vec<DMatrix<f64>>,
    pub h2: Vec<DVector<f64>>,
}

impl AffinePolicy {
    /// The optimal feedback: `F1 = M1`, `F2 = M2`, `F2bar = M3 - M2`,
    /// no offsets.
    pub fn optimal(gains: &GainSchedule) -> AffinePolicy {
        let nodes = gains.grid.node_count();
        let l1 = gains.m1[0].nrows();
        let l2 = gains.m2[0].nrows();
        AffinePolicy {
            grid: gains.grid,
            f1: gains.m1.clone(),
            h1: vec![DVector::zeros(l1); nodes],
            f2: gains.m2.clone(),
            f2bar: gains.m3.iter().zip(gains.m2.iter()).map(|(a, b)| a - b).collect(),
            h2: vec![DVector::zeros(l2); nodes],
        }
    }

    /// All-zero controls on `grid` for a problem with the given channel
    /// widths.
    pub fn zero(grid: TimeGrid, n: usize, l1: usize, l2: usize) -> AffinePolicy {
        let nodes = grid.node_count();
        AffinePolicy {
            grid,
            f1: vec![DMatrix::zeros(l1, n); nodes],
            h1: vec![DVector::zeros(l1); nodes],
            f2: vec![DMatrix::zeros(l2, n); nodes],
            f2bar: vec![DMatrix::zeros(l2, n); nodes],
            h2: vec![DVector::zeros(l2); nodes],
        }
    }

    fn check(&self, spec: &ProblemSpec) -> Result<()> {
        let (n, l1, l2) = (spec.dims.n, spec.dims.l1, spec.dims.l2);
        let nodes = self.grid.node_count();
        for (name, len) in [
            ("f1", self.f1.len()),
            ("h1", self.h1.len()),
            ("f2", self.f2.len()),
            ("f2bar", self.f2bar.len()),
            ("h2", self.h2.len()),
        ] {
            if len != nodes {
                return Err(Error::GridMismatch {
                    details: format!("policy {name} has {len} nodes, grid has {nodes}"),
                });
            }
        }
        for i in 0..nodes {
            if self.f1[i].shape() != (l1, n)
                || self.f2[i].shape() != (l2, n)
                || self.f2bar[i].shape() != (l2, n)
                || self.h1[i].len() != l1
                || self.h2[i].len() != l2
            {
                return Err(Error::dims(
                    format!("policy node {i}"),
                    format!("F1 {l1}x{n}, F2/F2bar {l2}x{n}"),
                    format!(
                        "F1 {:?}, F2 {:?}, F2bar {:?}",
                        self.f1[i].shape(),
                        self.f2[i].shape(),
                        self.f2bar[i].shape()
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn ensure_usable_grid(spec: &ProblemSpec, grid: &TimeGrid) -> Result<()> {
    if grid.horizon() != spec.horizon {
        return Err(Error::GridMismatch {
            details: format!(
                "grid horizon {} differs from problem horizon {}",
                grid.horizon(),
                spec.horizon
            ),
        });
    }
    let steps = grid.steps() as f64;
    for &b in &spec.schedule.breakpoints[1..spec.schedule.breakpoints.len() - 1] {
        let x = b / spec.horizon * steps;
        if (x - x.round()).abs() > 1e-9 * steps {
            return Err(Error::GridMismatch {
                details: format!("breakpoint {b} does not sit on a grid node"),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step kernels (shared by the mean skeleton and the paths, so that the
// two recursions are bitwise identical when the diffusion vanishes)
// ---------------------------------------------------------------------------

/// `out = f2 x + g2` where `g2` already holds `F2bar Xbar + h2`.
#[inline]
fn eval_u2(f2: &DMatrix<f64>, x: &[f64], g2: &[f64], out: &mut [f64]) {
    for r in 0..out.len() {
        let mut acc = g2[r];
        for (c, &xc) in x.iter().enumerate() {
            acc += f2[(r, c)] * xc;
        }
        out[r] = acc;
    }
}

/// One Euler-Maruyama step. `z` holds the `d` standard normal draws
/// (already sign-adjusted for antithetic paths); `None` integrates the
/// drift only, which is exactly the mean skeleton recursion.
#[inline]
fn euler_step(
    frame: &CoefficientFrame,
    dt: f64,
    sqrt_dt: f64,
    x: &[f64],
    u1: &[f64],
    u2: &[f64],
    z: Option<&[f64]>,
    out: &mut [f64],
) {
    let n = x.len();
    for r in 0..n {
        let mut acc = 0.0;
        for (c, &xc) in x.iter().enumerate() {
            acc += frame.a[(r, c)] * xc;
        }
        for (c, &uc) in u1.iter().enumerate() {
            acc += frame.b1[(r, c)] * uc;
        }
        for (c, &uc) in u2.iter().enumerate() {
            acc += frame.b2[(r, c)] * uc;
        }
        out[r] = x[r] + dt * acc;
    }
    if let Some(z) = z {
        for (j, &zj) in z.iter().enumerate() {
            for r in 0..n {
                let mut acc = 0.0;
                for (c, &xc) in x.iter().enumerate() {
                    acc += frame.c[j][(r, c)] * xc;
                }
                for (c, &uc) in u1.iter().enumerate() {
                    acc += frame.d1[j][(r, c)] * uc;
                }
                for (c, &uc) in u2.iter().enumerate() {
                    acc += frame.d2[j][(r, c)] * uc;
                }
                out[r] += sqrt_dt * zj * acc;
            }
        }
    }
}

/// The ChaCha stream owned by one path. Antithetic pairs share a stream;
/// the odd member negates every draw.
fn path_stream(seed: u64, path: usize, antithetic: bool) -> (ChaCha8Rng, f64) {
    let (stream, sign) = if antithetic {
        ((path / 2) as u64, if path % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (path as u64, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (rng, sign)
}

// ---------------------------------------------------------------------------
// Monte Carlo ensemble
// ---------------------------------------------------------------------------

/// Ensemble of realized paths plus the deterministic mean skeleton and
/// the controls that produced them, all in flat row-major storage.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub n: usize,
    pub l1: usize,
    pub l2: usize,
    pub d: usize,
    /// `(N+1) * n`: left-point Euler mean skeleton.
    pub mean_path: Vec<f64>,
    /// `P * (N+1) * n`.
    pub paths: Vec<f64>,
    /// `N * l1`: deterministic controls, shared across paths.
    pub controls1: Vec<f64>,
    /// `P * N * l2`.
    pub controls2: Vec<f64>,
}

impl TrajectoryBundle {
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let stride = self.grid.node_count() * self.n;
        let base = path * stride + node * self.n;
        &self.paths[base..base + self.n]
    }

    pub fn mean(&self, node: usize) -> &[f64] {
        &self.mean_path[node * self.n..(node + 1) * self.n]
    }

    pub fn u1(&self, step: usize) -> &[f64] {
        &self.controls1[step * self.l1..(step + 1) * self.l1]
    }

    pub fn u2(&self, path: usize, step: usize) -> &[f64] {
        let stride = self.grid.steps() * self.l2;
        let base = path * stride + step * self.l2;
        &self.controls2[base..base + self.l2]
    }

    /// Regenerate the `N x d` standard normal draws of one path (sign
    /// included), exactly as the simulation consumed them.
    pub fn noise_draws(&self, path: usize) -> Vec<f64> {
        let (mut rng, sign) = path_stream(self.seed, path, self.antithetic);
        (0..self.grid.steps() * self.d)
            .map(|_| sign * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Simulate `n_paths` Euler-Maruyama paths under an affine policy.
///
/// The deterministic control and the mean-feedback offset are
/// precomputed once per step from the mean skeleton; every path then
/// evolves independently on its own random stream.
pub fn simulate_paths(
    spec: &ProblemSpec,
    policy: &AffinePolicy,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Result<TrajectoryBundle> {
    if n_paths == 0 {
        return Err(Error::EmptyBundle);
    }
    policy.check(spec)?;
    ensure_usable_grid(spec, &policy.grid)?;

    let grid = policy.grid;
    let (n, l1, l2, d) = (spec.dims.n, spec.dims.l1, spec.dims.l2, spec.dims.d);
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    // Mean skeleton, shared controls and per-step frames.
    let mut mean_path = vec![0.0; (steps + 1) * n];
    let mut controls1 = vec![0.0; steps * l1];
    let mut g2 = vec![0.0; steps * l2];
    let mut frames: Vec<&CoefficientFrame> = Vec::with_capacity(steps);
    for (r, &v) in spec.initial_state.iter().enumerate() {
        mean_path[r] = v;
    }
    let mut u2_buf = vec![0.0; l2];
    for i in 0..steps {
        let frame = spec.frame_at(grid.time(i))?;
        frames.push(frame);
        let (mean_i, mean_rest) = mean_path[i * n..].split_at_mut(n);
        // u1_i = F1 Xbar + h1
        for r in 0..l1 {
            let mut acc = policy.h1[i][r];
            for c in 0..n {
                acc += policy.f1[i][(r, c)] * mean_i[c];
            }
            controls1[i * l1 + r] = acc;
        }
        // g2_i = F2bar Xbar + h2
        for r in 0..l2 {
            let mut acc = policy.h2[i][r];
            for c in 0..n {
                acc += policy.f2bar[i][(r, c)] * mean_i[c];
            }
            g2[i * l2 + r] = acc;
        }
        eval_u2(&policy.f2[i], mean_i, &g2[i * l2..(i + 1) * l2], &mut u2_buf);
        let (next, _) = mean_rest.split_at_mut(n);
        euler_step(
            frame,
            dt,
            sqrt_dt,
            mean_i,
            &controls1[i * l1..(i + 1) * l1],
            &u2_buf,
            None,
            next,
        );
    }

    let path_stride = (steps + 1) * n;
    let ctrl_stride = steps * l2;
    let mut paths = vec![0.0; n_paths * path_stride];
    // A dummy stride keeps the chunked zip well-formed when l2 = 0.
    let ctrl_chunk = ctrl_stride.max(1);
    let mut controls2 = vec![0.0; n_paths * ctrl_chunk];
    let mut failed_step = vec![usize::MAX; n_paths];

    let x0: Vec<f64> = spec.initial_state.iter().copied().collect();
    paths
        .par_chunks_mut(path_stride)
        .zip(controls2.par_chunks_mut(ctrl_chunk))
        .zip(failed_step.par_iter_mut())
        .enumerate()
        .for_each(|(p, ((row, ctrl), failed))| {
            let (mut rng, sign) = path_stream(seed, p, antithetic);
            let mut z = vec![0.0; d];
            let mut u2 = vec![0.0; l2];
            row[..n].copy_from_slice(&x0);
            for i in 0..steps {
                for zj in z.iter_mut() {
                    *zj = sign * rng.sample::<f64, _>(StandardNormal);
                }
                let (x, rest) = row[i * n..].split_at_mut(n);
                eval_u2(&policy.f2[i], x, &g2[i * l2..(i + 1) * l2], &mut u2);
                if l2 > 0 {
                    ctrl[i * l2..(i + 1) * l2].copy_from_slice(&u2);
                }
                let (next, _) = rest.split_at_mut(n);
                euler_step(
                    frames[i],
                    dt,
                    sqrt_dt,
                    x,
                    &controls1[i * l1..(i + 1) * l1],
                    &u2,
                    Some(&z),
                    next,
                );
                let norm_sq: f64 = next.iter().map(|v| v * v).sum();
                if norm_sq > PATH_BLOWUP_LIMIT * PATH_BLOWUP_LIMIT {
                    *failed = i + 1;
                    return;
                }
            }
        });

    if let Some((p, &step)) = failed_step
        .iter()
        .enumerate()
        .find(|(_, &s)| s != usize::MAX)
    {
        return Err(Error::BlowUp {
            what: "X".into(),
            t: grid.time(step),
            path: Some(p),
        });
    }
    if l2 == 0 {
        controls2.clear();
    }

    Ok(TrajectoryBundle {
        grid,
        n_paths,
        seed,
        antithetic,
        n,
        l1,
        l2,
        d,
        mean_path,
        paths,
        controls1,
        controls2,
    })
}

/// Integrate the mean ODE
/// `Xbar' = (A + B1 F1 + B2 (F2 + F2bar)) Xbar + B1 h1 + B2 h2`
/// with RK4, policy matrices interpolated linearly at stage midpoints.
pub fn simulate_mean(spec: &ProblemSpec, policy: &AffinePolicy) -> Result<Vec<DVector<f64>>> {
    policy.check(spec)?;
    ensure_usable_grid(spec, &policy.grid)?;
    let grid = policy.grid;
    let h = grid.dt();
    let mut out = Vec::with_capacity(grid.node_count());
    out.push(spec.initial_state.clone());

    let node_gen = |frame: &CoefficientFrame, i: usize| -> (DMatrix<f64>, DVector<f64>) {
        let l = &frame.a
            + &frame.b1 * &policy.f1[i]
            + &frame.b2 * (&policy.f2[i] + &policy.f2bar[i]);
        let b = &frame.b1 * &policy.h1[i] + &frame.b2 * &policy.h2[i];
        (l, b)
    };

    for i in 0..grid.steps() {
        let frame = spec.frame_at(grid.time(i))?;
        let (l0, b0) = node_gen(frame, i);
        let (l1m, b1m) = node_gen(frame, i + 1);
        let lm = 0.5 * (&l0 + &l1m);
        let bm = 0.5 * (&b0 + &b1m);

        let x = out[i].clone();
        let k1 = &l0 * &x + &b0;
        let k2 = &lm * (&x + (h / 2.0) * &k1) + &bm;
        let k3 = &lm * (&x + (h / 2.0) * &k2) + &bm;
        let k4 = &l1m * (&x + h * &k3) + &b1m;
        let next = &x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if next.norm() > PATH_BLOWUP_LIMIT {
            return Err(Error::BlowUp {
                what: "Xbar".into(),
                t: grid.time(i + 1),
                path: None,
            });
        }
        out.push(next);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cost estimation
// ---------------------------------------------------------------------------

/// Monte Carlo estimate of the quadratic cost, with the Riccati-predicted
/// optimal value alongside when available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mc_mean: f64,
    /// Sample standard deviation / sqrt(P); 0 when P < 2.
    pub mc_stderr: f64,
    /// `0.5 <P2(0) x0, x0>` when a Riccati solution was supplied.
    pub predicted: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

#[inline]
fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for r in 0..v.len() {
        for c in 0..v.len() {
            acc += v[r] * m[(r, c)] * v[c];
        }
    }
    acc
}

/// Left-point quadrature of the running cost plus the terminal term,
/// averaged over the ensemble:
/// `J = 0.5 [ sum_i (<Q X_i, X_i> + <R1 u1_i, u1_i> + <R2 u2_i, u2_i>) dt
///            + <G X_N, X_N> ]`.
pub fn estimate_cost(
    spec: &ProblemSpec,
    bundle: &TrajectoryBundle,
    riccati: Option<&RiccatiSolution>,
) -> Result<CostEstimate> {
    if bundle.n_paths == 0 {
        return Err(Error::EmptyBundle);
    }
    ensure_usable_grid(spec, &bundle.grid)?;
    let grid = bundle.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let mut frames = Vec::with_capacity(steps);
    for i in 0..steps {
        frames.push(spec.frame_at(grid.time(i))?);
    }
    let g = &spec.terminal_weight;

    let costs: Vec<f64> = (0..bundle.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut acc = 0.0;
            for (i, frame) in frames.iter().enumerate() {
                acc += quad_form(&frame.q, bundle.state(p, i)) * dt;
                acc += quad_form(&frame.r1, bundle.u1(i)) * dt;
                acc += quad_form(&frame.r2, bundle.u2(p, i)) * dt;
            }
            acc += quad_form(g, bundle.state(p, steps));
            0.5 * acc
        })
        .collect();

    // Sequential reductions in path order keep the result independent of
    // the worker count.
    let p = bundle.n_paths as f64;
    let mc_mean = costs.iter().sum::<f64>() / p;
    let mc_stderr = if bundle.n_paths >= 2 {
        let var = costs.iter().map(|c| (c - mc_mean).powi(2)).sum::<f64>() / (p - 1.0);
        (var / p).sqrt()
    } else {
        0.0
    };

    Ok(CostEstimate {
        mc_mean,
        mc_stderr,
        predicted: riccati.map(|r| r.predicted_value(&spec.initial_state)),
        n_paths: bundle.n_paths,
        seed: bundle.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::scalar_problem;
    use approx::assert_abs_diff_eq;

    fn zero_policy(spec: &ProblemSpec, steps: usize) -> AffinePolicy {
        let grid = TimeGrid::aligned(spec, steps).unwrap();
        AffinePolicy::zero(grid, spec.dims.n, spec.dims.l1, spec.dims.l2)
    }

    #[test]
    fn mean_is_constant_without_dynamics() {
        let mut spec = scalar_problem().build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 32);
        let mean = simulate_mean(&spec, &policy).unwrap();
        for x in &mean {
            assert_eq!(x[0], 1.0);
        }
    }

    #[test]
    fn mean_matches_the_exponential() {
        let mut spec = scalar_problem().a(-1.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 512);
        let mean = simulate_mean(&spec, &policy).unwrap();
        assert_abs_diff_eq!(mean[512][0], (-1.0_f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn homogeneous_problem_stays_at_zero() {
        let mut spec = scalar_problem().a(0.5).c(1.0).x0(0.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 64);
        let mean = simulate_mean(&spec, &policy).unwrap();
        assert!(mean.iter().all(|x| x[0] == 0.0));
        let bundle = simulate_paths(&spec, &policy, 16, 3, false).unwrap();
        assert!(bundle.paths.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_diffusion_paths_collapse_onto_the_mean_skeleton() {
        let mut spec = scalar_problem().a(0.3).b1(1.0).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let grid = TimeGrid::aligned(&spec, 64).unwrap();
        let sol = RiccatiSolution::solve(&spec, &grid).unwrap();
        let gains = crate::synthesis::build_gain_schedule(&spec, &grid, &sol).unwrap();
        let policy = AffinePolicy::optimal(&gains);
        let bundle = simulate_paths(&spec, &policy, 8, 9, false).unwrap();
        for p in 0..bundle.n_paths {
            for i in 0..=grid.steps() {
                assert_eq!(bundle.state(p, i), bundle.mean(i));
            }
        }
    }

    #[test]
    fn scalar_multiplicative_noise_moments() {
        // dX = X dW, x0 = 1: E[X_T] = 1 and E[X_T^2] = e at T = 1.
        let mut spec = scalar_problem().c(1.0).b2(0.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 512);
        let bundle = simulate_paths(&spec, &policy, 20_000, 4242, false).unwrap();
        let steps = bundle.grid.steps();
        let p = bundle.n_paths as f64;

        let xs: Vec<f64> = (0..bundle.n_paths)
            .map(|q| bundle.state(q, steps)[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / p;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (p - 1.0);
        let stderr = (var / p).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * stderr,
            "E[X_T] = {mean} +- {stderr}"
        );

        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let mean2 = sq.iter().sum::<f64>() / p;
        let var2 = sq.iter().map(|x| (x - mean2).powi(2)).sum::<f64>() / (p - 1.0);
        let stderr2 = (var2 / p).sqrt();
        let e = std::f64::consts::E;
        let allowance = (3.0 * stderr2).max(0.05 * e);
        assert!(
            (mean2 - e).abs() <= allowance,
            "E[X_T^2] = {mean2} +- {stderr2}"
        );
    }

    #[test]
    fn frozen_problem_has_exact_half_cost() {
        let mut spec = scalar_problem().q(1.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 128);
        let bundle = simulate_paths(&spec, &policy, 64, 1, false).unwrap();
        let cost = estimate_cost(&spec, &bundle, None).unwrap();
        assert_eq!(cost.mc_mean, 0.5);
        assert_eq!(cost.mc_stderr, 0.0);
    }

    #[test]
    fn zero_weights_cost_nothing() {
        let mut spec = scalar_problem().a(0.2).c(0.5).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 64);
        let bundle = simulate_paths(&spec, &policy, 32, 7, false).unwrap();
        let cost = estimate_cost(&spec, &bundle, None).unwrap();
        assert_eq!(cost.mc_mean, 0.0);
        assert_eq!(cost.mc_stderr, 0.0);
    }

    #[test]
    fn bundles_are_bitwise_reproducible_across_pool_sizes() {
        let mut spec = scalar_problem().a(0.1).c(0.8).b2(1.0).q(1.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 128);

        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| simulate_paths(&spec, &policy, 256, 99, false).unwrap());
        let b = pool4.install(|| simulate_paths(&spec, &policy, 256, 99, false).unwrap());
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.controls2, b.controls2);

        let ca = pool1.install(|| estimate_cost(&spec, &a, None).unwrap());
        let cb = pool4.install(|| estimate_cost(&spec, &b, None).unwrap());
        assert_eq!(ca.mc_mean.to_bits(), cb.mc_mean.to_bits());
        assert_eq!(ca.mc_stderr.to_bits(), cb.mc_stderr.to_bits());
    }

    #[test]
    fn antithetic_pairs_mirror_their_draws() {
        let mut spec = scalar_problem().c(1.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 16);
        let bundle = simulate_paths(&spec, &policy, 4, 5, true).unwrap();
        let za = bundle.noise_draws(0);
        let zb = bundle.noise_draws(1);
        for (a, b) in za.iter().zip(zb.iter()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn path_blowup_is_attributed() {
        let mut spec = scalar_problem().a(40.0).horizon(2.0).build();
        spec.validate().unwrap();
        let policy = zero_policy(&spec, 64);
        match simulate_paths(&spec, &policy, 2, 1, false) {
            Err(Error::BlowUp { what, path, .. }) => {
                assert_eq!(what, "X");
                assert!(path.is_some());
            }
            other => panic!("expected BlowUp, got {other:?}"),
        }
    }
}
