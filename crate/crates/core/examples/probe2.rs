//! Scratch measurement: suboptimality separation, 4.1 reduction, order checks.

use mixedlq::builder::scalar_problem;
use mixedlq::model::{CoefficientFrame, Dims};
use mixedlq::simulate::{estimate_cost, simulate_paths, AffinePolicy};
use mixedlq::synthesis::{build_gain_schedule, GainSchedule};
use mixedlq::{ProblemSpec, RiccatiSolution, TimeGrid};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_state_regular(seed: u64) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let mut m = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.random_range(-1.0..1.0_f64));
    let a = m(n, n, 0.6);
    let b1 = m(n, 1, 1.4);
    let b2 = m(n, 1, 1.4);
    let c: Vec<_> = (0..2).map(|_| m(n, n, 0.12)).collect();
    let d1: Vec<_> = (0..2).map(|_| m(n, 1, 0.12)).collect();
    let d2: Vec<_> = (0..2).map(|_| m(n, 1, 0.12)).collect();
    let zq = m(n, n, 0.8);
    let q = &zq * zq.transpose() + DMatrix::identity(n, n) * 0.5;
    let zg = m(n, n, 0.5);
    let g = &zg * zg.transpose();
    let frame = CoefficientFrame {
        a, b1, b2, c, d1, d2, q,
        r1: DMatrix::identity(1, 1),
        r2: DMatrix::identity(1, 1),
    };
    mixedlq::builder::matrix_problem(
        Dims { n, l1: 1, l2: 1, d: 2 },
        1.0,
        frame,
        g,
        DVector::from_vec(vec![1.5, -1.0]),
    )
}

fn two_state_no_l1(seed: u64) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let mut m = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.random_range(-1.0..1.0_f64));
    let a = m(n, n, 0.6);
    let b2 = m(n, 2, 1.0);
    let c: Vec<_> = (0..1).map(|_| m(n, n, 0.3)).collect();
    let d2: Vec<_> = (0..1).map(|_| m(n, 2, 0.3)).collect();
    let zq = m(n, n, 0.8);
    let q = &zq * zq.transpose();
    let zg = m(n, n, 0.5);
    let g = &zg * zg.transpose();
    let frame = CoefficientFrame {
        a,
        b1: DMatrix::zeros(n, 0),
        b2,
        c,
        d1: vec![DMatrix::zeros(n, 0)],
        d2,
        q,
        r1: DMatrix::zeros(0, 0),
        r2: DMatrix::identity(2, 2),
    };
    mixedlq::builder::matrix_problem(
        Dims { n, l1: 0, l2: 2, d: 1 },
        1.0,
        frame,
        g,
        DVector::from_vec(vec![1.0, -0.5]),
    )
}

fn perturbed(gains: &GainSchedule, seed: u64, rel: f64) -> GainSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fam = |ms: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
        let amp = ms
            .iter()
            .map(|m| m.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .fold(0.0f64, f64::max)
            * rel;
        if ms[0].nrows() == 0 {
            return ms.to_vec();
        }
        let xi = DMatrix::from_fn(ms[0].nrows(), ms[0].ncols(), |_, _| {
            if rng.random::<bool>() { 1.0 } else { -1.0 }
        });
        ms.iter().map(|m| m + amp * &xi).collect()
    };
    GainSchedule {
        grid: gains.grid,
        m1: fam(&gains.m1),
        m2: fam(&gains.m2),
        m3: fam(&gains.m3),
    }
}

fn separation(label: &str, spec: &mut ProblemSpec) {
    spec.validate().unwrap();
    let grid = TimeGrid::aligned(spec, 512).unwrap();
    let sol = RiccatiSolution::solve(spec, &grid).unwrap();
    let gains = build_gain_schedule(spec, &grid, &sol).unwrap();
    let opt_policy = AffinePolicy::optimal(&gains);
    let bundle = simulate_paths(spec, &opt_policy, 20_000, 42, false).unwrap();
    let jstar = estimate_cost(spec, &bundle, Some(&sol)).unwrap();
    drop(bundle);
    let mut exceed = 0;
    let mut min_gap = f64::INFINITY;
    let t0 = std::time::Instant::now();
    for k in 0..20u64 {
        let pg = perturbed(&gains, 1000 + k, 0.25);
        let policy = AffinePolicy::optimal(&pg);
        let b = simulate_paths(spec, &policy, 20_000, 42, false).unwrap();
        let j = estimate_cost(spec, &b, None).unwrap();
        let comb = (jstar.mc_stderr.powi(2) + j.mc_stderr.powi(2)).sqrt();
        let gap = j.mc_mean - jstar.mc_mean;
        min_gap = min_gap.min(gap + 3.0 * comb);
        if gap > 3.0 * comb {
            exceed += 1;
        }
    }
    println!(
        "== {label}: J* = {:.6} +- {:.1e}; exceed-3sigma {exceed}/20; min(gap+3s) {:.3e}; {} ms",
        jstar.mc_mean,
        jstar.mc_stderr,
        min_gap,
        t0.elapsed().as_millis()
    );
}

fn main() {
    // Criterion 5 separation on the three MC problems.
    let mut s2a = scalar_problem().b1(1.5).b2(1.0).c(0.1).d2(1.0).q(1.0).r2(0.0).g(1.0).x0(2.0).build();
    separation("singular R2 v1", &mut s2a);
    let mut s2b = scalar_problem().b1(1.5).b2(0.8).c(0.1).d2(1.0).q(1.5).r2(0.0).g(1.5).x0(2.0).build();
    separation("singular R2 v2", &mut s2b);
    let mut s2c = scalar_problem().b1(2.0).b2(1.0).c(0.1).d2(1.0).q(1.0).r2(0.0).g(1.0).x0(2.0).build();
    separation("singular R2 v3", &mut s2c);

    // Criterion 3: l1 = 0 reduction.
    for seed in [11u64, 12, 13] {
        let mut spec = two_state_no_l1(seed);
        spec.validate().unwrap();
        let grid = TimeGrid::aligned(&spec, 512).unwrap();
        let sol = RiccatiSolution::solve(&spec, &grid).unwrap();
        let gains = build_gain_schedule(&spec, &grid, &sol).unwrap();
        let mut dp = 0.0f64;
        let mut dm = 0.0f64;
        for i in 0..grid.node_count() {
            dp = dp.max((&sol.p1[i] - &sol.p2[i]).iter().fold(0.0f64, |a, v| a.max(v.abs())));
            dm = dm.max((&gains.m2[i] - &gains.m3[i]).iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        println!("== no-l1 seed {seed}: max|P2-P1| {dp:.3e}, max|M2-M3| {dm:.3e}");
    }

    // Criterion 10a: refinement ratio.
    let mut spec = two_state_regular(1);
    spec.validate().unwrap();
    let sols: Vec<_> = [32usize, 64, 128]
        .iter()
        .map(|&n| {
            let g = TimeGrid::aligned(&spec, n).unwrap();
            RiccatiSolution::solve(&spec, &g).unwrap()
        })
        .collect();
    let diff = |a: &RiccatiSolution, b: &RiccatiSolution, which: fn(&RiccatiSolution) -> &Vec<DMatrix<f64>>| -> f64 {
        // b has twice the steps of a
        let mut worst = 0.0f64;
        for i in 0..which(a).len() {
            let va = &which(a)[i];
            let vb = &which(b)[2 * i];
            worst = worst.max((va - vb).iter().fold(0.0f64, |x, v| x.max(v.abs())));
        }
        worst
    };
    let e1p1 = diff(&sols[0], &sols[1], |s| &s.p1);
    let e2p1 = diff(&sols[1], &sols[2], |s| &s.p1);
    let e1p2 = diff(&sols[0], &sols[1], |s| &s.p2);
    let e2p2 = diff(&sols[1], &sols[2], |s| &s.p2);
    println!(
        "== refinement: P1 {:.3e}/{:.3e} ratio {:.1}; P2 {:.3e}/{:.3e} ratio {:.1}",
        e1p1, e2p1, e1p1 / e2p1, e1p2, e2p2, e1p2 / e2p2
    );

    // Criterion 10b: weak order on the tanh problem.
    let mut tanh = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
    tanh.validate().unwrap();
    let mut errs = vec![];
    for n in [256usize, 512] {
        let grid = TimeGrid::aligned(&tanh, n).unwrap();
        let sol = RiccatiSolution::solve(&tanh, &grid).unwrap();
        let gains = build_gain_schedule(&tanh, &grid, &sol).unwrap();
        let policy = AffinePolicy::optimal(&gains);
        let bundle = simulate_paths(&tanh, &policy, 20_000, 42, false).unwrap();
        let cost = estimate_cost(&tanh, &bundle, Some(&sol)).unwrap();
        errs.push(((cost.mc_mean - cost.predicted.unwrap()).abs(), cost.mc_stderr));
    }
    println!(
        "== weak order: err(256) {:.4e}, err(512) {:.4e}, bound {:.4e}",
        errs[0].0,
        errs[1].0,
        0.75 * errs[0].0 + 2.0 * errs[1].1
    );
}
