//! Scratch measurement run used while pinning test constants.

use mixedlq::builder::scalar_problem;
use mixedlq::model::{CoefficientFrame, Dims};
use mixedlq::simulate::{estimate_cost, simulate_paths, AffinePolicy};
use mixedlq::synthesis::build_gain_schedule;
use mixedlq::verify::{adjoint_reconstruct, optimality_residuals};
use mixedlq::{ProblemSpec, RiccatiSolution, TimeGrid};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(label: &str, spec: &mut ProblemSpec, steps: usize, paths: usize) {
    let class = spec.validate().unwrap();
    let grid = TimeGrid::aligned(spec, steps).unwrap();
    let sol = RiccatiSolution::solve_with_classic(spec, &grid).unwrap();
    let gains = build_gain_schedule(spec, &grid, &sol).unwrap();
    let policy = AffinePolicy::optimal(&gains);
    let t0 = std::time::Instant::now();
    let bundle = simulate_paths(spec, &policy, paths, 42, false).unwrap();
    let sim_ms = t0.elapsed().as_millis();
    let cost = estimate_cost(spec, &bundle, Some(&sol)).unwrap();
    let adjoint = adjoint_reconstruct(spec, &bundle, &sol).unwrap();
    let rep = optimality_residuals(spec, &bundle, &adjoint).unwrap();
    let dt = grid.dt();
    let pred = cost.predicted.unwrap();
    println!("== {label} ({:?}) sim {sim_ms} ms", class.tag);
    println!(
        "  predicted {:.6}  mc {:.6} +- {:.2e}  |diff| {:.3e}  budget {:.3e}",
        pred,
        cost.mc_mean,
        cost.mc_stderr,
        (cost.mc_mean - pred).abs(),
        3.0 * cost.mc_stderr + 2.0 * dt * (1.0 + pred.abs())
    );
    println!(
        "  r1 {:.3e} (stderr {:.3e}, budget {:.3e})  r2 {:.3e} (budget {:.3e})",
        rep.r1_norm,
        rep.r1_stderr,
        rep.tolerances_used.r1_budget,
        rep.r2_norm,
        rep.tolerances_used.r2_budget
    );
    println!(
        "  drift {:.4e}  drift/sqrt(dt) {:.4}  p1(0) {:.6} p2(0) {:.6} k(0) {:.6}",
        rep.bsde_drift_norm,
        rep.bsde_drift_norm / dt.sqrt(),
        sol.p1[0][(0, 0)],
        sol.p2[0][(0, 0)],
        sol.k_classic.as_ref().unwrap()[0][(0, 0)]
    );
}

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
        a,
        b1,
        b2,
        c,
        d1,
        d2,
        q,
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

fn main() {
    let mut tanh = scalar_problem().b1(1.0).b2(1.0).q(1.0).build();
    run("scalar tanh", &mut tanh, 512, 20_000);

    for seed in [2u64] {
        let mut spec = two_state_regular(seed);
        run(&format!("2-state/2-noise seed {seed}"), &mut spec, 512, 20_000);
    }

    // Singular candidates
    let mut s2 = scalar_problem()
        .b1(1.5)
        .b2(1.0)
        .c(0.1)
        .d2(1.0)
        .q(1.0)
        .r1(1.0)
        .r2(0.0)
        .g(1.0)
        .x0(2.0)
        .build();
    run("singular R2 scalar", &mut s2, 512, 20_000);

    let mut s1 = scalar_problem()
        .b1(1.0)
        .b2(1.0)
        .c(0.15)
        .d1(1.0)
        .q(1.0)
        .r1(0.0)
        .r2(1.0)
        .g(1.0)
        .x0(2.0)
        .build();
    run("singular R1 scalar", &mut s1, 512, 20_000);
}
