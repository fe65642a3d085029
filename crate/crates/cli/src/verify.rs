//! Self-check suites behind the `verify-*` subcommands. Each prints one
//! line per check and reports the overall verdict.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;

use relaydes_core::alloc::{
    brute_force_allocation, hessian_summand, solve_allocation, AllocationProblem,
};
use relaydes_core::analysis::{expected_inverse_trace_from_r, mc_trace_expectation};
use relaydes_core::model::{
    CMatrix, DesignKind, FirstHopChannel, NetworkDesign, NetworkDims, Selection, C64,
};
use relaydes_core::randgen::sample_cscg_matrix_with;

pub fn exit_from(failures: usize) -> ExitCode {
    if failures == 0 {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} check(s) failed");
        ExitCode::from(2)
    }
}

fn random_design(rng: &mut ChaCha8Rng, dims: NetworkDims) -> (NetworkDesign, FirstHopChannel) {
    let h = sample_cscg_matrix_with(rng, dims.relay_antennas(), dims.n_s());
    let hop = FirstHopChannel::new(dims, h).unwrap();
    let f0 = sample_cscg_matrix_with(rng, dims.n_s(), dims.n_b());
    let blocks: Vec<CMatrix> = (0..dims.n_c())
        .map(|_| sample_cscg_matrix_with(rng, dims.n_r(), dims.n_r()))
        .collect();
    let design = NetworkDesign::new(
        dims,
        DesignKind::Composite,
        f0,
        blocks,
        Selection::AllAntennas,
        relaydes_core::alloc::AllocationSolution {
            omega: vec![1.0],
            delta: vec![1.0],
            objective: 1.0,
            kkt_residual: 0.0,
            certified: false,
        },
        Default::default(),
    )
    .unwrap();
    (design, hop)
}

/// Closed-form expected inverse trace against its Monte Carlo estimate.
pub fn lemma1(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases = [
        NetworkDims::new(1, 1, 1, 2, 2).unwrap(),
        NetworkDims::new(2, 2, 2, 2, 4).unwrap(),
        NetworkDims::new(2, 2, 2, 3, 3).unwrap(),
    ];
    let mut failures = 0;
    for (i, &dims) in cases.iter().enumerate() {
        for instance in 0..2 {
            let (design, hop) = random_design(&mut rng, dims);
            let r = relaydes_core::model::reduced_cost_matrix(&design, &hop);
            let closed = expected_inverse_trace_from_r(&r, dims.n_b(), dims.n_d()).unwrap();
            let mc = mc_trace_expectation(&design, &hop, 40_000, seed ^ (i as u64) << 8 | instance);
            let ok = (closed - mc.mean).abs() <= 3.0 * mc.std_error;
            println!(
                "{} case {i}.{instance} (n_d - n_b = {}): closed {closed:.6} vs mc {:.6} +- {:.6} ({} skipped)",
                if ok { "PASS" } else { "FAIL" },
                dims.n_d() - dims.n_b(),
                mc.mean,
                mc.std_error,
                mc.skipped
            );
            failures += usize::from(!ok);
        }
    }
    failures
}

/// Hessian closed forms: determinant identity for one power pair,
/// vanishing determinant beyond, finite-difference agreement.
pub fn hessian(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;

    let mut worst_det = 0.0_f64;
    for _ in 0..100 {
        let a = rng.random_range(0.2..4.0);
        let x = rng.random_range(0.2..4.0);
        let y = rng.random_range(0.2..4.0);
        let h = hessian_summand(a, x, &[y]).unwrap();
        let expected = 3.0 / (a * a * x.powi(4) * y.powi(4));
        worst_det = worst_det.max(((h.determinant() - expected) / expected).abs());
    }
    let ok = worst_det <= 1e-12;
    println!(
        "{} determinant identity (n = 1): worst relative error {worst_det:.2e}",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);

    let mut worst_vanish = 0.0_f64;
    for _ in 0..100 {
        let n = 2 + rng.random_range(0..2) as usize;
        let a = rng.random_range(0.2..4.0);
        let x = rng.random_range(0.2..4.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..4.0)).collect();
        let h = hessian_summand(a, x, &y).unwrap();
        worst_vanish = worst_vanish.max(h.determinant().abs());
    }
    let ok = worst_vanish < 1e-10;
    println!(
        "{} determinant vanishes (n in 2..3): worst |det| {worst_vanish:.2e}",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);

    let f = |a: f64, x: f64, y: &[f64]| 1.0 / (a * x * y.iter().sum::<f64>());
    let mut worst_fd = 0.0_f64;
    for _ in 0..20 {
        let a = rng.random_range(0.5..2.0);
        let x = rng.random_range(0.5..2.0);
        let y = vec![rng.random_range(0.5..2.0)];
        let h = hessian_summand(a, x, &y).unwrap();
        let s = 1e-4;
        let fd_xx = (f(a, x + s, &y) - 2.0 * f(a, x, &y) + f(a, x - s, &y)) / (s * s);
        worst_fd = worst_fd.max(((h[(0, 0)] - fd_xx) / fd_xx).abs());
    }
    let ok = worst_fd <= 1e-5;
    println!(
        "{} finite differences agree: worst relative error {worst_fd:.2e}",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);

    failures
}

/// Solver certification against the grid oracle, plus the diagonal trace
/// inequality the designs rely on.
pub fn allocation(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;

    let mut worst_gap = 0.0_f64;
    let mut worst_slack = 0.0_f64;
    for case in 0..50 {
        let terms = 1 + case % 4;
        let gains: Vec<f64> = (0..terms)
            .map(|_| 10f64.powf(rng.random_range(-1.5..1.5)))
            .collect();
        let weights: Vec<f64> = (0..terms)
            .map(|_| {
                if case % 2 == 0 {
                    1.0
                } else {
                    rng.random_range(0.5..2.0)
                }
            })
            .collect();
        let p_s = rng.random_range(0.5..20.0);
        let p_d = rng.random_range(0.5..20.0);
        let problem = AllocationProblem::new(gains, weights, p_s, p_d, None).unwrap();
        let sol = solve_allocation(&problem, 1e-10).unwrap();
        let oracle = brute_force_allocation(&problem, 1e-3).unwrap();
        worst_gap =
            worst_gap.max((sol.objective - oracle.objective).abs() / (1.0 + oracle.objective));
        let used_s: f64 = sol
            .omega
            .iter()
            .zip(problem.source_weights())
            .map(|(o, w)| o * w)
            .sum();
        let used_d: f64 = sol.delta.iter().sum();
        worst_slack = worst_slack
            .max((used_s / p_s - 1.0).abs())
            .max((used_d / p_d - 1.0).abs());
    }
    let ok = worst_gap <= 1e-4;
    println!(
        "{} solver vs oracle on 50 problems: worst gap {worst_gap:.2e}",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);
    let ok = worst_slack <= 1e-6;
    println!(
        "{} budgets tight: worst slack {worst_slack:.2e}",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);

    // tr(A^{-1}) >= sum_l 1 / A_ll for positive definite A, equality when
    // diagonal
    let mut violations = 0;
    for _ in 0..100 {
        let n = 1 + rng.random_range(0..5) as usize;
        let b = DMatrix::<C64>::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let a = &b * b.adjoint() + DMatrix::<C64>::identity(n, n).scale(0.05);
        let inv_trace = a.clone().cholesky().unwrap().inverse().trace().re;
        let diag_sum: f64 = (0..n).map(|l| 1.0 / a[(l, l)].re).sum();
        if inv_trace < diag_sum * (1.0 - 1e-12) {
            violations += 1;
        }
    }
    let ok = violations == 0;
    println!(
        "{} diagonal trace inequality on 100 matrices: {violations} violations",
        if ok { "PASS" } else { "FAIL" }
    );
    failures += usize::from(!ok);

    failures
}
