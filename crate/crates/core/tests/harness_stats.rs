//! Statistical behavior of full experiment sweeps.

use relaydes_core::harness::{run_experiment, ExperimentConfig, OutputFormat};
use relaydes_core::model::{DesignKind, NetworkDims};

/// ASEP must not increase with SNR, up to one inversion explainable by
/// overlapping confidence intervals.
#[test]
fn asep_nonincreasing_in_snr() {
    let config = ExperimentConfig {
        dims: NetworkDims::square(1, 2).unwrap(),
        designs: vec![DesignKind::SingleRelay],
        snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        trials: 200,
        symbols_per_trial: 10_000,
        master_seed: 4242,
        tol: 1e-8,
        output_path: None,
        format: OutputFormat::Csv,
    };
    let records = run_experiment(&config).unwrap();
    let mut inversions = 0;
    for pair in records.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if hi.asep > lo.asep {
            inversions += 1;
            let overlap = hi.asep - hi.ci95_halfwidth <= lo.asep + lo.ci95_halfwidth;
            assert!(
                overlap,
                "asep rose from {} to {} between {} and {} dB beyond CI overlap",
                lo.asep, hi.asep, lo.snr_db, hi.snr_db
            );
        }
    }
    assert!(
        inversions <= 1,
        "{inversions} inversions in a 5-point sweep"
    );
}

/// The reduced cost falls with SNR like the inverse square of the power
/// budget (both budgets scale together).
#[test]
fn mean_reduced_cost_scales_inverse_square() {
    let config = ExperimentConfig {
        dims: NetworkDims::square(1, 2).unwrap(),
        designs: vec![DesignKind::SingleRelay],
        snr_grid_db: vec![10.0, 20.0],
        trials: 50,
        symbols_per_trial: 100,
        master_seed: 7,
        tol: 1e-8,
        output_path: None,
        format: OutputFormat::Csv,
    };
    let records = run_experiment(&config).unwrap();
    let ratio = records[0].mean_reduced_cost / records[1].mean_reduced_cost;
    assert!(
        (ratio - 100.0).abs() < 1e-6 * 100.0,
        "10 dB of extra power should cut the reduced cost 100x, got {ratio}"
    );
}
