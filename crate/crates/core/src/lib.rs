//! Partial-CSI transceiver design and evaluation for multi-relay
//! amplify-and-forward MIMO networks.
//!
//! The source and relays know the instantaneous first-hop channel and
//! only the statistics of the second hop. Under a relaxed MMSE criterion
//! the transceiver reduces to SVD-based diagonalization plus a convex
//! power allocation, and the interesting choice becomes *which* antennas
//! relay at all. This crate implements the composite all-relay
//! construction, single-relay selection, and joint antenna-and-relay
//! subset selection, together with a seeded Monte Carlo harness that
//! estimates average symbol error probability over QPSK.
//!
//! Modules:
//! * [`model`] — network dimensions, channels, designs, MSE evaluators.
//! * [`randgen`] — seeded CSCG/QPSK streams and the symbol detector.
//! * [`alloc`] — power-allocation solver, grid oracle, cost evaluators.
//! * [`designs`] — the three transceiver constructions.
//! * [`analysis`] — closed-form second-hop statistics and their oracles.
//! * [`harness`] — the ASEP experiment engine and result emitters.

pub mod alloc;
pub mod analysis;
pub mod designs;
pub mod harness;
pub mod model;
pub mod randgen;

/// Strictly positive; false for zero, negatives, and NaN.
#[inline]
pub(crate) fn positive(x: f64) -> bool {
    x > 0.0
}

pub use alloc::{
    brute_force_allocation, composite_allocation_heuristic, eval_f0, eval_f1, eval_f2,
    hessian_summand, solve_allocation, AllocError, AllocationProblem, AllocationSolution,
    CompositeAllocation, CompositeProblem,
};
pub use analysis::{
    estimate_diversity_order, inverse_gamma_cdf, inverse_gamma_pdf, lemma1_closed_form,
    mc_trace_expectation, AnalysisError, InverseGammaParams, McTraceEstimate,
};
pub use designs::{
    design_composite, design_jar, design_single_relay, enumerate_subsets, partition_channel,
    AntennaSubset, DesignError, SvdFactors,
};
pub use harness::{
    emit_results, parse_records_json, render_csv, render_json, run_experiment,
    run_experiment_with_threads, run_trial, AsepRecord, ExperimentConfig, HarnessError,
    OutputFormat, TrialOutcome,
};
pub use model::{
    conditional_mse_trace, dual_hop_matrix, kzz, noise_covariance_kvv, received_signal,
    relaxation_chain_costs, wiener_equalizer, ChannelRealization, DesignKind, FirstHopChannel,
    ModelError, MseReport, NetworkDesign, NetworkDims, PowerBudget, Selection,
};
pub use randgen::{
    min_distance_detect, sample_cscg_matrix, sample_qpsk_block, SeedSpec, StreamLabel,
};
