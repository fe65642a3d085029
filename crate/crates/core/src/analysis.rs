//! Closed-form statistics of the dual-hop channel and their Monte Carlo
//! oracles.
//!
//! Conditioned on the first hop, the diagonal entries of `(C^H C)^{-1}`
//! are inverse-Gamma distributed; summing their means gives the expected
//! trace in closed form, `tr(R^{-1}) / (n_d - n_b)` with
//! `R = F0^H H^H F^H F H F0`. The sampling estimator here exists to
//! certify that identity and to sanity-check simulated ASEP slopes.

use rayon::prelude::*;
use thiserror::Error;

use crate::harness::AsepRecord;
use crate::model::{hermitian_inverse_trace, reduced_cost_matrix, FirstHopChannel, NetworkDesign};
use crate::positive;
use crate::randgen::{SeedSpec, StreamLabel};

/// Samples whose `C^H C` condition number exceeds this are excluded from
/// the Monte Carlo mean (the trace has heavy tails and a numerically
/// singular draw would dominate spuriously); the skip count is reported.
pub const MC_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("closed form requires n_d > n_b")]
    DestinationNotLarger,
    #[error("reduced matrix R is singular")]
    SingularReducedMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("diversity fit needs at least two tail points with errors, got {0}")]
    NotEnoughTailPoints(usize),
    #[error("zero-error cell at {0} dB: tail has too few trials for a slope")]
    ZeroErrorCell(f64),
}

/// Shape and scale of the per-entry law of `{(C^H C)^{-1}}_kk` given the
/// first hop: shape `n_d - n_b + 1`, scale `1 / {R^{-1}}_kk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGammaParams {
    pub alpha: u32,
    pub beta: f64,
}

impl InverseGammaParams {
    pub fn new(alpha: u32, beta: f64) -> Result<Self, AnalysisError> {
        if alpha == 0 {
            return Err(AnalysisError::InvalidParameter("alpha must be >= 1".into()));
        }
        if !positive(beta) {
            return Err(AnalysisError::InvalidParameter(format!(
                "beta must be > 0, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Mean `1 / (beta (alpha - 1))`; requires `alpha >= 2`.
    pub fn mean(&self) -> Result<f64, AnalysisError> {
        if self.alpha < 2 {
            return Err(AnalysisError::InvalidParameter(
                "mean requires alpha >= 2".into(),
            ));
        }
        Ok(1.0 / (self.beta * (self.alpha as f64 - 1.0)))
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Density `x^{-alpha-1} e^{-1/(x beta)} / (Gamma(alpha) beta^alpha)` for
/// `x > 0`.
pub fn inverse_gamma_pdf(x: f64, params: &InverseGammaParams) -> Result<f64, AnalysisError> {
    if !positive(x) {
        return Err(AnalysisError::InvalidParameter(format!(
            "pdf argument must be > 0, got {x}"
        )));
    }
    let alpha = params.alpha as f64;
    let gamma = factorial(params.alpha - 1);
    Ok(x.powf(-alpha - 1.0) * (-1.0 / (x * params.beta)).exp() / (gamma * params.beta.powf(alpha)))
}

/// Distribution function. For integer shape the regularized upper
/// incomplete gamma is a finite sum: `P(X <= x) = e^{-z} sum_{k<alpha}
/// z^k / k!` with `z = 1 / (x beta)`.
pub fn inverse_gamma_cdf(x: f64, params: &InverseGammaParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = 1.0 / (x * params.beta);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..params.alpha {
        term *= z / k as f64;
        sum += term;
    }
    (-z).exp() * sum
}

/// Closed-form conditional expectation of `tr[(C^H C)^{-1}]` over the
/// second hop: `tr(R^{-1}) / (n_d - n_b)`.
pub fn lemma1_closed_form(
    design: &NetworkDesign,
    first_hop: &FirstHopChannel,
) -> Result<f64, AnalysisError> {
    let dims = first_hop.dims();
    if !dims.supports_closed_form() {
        return Err(AnalysisError::DestinationNotLarger);
    }
    let r = reduced_cost_matrix(design, first_hop);
    let trace = hermitian_inverse_trace(&r);
    if !trace.is_finite() {
        return Err(AnalysisError::SingularReducedMatrix);
    }
    Ok(trace / (dims.n_d() - dims.n_b()) as f64)
}

/// Expected inverse trace from an explicit `R`; the closed form without
/// the design plumbing, used directly by tests.
pub fn expected_inverse_trace_from_r(
    r: &crate::model::CMatrix,
    n_b: usize,
    n_d: usize,
) -> Result<f64, AnalysisError> {
    if n_d <= n_b {
        return Err(AnalysisError::DestinationNotLarger);
    }
    let trace = hermitian_inverse_trace(r);
    if !trace.is_finite() {
        return Err(AnalysisError::SingularReducedMatrix);
    }
    Ok(trace / (n_d - n_b) as f64)
}

/// Monte Carlo estimate of the same expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McTraceEstimate {
    /// Sample mean over the retained draws; NaN when everything was
    /// skipped.
    pub mean: f64,
    /// Standard error of the mean over the retained draws.
    pub std_error: f64,
    pub requested: usize,
    pub used: usize,
    pub skipped: usize,
}

const MC_CHUNK: usize = 1024;

/// Sample mean of `tr[(C^H C)^{-1}]` over fresh unit-variance second-hop
/// draws. Sampling is chunked over disjoint seeded streams and reduced in
/// chunk order, so the estimate does not depend on thread count.
pub fn mc_trace_expectation(
    design: &NetworkDesign,
    first_hop: &FirstHopChannel,
    n_samples: usize,
    seed: u64,
) -> McTraceEstimate {
    assert!(n_samples >= 1);
    let dims = first_hop.dims();
    let f = design.full_relay_matrix();
    let fhf0 = f * first_hop.matrix() * &design.f0;

    let chunks: Vec<(usize, usize)> = (0..n_samples)
        .step_by(MC_CHUNK)
        .map(|start| (start / MC_CHUNK, MC_CHUNK.min(n_samples - start)))
        .collect();

    let partials: Vec<(f64, f64, usize, usize)> = chunks
        .par_iter()
        .map(|&(chunk_index, count)| {
            let spec = SeedSpec::new(seed, chunk_index as u64, StreamLabel::ChannelG);
            let mut rng = spec.rng();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut used = 0;
            let mut skipped = 0;
            for _ in 0..count {
                let g = crate::randgen::sample_cscg_matrix_with(
                    &mut rng,
                    dims.n_d(),
                    dims.relay_antennas(),
                );
                let c = &g * &fhf0;
                let chc = c.adjoint() * c;
                let eigs = chc.symmetric_eigen().eigenvalues;
                let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
                let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
                if !positive(min) || max / min > MC_CONDITION_LIMIT {
                    skipped += 1;
                    continue;
                }
                let trace: f64 = eigs.iter().map(|&l| 1.0 / l).sum();
                sum += trace;
                sumsq += trace * trace;
                used += 1;
            }
            (sum, sumsq, used, skipped)
        })
        .collect();

    // Order-fixed compensated reduction over the chunk partials.
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut sumsq = 0.0;
    let mut compsq = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (s, sq, u, k) in partials {
        let y = s - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let y2 = sq - compsq;
        let t2 = sumsq + y2;
        compsq = (t2 - sumsq) - y2;
        sumsq = t2;
        used += u;
        skipped += k;
    }

    if used == 0 {
        return McTraceEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            requested: n_samples,
            used,
            skipped,
        };
    }
    let mean = sum / used as f64;
    let variance = (sumsq / used as f64 - mean * mean).max(0.0);
    McTraceEstimate {
        mean,
        std_error: (variance / used as f64).sqrt(),
        requested: n_samples,
        used,
        skipped,
    }
}

/// Least-squares slope of `-log10(asep)` against `snr_db / 10` over the
/// `tail_points` highest SNRs: the empirical diversity order.
pub fn estimate_diversity_order(
    records: &[AsepRecord],
    tail_points: usize,
) -> Result<f64, AnalysisError> {
    let mut sorted: Vec<&AsepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.snr_db.partial_cmp(&b.snr_db).unwrap());
    if sorted.len() < 2 || tail_points < 2 {
        return Err(AnalysisError::NotEnoughTailPoints(
            sorted.len().min(tail_points),
        ));
    }
    let tail = &sorted[sorted.len().saturating_sub(tail_points)..];
    if tail.len() < 2 {
        return Err(AnalysisError::NotEnoughTailPoints(tail.len()));
    }
    for rec in tail {
        if rec.errors == 0 {
            return Err(AnalysisError::ZeroErrorCell(rec.snr_db));
        }
    }
    let n = tail.len() as f64;
    let xs: Vec<f64> = tail.iter().map(|r| r.snr_db / 10.0).collect();
    let ys: Vec<f64> = tail.iter().map(|r| -r.asep.log10()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    Ok(sxy / sxx)
}
