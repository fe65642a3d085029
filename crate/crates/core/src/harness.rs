//! Monte Carlo ASEP experiment engine.
//!
//! Every (design, SNR) cell runs the configured number of trials. A trial
//! samples one channel realization, builds the design from the first hop
//! and the power budgets alone, equalizes with the realized dual-hop
//! matrix and noise covariance, and pushes blocks of QPSK symbols through
//! the chain with fresh noise per block. Trials own seed-derived streams,
//! so the full record set is byte-identical for a fixed master seed no
//! matter the execution order or the thread count; all designs of a trial
//! see the same channel, noise, and symbols (common random numbers).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::designs::{design_composite, design_jar, design_single_relay, DesignError};
use crate::model::{
    dual_hop_matrix, noise_covariance_kvv, reduced_cost_matrix, wiener_equalizer,
    ChannelRealization, DesignKind, FirstHopChannel, ModelError, NetworkDesign, NetworkDims,
    PowerBudget,
};
use crate::positive;
use crate::randgen::{
    min_distance_detect, qpsk_index, sample_cscg_matrix_with, sample_cscg_vector_with,
    sample_qpsk_block_with, SeedSpec, StreamLabel,
};

/// Restart attempts used by the composite allocation heuristic.
pub const COMPOSITE_RESTARTS: usize = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trial {trial} for design {design} at {snr_db} dB failed twice: {source}")]
    TrialAborted {
        design: DesignKind,
        snr_db: f64,
        trial: u64,
        source: DesignError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed results: {0}")]
    Parse(String),
}

/// Output serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: NetworkDims,
    pub designs: Vec<DesignKind>,
    pub snr_grid_db: Vec<f64>,
    pub trials: u64,
    /// QPSK symbols per trial; must be a positive multiple of `n_b`.
    pub symbols_per_trial: u64,
    pub master_seed: u64,
    /// Tolerance handed to the allocation solver.
    pub tol: f64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.designs.is_empty() {
            return Err(HarnessError::InvalidConfig("no designs selected".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(HarnessError::InvalidConfig("empty SNR grid".into()));
        }
        if !self
            .snr_grid_db
            .windows(2)
            .all(|w| w[0] < w[1] && w[0].is_finite() && w[1].is_finite())
            || !self.snr_grid_db[0].is_finite()
        {
            return Err(HarnessError::InvalidConfig(
                "SNR grid must be finite and strictly increasing".into(),
            ));
        }
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig("trials must be >= 1".into()));
        }
        let n_b = self.dims.n_b() as u64;
        if self.symbols_per_trial < n_b || !self.symbols_per_trial.is_multiple_of(n_b) {
            return Err(HarnessError::InvalidConfig(format!(
                "symbols_per_trial must be a positive multiple of n_b = {n_b}"
            )));
        }
        if !positive(self.tol) {
            return Err(HarnessError::InvalidConfig(
                "solver tolerance must be > 0".into(),
            ));
        }
        if self.designs.contains(&DesignKind::Jar) {
            if self.dims.n_b() != self.dims.n_s() {
                return Err(HarnessError::InvalidConfig(
                    "subset selection requires n_b = n_s".into(),
                ));
            }
            if self.dims.n_b() == self.dims.relay_antennas() {
                return Err(HarnessError::InvalidConfig(
                    "subset selection requires n_b < n_c * n_r".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One Monte Carlo cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AsepRecord {
    pub design: DesignKind,
    pub snr_db: f64,
    pub dims: NetworkDims,
    pub trials: u64,
    pub symbols: u64,
    pub errors: u64,
    /// `errors / symbols`.
    pub asep: f64,
    /// Binomial normal-approximation half width at 95%.
    pub ci95_halfwidth: f64,
    /// Mean over trials of the realized first-hop cost `tr(R^{-1})`.
    pub mean_reduced_cost: f64,
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub errors: u64,
    pub symbols: u64,
    pub reduced_cost: f64,
    /// True when the first channel draw failed to produce a design and
    /// the trial ran on the resampled draw.
    pub resampled: bool,
}

fn build_design(
    kind: DesignKind,
    hop: &FirstHopChannel,
    budget: &PowerBudget,
    tol: f64,
) -> Result<NetworkDesign, DesignError> {
    match kind {
        DesignKind::Composite => design_composite(hop, budget, COMPOSITE_RESTARTS),
        DesignKind::SingleRelay => design_single_relay(hop, budget, tol),
        DesignKind::Jar => design_jar(hop, budget, tol),
    }
}

fn sample_realization(
    config: &ExperimentConfig,
    trial_index: u64,
    attempt: u8,
) -> ChannelRealization {
    let dims = config.dims;
    let h = sample_cscg_matrix_with(
        &mut SeedSpec::new(config.master_seed, trial_index, StreamLabel::ChannelH)
            .with_attempt(attempt)
            .rng(),
        dims.relay_antennas(),
        dims.n_s(),
    );
    let g = sample_cscg_matrix_with(
        &mut SeedSpec::new(config.master_seed, trial_index, StreamLabel::ChannelG)
            .with_attempt(attempt)
            .rng(),
        dims.n_d(),
        dims.relay_antennas(),
    );
    ChannelRealization::new(dims, h, g).expect("sampled dimensions are consistent")
}

/// Run one trial of one design at one SNR.
///
/// The design sees only the first hop and the budgets; the equalizer uses
/// the realized dual-hop matrix and noise covariance. A design failure on
/// a pathological channel resamples the realization once; a second
/// failure aborts.
pub fn run_trial(
    config: &ExperimentConfig,
    design_kind: DesignKind,
    snr_db: f64,
    trial_index: u64,
) -> Result<TrialOutcome, HarnessError> {
    let p_tot = 10f64.powf(snr_db / 10.0);
    let budget =
        PowerBudget::symmetric(p_tot).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;

    let mut failure: Option<DesignError> = None;
    for attempt in 0u8..=1 {
        let ch = sample_realization(config, trial_index, attempt);
        let design = match build_design(design_kind, ch.first_hop(), &budget, config.tol) {
            Ok(d) => d,
            Err(err) => {
                log::warn!(
                    "trial {trial_index} ({design_kind}, {snr_db} dB) attempt {attempt} failed: {err}"
                );
                failure = Some(err);
                continue;
            }
        };
        let outcome = transmit(config, &design, &ch, trial_index, attempt)?;
        return Ok(TrialOutcome {
            resampled: attempt > 0,
            ..outcome
        });
    }
    Err(HarnessError::TrialAborted {
        design: design_kind,
        snr_db,
        trial: trial_index,
        source: failure.expect("loop exits early on success"),
    })
}

fn transmit(
    config: &ExperimentConfig,
    design: &NetworkDesign,
    ch: &ChannelRealization,
    trial_index: u64,
    attempt: u8,
) -> Result<TrialOutcome, HarnessError> {
    let dims = config.dims;
    let c = dual_hop_matrix(design, ch)?;
    let kvv = noise_covariance_kvv(design, ch);
    let equalizer = wiener_equalizer(&c, &kvv)?;
    let gf = ch.g() * design.full_relay_matrix();
    let reduced_cost =
        crate::model::hermitian_inverse_trace(&reduced_cost_matrix(design, ch.first_hop()));

    let stream = |label| {
        SeedSpec::new(config.master_seed, trial_index, label)
            .with_attempt(attempt)
            .rng()
    };
    let mut symbol_rng = stream(StreamLabel::Symbols);
    let mut relay_rng = stream(StreamLabel::RelayNoise);
    let mut dest_rng = stream(StreamLabel::DestNoise);

    let blocks = config.symbols_per_trial / dims.n_b() as u64;
    let mut errors = 0u64;
    for _ in 0..blocks {
        let b = sample_qpsk_block_with(&mut symbol_rng, dims.n_b());
        let w = sample_cscg_vector_with(&mut relay_rng, dims.relay_antennas());
        let n = sample_cscg_vector_with(&mut dest_rng, dims.n_d());
        let r = &c * &b + &gf * w + n;
        let estimate = &equalizer * r;
        for k in 0..dims.n_b() {
            if qpsk_index(min_distance_detect(estimate[k])) != qpsk_index(b[k]) {
                errors += 1;
            }
        }
    }
    Ok(TrialOutcome {
        errors,
        symbols: config.symbols_per_trial,
        reduced_cost,
        resampled: false,
    })
}

/// Run the full sweep: one record per (design, SNR) cell.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<AsepRecord>, HarnessError> {
    run_experiment_with_threads(config, None)
}

/// Same as [`run_experiment`] with an explicit thread-count hint. The
/// records do not depend on it: trials reduce in index order.
pub fn run_experiment_with_threads(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<Vec<AsepRecord>, HarnessError> {
    config.validate()?;
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            pool.install(|| run_cells(config))
        }
        None => run_cells(config),
    }
}

fn run_cells(config: &ExperimentConfig) -> Result<Vec<AsepRecord>, HarnessError> {
    let mut records = Vec::new();
    for &design in &config.designs {
        for &snr_db in &config.snr_grid_db {
            let outcomes: Vec<Result<TrialOutcome, HarnessError>> = (0..config.trials)
                .into_par_iter()
                .map(|trial| run_trial(config, design, snr_db, trial))
                .collect();

            let mut errors = 0u64;
            let mut symbols = 0u64;
            let mut resampled = 0u64;
            // compensated sum over trials in index order
            let mut cost_sum = 0.0;
            let mut cost_comp = 0.0;
            for outcome in outcomes {
                let outcome = outcome?;
                errors += outcome.errors;
                symbols += outcome.symbols;
                resampled += outcome.resampled as u64;
                let y = outcome.reduced_cost - cost_comp;
                let t = cost_sum + y;
                cost_comp = (t - cost_sum) - y;
                cost_sum = t;
            }
            if resampled > 0 {
                log::info!(
                    "{design} at {snr_db} dB: {resampled} of {} trials resampled",
                    config.trials
                );
            }
            let asep = errors as f64 / symbols as f64;
            let ci95_halfwidth = 1.96 * (asep * (1.0 - asep) / symbols as f64).sqrt();
            records.push(AsepRecord {
                design,
                snr_db,
                dims: config.dims,
                trials: config.trials,
                symbols,
                errors,
                asep,
                ci95_halfwidth,
                mean_reduced_cost: cost_sum / config.trials as f64,
            });
        }
    }
    Ok(records)
}

/// Nine significant digits, the fixed width of every float we emit.
fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

pub const CSV_HEADER: &str =
    "design,snr_db,n_b,n_s,n_r,n_c,n_d,trials,symbols,errors,asep,ci95,mean_cost";

pub fn render_csv(records: &[AsepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.design,
            fmt_sig9(r.snr_db),
            r.dims.n_b(),
            r.dims.n_s(),
            r.dims.n_r(),
            r.dims.n_c(),
            r.dims.n_d(),
            r.trials,
            r.symbols,
            r.errors,
            fmt_sig9(r.asep),
            fmt_sig9(r.ci95_halfwidth),
            fmt_sig9(r.mean_reduced_cost),
        ));
    }
    out
}

pub fn render_json(records: &[AsepRecord]) -> String {
    let mut out = String::from("[");
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "\n  {{\"design\": \"{}\", \"snr_db\": {}, \"n_b\": {}, \"n_s\": {}, \"n_r\": {}, \
             \"n_c\": {}, \"n_d\": {}, \"trials\": {}, \"symbols\": {}, \"errors\": {}, \
             \"asep\": {}, \"ci95\": {}, \"mean_cost\": {}}}",
            r.design,
            fmt_sig9(r.snr_db),
            r.dims.n_b(),
            r.dims.n_s(),
            r.dims.n_r(),
            r.dims.n_c(),
            r.dims.n_d(),
            r.trials,
            r.symbols,
            r.errors,
            fmt_sig9(r.asep),
            fmt_sig9(r.ci95_halfwidth),
            fmt_sig9(r.mean_reduced_cost),
        ));
    }
    out.push_str("\n]\n");
    out
}

/// Write the records to `path` in the requested format.
pub fn emit_results(
    records: &[AsepRecord],
    format: OutputFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    let rendered = match format {
        OutputFormat::Csv => render_csv(records),
        OutputFormat::Json => render_json(records),
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(rendered.as_bytes())?;
    Ok(())
}

/// Parse records back from the JSON emitted by [`render_json`].
pub fn parse_records_json(text: &str) -> Result<Vec<AsepRecord>, HarnessError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let array = value
        .as_array()
        .ok_or_else(|| HarnessError::Parse("expected a JSON array".into()))?;
    array
        .iter()
        .map(|item| {
            let obj = item
                .as_object()
                .ok_or_else(|| HarnessError::Parse("expected record objects".into()))?;
            let get_f64 = |key: &str| -> Result<f64, HarnessError> {
                obj.get(key)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| HarnessError::Parse(format!("missing number field {key}")))
            };
            let get_u64 = |key: &str| -> Result<u64, HarnessError> {
                obj.get(key)
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| HarnessError::Parse(format!("missing integer field {key}")))
            };
            let design = match obj.get("design").and_then(|v| v.as_str()) {
                Some("composite") => DesignKind::Composite,
                Some("single-relay") => DesignKind::SingleRelay,
                Some("jar") => DesignKind::Jar,
                other => return Err(HarnessError::Parse(format!("unknown design {other:?}"))),
            };
            let dims = NetworkDims::new(
                get_u64("n_b")? as usize,
                get_u64("n_s")? as usize,
                get_u64("n_r")? as usize,
                get_u64("n_c")? as usize,
                get_u64("n_d")? as usize,
            )
            .map_err(|e| HarnessError::Parse(e.to_string()))?;
            Ok(AsepRecord {
                design,
                snr_db: get_f64("snr_db")?,
                dims,
                trials: get_u64("trials")?,
                symbols: get_u64("symbols")?,
                errors: get_u64("errors")?,
                asep: get_f64("asep")?,
                ci95_halfwidth: get_f64("ci95")?,
                mean_reduced_cost: get_f64("mean_cost")?,
            })
        })
        .collect()
}
