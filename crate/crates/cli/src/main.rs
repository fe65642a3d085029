//! `relaydes`: Monte Carlo ASEP sweeps over the partial-CSI relay
//! transceiver designs, plus self-check commands for the closed-form
//! statistics and the allocation solver.
//!
//! Exit codes: 0 on success, 1 on a validation problem (bad flags,
//! inconsistent dimensions, malformed config file), 2 on a runtime abort
//! or a failed verification suite.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

use relaydes_core::harness::{
    emit_results, run_experiment_with_threads, ExperimentConfig, HarnessError, OutputFormat,
};
use relaydes_core::model::{DesignKind, NetworkDims};

mod verify;

#[derive(Parser)]
#[command(
    name = "relaydes",
    version,
    about = "Partial-CSI relay network design simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ASEP sweep and write the records to a file.
    Run(Box<RunArgs>),
    /// Check the closed-form expected inverse trace against Monte Carlo.
    VerifyLemma1(VerifySeedArgs),
    /// Check the allocation cost Hessian against its closed forms.
    VerifyHessian(VerifySeedArgs),
    /// Certify the allocation solver against the grid oracle.
    VerifyAlloc(VerifySeedArgs),
}

#[derive(Args, Clone, Copy)]
struct VerifySeedArgs {
    /// Seed for the randomized checks.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Composite,
    #[value(name = "single-relay")]
    SingleRelay,
    Jar,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Which designs to simulate.
    #[arg(long, value_enum)]
    design: Option<DesignArg>,

    /// Set n_b = n_s = n_r = n_d at once.
    #[arg(long)]
    n: Option<usize>,

    #[arg(long)]
    n_b: Option<usize>,
    #[arg(long)]
    n_s: Option<usize>,
    #[arg(long)]
    n_r: Option<usize>,
    /// Number of relays.
    #[arg(long)]
    n_c: Option<usize>,
    #[arg(long)]
    n_d: Option<usize>,

    /// First SNR of the grid, in dB.
    #[arg(long)]
    snr_start: Option<f64>,
    /// Last SNR of the grid, in dB (inclusive).
    #[arg(long)]
    snr_stop: Option<f64>,
    /// Grid spacing in dB.
    #[arg(long)]
    snr_step: Option<f64>,

    /// Monte Carlo trials per (design, SNR) cell.
    #[arg(long)]
    trials: Option<u64>,
    /// QPSK symbols per trial (multiple of n_b).
    #[arg(long)]
    symbols: Option<u64>,
    /// Master seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Allocation solver tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Worker thread count hint; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,

    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// File-format mirror of the run flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    design: Option<String>,
    n: Option<usize>,
    n_b: Option<usize>,
    n_s: Option<usize>,
    n_r: Option<usize>,
    n_c: Option<usize>,
    n_d: Option<usize>,
    snr_start: Option<f64>,
    snr_stop: Option<f64>,
    snr_step: Option<f64>,
    trials: Option<u64>,
    symbols: Option<u64>,
    seed: Option<u64>,
    tol: Option<f64>,
    out: Option<String>,
    format: Option<String>,
    threads: Option<usize>,
}

fn parse_designs(text: &str) -> Result<Vec<DesignKind>, String> {
    match text {
        "composite" => Ok(vec![DesignKind::Composite]),
        "single-relay" => Ok(vec![DesignKind::SingleRelay]),
        "jar" => Ok(vec![DesignKind::Jar]),
        "all" => Ok(vec![
            DesignKind::Composite,
            DesignKind::SingleRelay,
            DesignKind::Jar,
        ]),
        other => Err(format!("unknown design '{other}'")),
    }
}

fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, String> {
    if step.is_nan() || step <= 0.0 {
        return Err(format!("snr step must be > 0, got {step}"));
    }
    if stop < start {
        return Err(format!("snr stop {stop} is below snr start {start}"));
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let value = start + f64::from(k) * step;
        if value > stop + 1e-9 {
            break;
        }
        grid.push(value);
        k += 1;
    }
    Ok(grid)
}

struct RunPlan {
    config: ExperimentConfig,
    out: PathBuf,
    threads: Option<usize>,
}

fn build_plan(args: &RunArgs) -> Result<RunPlan, String> {
    let file: ConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("malformed config {}: {e}", path.display()))?
        }
        None => ConfigFile::default(),
    };

    let design_arg = match args.design {
        Some(DesignArg::Composite) => vec![DesignKind::Composite],
        Some(DesignArg::SingleRelay) => vec![DesignKind::SingleRelay],
        Some(DesignArg::Jar) => vec![DesignKind::Jar],
        Some(DesignArg::All) => parse_designs("all")?,
        None => match &file.design {
            Some(text) => parse_designs(text)?,
            None => parse_designs("all")?,
        },
    };

    let n = args.n.or(file.n);
    let pick = |flag: Option<usize>, field: Option<usize>, fallback: Option<usize>| {
        flag.or(field).or(n).or(fallback)
    };
    let n_b = pick(args.n_b, file.n_b, Some(1)).unwrap();
    let n_s = pick(args.n_s, file.n_s, Some(n_b)).unwrap();
    let n_r = pick(args.n_r, file.n_r, Some(n_s)).unwrap();
    let n_d = pick(args.n_d, file.n_d, Some(n_s)).unwrap();
    let n_c = args.n_c.or(file.n_c).unwrap_or(2);
    let dims = NetworkDims::new(n_b, n_s, n_r, n_c, n_d).map_err(|e| e.to_string())?;

    let start = args.snr_start.or(file.snr_start).unwrap_or(0.0);
    let stop = args.snr_stop.or(file.snr_stop).unwrap_or(30.0);
    let step = args.snr_step.or(file.snr_step).unwrap_or(5.0);
    let snr_grid_db = snr_grid(start, stop, step)?;

    let format = match args.format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Json) => OutputFormat::Json,
        None => match file.format.as_deref() {
            Some("csv") | None => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => return Err(format!("unknown format '{other}'")),
        },
    };

    let out = args
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .ok_or_else(|| "no output path: pass --out or set \"out\" in the config".to_string())?;

    let config = ExperimentConfig {
        dims,
        designs: design_arg,
        snr_grid_db,
        trials: args.trials.or(file.trials).unwrap_or(200),
        symbols_per_trial: args.symbols.or(file.symbols).unwrap_or(10_000),
        master_seed: args.seed.or(file.seed).unwrap_or(1),
        tol: args.tol.or(file.tol).unwrap_or(1e-8),
        output_path: Some(out.display().to_string()),
        format,
    };
    Ok(RunPlan {
        config,
        out,
        threads: args.threads.or(file.threads),
    })
}

fn run(args: &RunArgs) -> ExitCode {
    let plan = match build_plan(args) {
        Ok(plan) => plan,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = plan.config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let records = match run_experiment_with_threads(&plan.config, plan.threads) {
        Ok(records) => records,
        Err(e @ HarnessError::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("runtime abort: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit_results(&records, plan.config.format, &plan.out) {
        eprintln!("runtime abort: {e}");
        return ExitCode::from(2);
    }
    for record in &records {
        println!(
            "{:>12}  {:>6.1} dB  asep {:.3e}  ({} errors / {} symbols)",
            record.design.to_string(),
            record.snr_db,
            record.asep,
            record.errors,
            record.symbols
        );
    }
    println!("wrote {} records to {}", records.len(), plan.out.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help and version requests are not errors
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match cli.command {
        Command::Run(args) => run(&args),
        Command::VerifyLemma1(args) => verify::exit_from(verify::lemma1(args.seed)),
        Command::VerifyHessian(args) => verify::exit_from(verify::hessian(args.seed)),
        Command::VerifyAlloc(args) => verify::exit_from(verify::allocation(args.seed)),
    }
}
