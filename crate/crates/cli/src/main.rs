//! `ivproc` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ivproc::bench::ExperimentId;
use ivproc::hawkes::EdgeHandling;
use ivproc::{Bandwidth, Kernel, LrcovConfig};

#[derive(Debug, Parser)]
#[command(name = "ivproc", version, about = "Causal effects in time series and point processes via instrumental processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a VAR(p) series from a model config.
    SimulateVar(SimulateVarArgs),
    /// Simulate a multivariate Hawkes process from a model config.
    SimulateHawkes(SimulateHawkesArgs),
    /// Estimate the integrated covariance of a series or event log.
    EstimateCov(EstimateCovArgs),
    /// Estimate a normalized causal effect from instrument processes.
    IvEstimate(IvEstimateArgs),
    /// Check the graphical instrument conditions.
    CheckGraph(CheckGraphArgs),
    /// Monte-Carlo benchmark experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Run one experiment and report its MSE and parameter range.
    Run(BenchRunArgs),
    /// Error against the outcome self-effect for E7.
    Sweep(BenchSweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Bartlett,
    Truncated,
    #[value(name = "qs", alias = "quadratic-spectral")]
    QuadraticSpectral,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Bartlett => Kernel::Bartlett,
            KernelArg::Truncated => Kernel::Truncated,
            KernelArg::QuadraticSpectral => Kernel::QuadraticSpectral,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EdgeArg {
    Interior,
    Truncated,
}

impl From<EdgeArg> for EdgeHandling {
    fn from(e: EdgeArg) -> Self {
        match e {
            EdgeArg::Interior => EdgeHandling::Interior,
            EdgeArg::Truncated => EdgeHandling::Truncated,
        }
    }
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Automatic);
    }
    match s.parse::<f64>() {
        Ok(b) if b >= 0.0 && b.is_finite() => Ok(Bandwidth::Fixed(b)),
        _ => Err(format!("expected `auto` or a nonnegative number, got `{s}`")),
    }
}

fn parse_experiment(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: ivproc::Error| e.to_string())
}

/// Series estimator settings.
#[derive(Debug, Args)]
struct LrcovArgs {
    /// Kernel weights [default: bartlett].
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// `auto` or a fixed bandwidth in lags [default: auto].
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<Bandwidth>,
    /// Use the raw series instead of subtracting column means.
    #[arg(long)]
    no_demean: bool,
    /// Skip the VAR(1) prewhitening step.
    #[arg(long)]
    no_prewhiten: bool,
}

impl LrcovArgs {
    fn any_set(&self) -> bool {
        self.kernel.is_some() || self.bandwidth.is_some() || self.no_demean || self.no_prewhiten
    }

    fn config(&self) -> LrcovConfig {
        LrcovConfig {
            kernel: self.kernel.map_or(Kernel::default(), Kernel::from),
            bandwidth: self.bandwidth.unwrap_or_default(),
            demean: !self.no_demean,
            prewhiten: !self.no_prewhiten,
        }
    }
}

/// Event-log estimator settings.
#[derive(Debug, Args)]
struct WindowArgs {
    /// Window half-width H; chosen from the event count when omitted.
    #[arg(long = "window-H", value_name = "H")]
    window_h: Option<f64>,
    /// Observation horizon T; overrides the value stored in the event file.
    #[arg(long)]
    horizon: Option<f64>,
    /// Treatment of windows that cross the ends of the observation period.
    #[arg(long, value_enum)]
    edge: Option<EdgeArg>,
}

impl WindowArgs {
    fn any_set(&self) -> bool {
        self.window_h.is_some() || self.horizon.is_some() || self.edge.is_some()
    }
}

#[derive(Debug, Args)]
struct SimulateVarArgs {
    /// TOML model config with a [var] or [sample] section.
    #[arg(long)]
    config: PathBuf,
    /// Number of time points to write.
    #[arg(long = "n", value_name = "LEN")]
    len: usize,
    #[arg(long, default_value_t = ivproc::var::DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateHawkesArgs {
    /// TOML model config with a [hawkes] or [sample] section.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    horizon: f64,
    /// Length of the discarded prefix; 10 over the smallest decay by default.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long, default_value_t = ivproc::hawkes::DEFAULT_MAX_EVENTS)]
    max_events: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateCovArgs {
    /// Series CSV (t,x1..xn) or event CSV (process,time).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    lrcov: LrcovArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IvEstimateArgs {
    /// Series CSV (t,x1..xn) or event CSV (process,time).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    instruments: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    treatments: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    outcomes: Vec<usize>,
    #[command(flatten)]
    lrcov: LrcovArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// `identity` or a CSV file holding a symmetric positive-definite matrix.
    #[arg(long, default_value = "identity")]
    weight: String,
    /// Weak-instrument threshold on the strength statistic; 0 disables it.
    #[arg(long, default_value_t = ivproc::iv::DEFAULT_WEAK_Z)]
    weak_z: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckGraphArgs {
    /// TOML config with a [graph] section or a model to read the graph from.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    instruments: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    treatments: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    outcomes: Vec<usize>,
}

#[derive(Debug, Args)]
struct BenchCommon {
    /// Series length, or observation horizon for H1.
    #[arg(long = "n", value_name = "N")]
    size: f64,
    /// Number of replications.
    #[arg(long = "m", value_name = "M")]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    lrcov: LrcovArgs,
    /// Window half-width for H1; chosen per replication when omitted.
    #[arg(long = "window-H", value_name = "H")]
    window_h: Option<f64>,
    /// Drop replications whose strength statistic falls below this value.
    #[arg(long)]
    weak_z: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchRunArgs {
    #[arg(long, value_parser = parse_experiment)]
    experiment: ExperimentId,
    #[command(flatten)]
    common: BenchCommon,
    /// Per-replication CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary CSV (id, N, m, MSE, r_min, r_max, failures).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchSweepArgs {
    #[command(flatten)]
    common: BenchCommon,
    /// Bin edges on |Φ_33|.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    edges: Option<Vec<f64>>,
    /// Per-replication CSV (phi33, abs_err, log_abs_err).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Binned medians CSV.
    #[arg(long)]
    bins: Option<PathBuf>,
}

/// A flag combination that clap cannot rule out on its own.
fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, msg)
        .exit()
}

fn configure_threads() {
    let Ok(raw) = std::env::var("IVPROC_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // fails only if a pool already exists, which cannot happen here
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => usage_error(format!("IVPROC_THREADS must be a positive integer, got `{raw}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
