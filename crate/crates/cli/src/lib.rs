//! `liesym` command line: observability studies, symmetry reports, benchmark
//! simulation and joint state-parameter estimation.
//!
//! Every option can also come from a TOML file given with `--config`. Top-level
//! keys apply to every command and a `[analyze]`, `[simulate]`, ... table to
//! one; flags on the command line win.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

mod commands;
pub mod config;
mod setup;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNOBSERVABLE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Unobservable(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Unobservable(_) => EXIT_UNOBSERVABLE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Unobservable(m) => write!(f, "unobservable: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<liesym::Error> for CliError {
    fn from(e: liesym::Error) -> Self {
        use liesym::Error as E;
        match e {
            // bad input rather than a failed computation
            E::Syntax { .. }
            | E::UndeclaredSymbol(_)
            | E::DuplicateSymbol(_)
            | E::ArityMismatch { .. }
            | E::MissingConstant(_)
            | E::UnknownParameter(_)
            | E::UnknownFloor(_)
            | E::EmptySensorSet
            | E::Benchmark(_)
            | E::Config(_)
            | E::Parse(_)
            | E::NonUniformSampling(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "liesym", version, about = "Observability, symmetry and estimation for structural models")]
struct Cli {
    /// TOML file with default options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Observability report and rank-vs-order table.
    Analyze(AnalyzeArgs),
    /// Null-space infinitesimals, their flows and measurement checks.
    Symmetries(SymmetriesArgs),
    /// Simulate a model and synthesize noisy measurements.
    Simulate(SimulateArgs),
    /// Joint state and parameter estimation with the adaptive UKF.
    Estimate(EstimateArgs),
    /// Write a built-in benchmark as a model file.
    Benchmark(BenchmarkArgs),
}

/// Which model and which parameters.
#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct ModelArgs {
    /// Model file; exclusive with `--case`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in benchmark: two-dof, isolated-inerter, top-floor-nes, viscous-wind.
    #[arg(long)]
    pub case: Option<String>,
    /// Sensor layout such as `a2,d2` (built-in cases only).
    #[arg(long)]
    pub sensors: Option<String>,
    /// Parameters to identify; listing `w` makes the disturbance unmeasured.
    #[arg(long, value_delimiter = ',')]
    pub unknowns: Option<Vec<String>>,
    /// Parameters removed from the unknowns.
    #[arg(long, value_delimiter = ',')]
    pub known: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct AnalysisArgs {
    /// affine-no-input, affine-inputs or general (or 1, 2, 3).
    #[arg(long)]
    pub definition: Option<String>,
    /// Highest Lie-derivative order.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// probabilistic, symbolic or modular.
    #[arg(long)]
    pub method: Option<String>,
    /// auto, symbolic or jet.
    #[arg(long)]
    pub engine: Option<String>,
    /// Random evaluation points for the probabilistic rank.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Exit with status 2 when the verdict is unobservable.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub fail_on_unobservable: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct SymmetriesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisArgs,
    /// Highest power of the flow series.
    #[arg(long)]
    pub flow_order: Option<usize>,
    /// Candidate extra output to test against each symmetry (repeatable).
    #[arg(long)]
    pub measure: Option<Vec<String>>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct SimArgs {
    /// Sample interval in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// RK4 steps per sample interval.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Measurement noise as a fraction of each channel's rms.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Peak ground acceleration of synthetic excitations, m/s².
    #[arg(long)]
    pub pga: Option<f64>,
    /// firm or soft.
    #[arg(long)]
    pub soil: Option<String>,
    /// Wind load growth rate for `w`, N/s.
    #[arg(long)]
    pub wind_slope: Option<f64>,
    /// `name=path.csv` for an input record (repeatable); others are synthesized.
    #[arg(long)]
    pub input: Option<Vec<String>>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sim: SimArgs,
    /// Measurement CSV (`t` plus one column per output); simulated when absent.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    /// Input CSV (`t` plus one column per input).
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Initial normalized coefficients, one per unknown or a single value for all.
    #[arg(long, value_delimiter = ',')]
    pub init: Option<Vec<f64>>,
    /// Initial coefficient preset I, II or III for the six isolation-device unknowns.
    #[arg(long)]
    pub init_case: Option<String>,
    /// Relative error applied to the known parameters seen by the filter.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha_q: Option<f64>,
    #[arg(long)]
    pub alpha_r: Option<f64>,
    /// Estimate even when the layout is unobservable.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub skip_guard: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", default)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub sensors: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub unknowns: Option<Vec<String>>,
    /// `key=value` structural or parameter override (repeatable).
    #[arg(long)]
    pub set: Option<Vec<String>>,
    /// Destination file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn all_keys() -> BTreeSet<String> {
    let mut k = config::keys_of::<AnalyzeArgs>();
    k.extend(config::keys_of::<SymmetriesArgs>());
    k.extend(config::keys_of::<SimulateArgs>());
    k.extend(config::keys_of::<EstimateArgs>());
    k.extend(config::keys_of::<BenchmarkArgs>());
    k
}

/// Run one command line; returns the process exit code. Diagnostics go to
/// standard error, summaries to standard output.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("liesym: {e}");
            e.code()
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let file = file.as_ref();
    let keys = all_keys();
    match cli.command {
        Command::Analyze(a) => commands::analyze(&config::merge(&a, file, "analyze", &keys)?),
        Command::Symmetries(a) => commands::symmetries(&config::merge(&a, file, "symmetries", &keys)?),
        Command::Simulate(a) => commands::simulate(&config::merge(&a, file, "simulate", &keys)?),
        Command::Estimate(a) => commands::estimate(&config::merge(&a, file, "estimate", &keys)?),
        Command::Benchmark(a) => commands::benchmark(&config::merge(&a, file, "benchmark", &keys)?),
    }
}
