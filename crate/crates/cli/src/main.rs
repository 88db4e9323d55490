//! `monodrift` command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "monodrift", version, about = "Strictly decreasing drift estimation for recurrent diffusions")]
pub struct Cli {
    /// Flat key/value TOML file with run settings [default: none, built-in defaults]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit [default: off]
    #[arg(long, global = true)]
    pub dump_config: bool,

    /// Progress messages on stderr; repeat for more detail [default: 0]
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate path copies of a built-in model and write them as CSV
    Simulate(SimulateArgs),
    /// Nadaraya–Watson drift estimate from a path CSV
    Estimate(EstimateArgs),
    /// Strictly decreasing smoothing of a tabulated curve
    Monotonize(MonotonizeArgs),
    /// Repeated Monte-Carlo study with report, table and figure data
    Experiment(ExperimentArgs),
}

/// Estimator settings shared by the estimating subcommands.
#[derive(Debug, Args, Default)]
pub struct EstimatorArgs {
    /// Kernel family: gaussian or triweight [default: gaussian]
    #[arg(long)]
    pub kernel: Option<String>,
    /// Left end of the estimation interval [default: -1]
    #[arg(long, allow_hyphen_values = true)]
    pub l0: Option<f64>,
    /// Right end of the estimation interval [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    /// Interval margin epsilon [default: 0.01]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Start of the observation time window [default: 0.5]
    #[arg(long)]
    pub t0: Option<f64>,
    /// Density threshold below which the drift estimate is set to 0 [default: 0.05]
    #[arg(long)]
    pub m_threshold: Option<f64>,
    /// Enforce the bandwidth ranges of the risk bounds [default: off]
    #[arg(long)]
    pub theory_strict: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in model: A or B [default: A]
    #[arg(long)]
    pub model: Option<String>,
    /// Number of path copies N [default: 100]
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Time steps per path n [default: 50]
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Time horizon T [default: 5]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// RNG seed; overrides MONODRIFT_SEED and the config file [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cut the copies out of one long path at returns to x0 [default: off]
    #[arg(long)]
    pub from_long_path: bool,
    /// Output CSV [default: <out_dir>/paths.csv]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Path CSV written by `simulate` (required)
    #[arg(long, value_name = "FILE")]
    pub paths: PathBuf,
    /// Bandwidth value, or `loocv` for cross-validation over --eta-grid [default: loocv]
    #[arg(long, default_value = "loocv", hide_default_value = true)]
    pub eta: String,
    /// Candidate bandwidths: `<step>x<count>` or a comma list [default: 0.05x35]
    #[arg(long)]
    pub eta_grid: Option<String>,
    /// Output grid as `lo,hi,npts` [default: l0-2eps,r0+2eps,200]
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Output CSV [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct MonotonizeArgs {
    /// Input curve CSV (`abscissa,value`) spanning [l0-2eps, r0+2eps] (required)
    #[arg(long, value_name = "FILE")]
    pub curve: PathBuf,
    /// Outer bandwidth ell [default: none, use --adaptive]
    #[arg(long)]
    pub ell: Option<f64>,
    /// Inverse bandwidth h [default: none, use --adaptive]
    #[arg(long)]
    pub h: Option<f64>,
    /// Select (ell, h) from the square of this grid: `<step>x<count>` or a comma list [default: lh_grid = 0.05x35]
    #[arg(long, value_name = "GRID", num_args = 0..=1, default_missing_value = "")]
    pub adaptive: Option<String>,
    /// oracle (known endpoint values) or practical (estimated) [default: oracle]
    #[arg(long)]
    pub mode: Option<String>,
    /// Endpoint values `b(r_eps),b(l_eps)` for oracle mode [default: none]
    #[arg(long, allow_hyphen_values = true, value_name = "A_LO,A_HI")]
    pub endpoints: Option<String>,
    /// Slope bound m_b [default: slope bound of the configured model]
    #[arg(long)]
    pub m_b: Option<f64>,
    /// Output CSV on the evaluation grid of [l0, r0] [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Built-in model: A or B [default: A]
    #[arg(long)]
    pub model: Option<String>,
    /// Experiment settings file, same format as --config; applied after it [default: none]
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of repetitions [default: 100]
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Number of path copies N [default: 100]
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Time steps per path n [default: 50]
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Time horizon T [default: 5]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Base seed; repetition r uses seed + r [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Candidate eta values [default: 0.05x35]
    #[arg(long)]
    pub eta_grid: Option<String>,
    /// Candidate ell and h values, combined as a square grid [default: 0.05x35]
    #[arg(long)]
    pub lh_grid: Option<String>,
    /// oracle or practical monotone estimator [default: oracle]
    #[arg(long)]
    pub mode: Option<String>,
    /// Number of repetitions written as figure curves [default: 5]
    #[arg(long)]
    pub figure_curves: Option<usize>,
    /// Fixed eta instead of cross-validation (needs --fixed-ell and --fixed-h) [default: none]
    #[arg(long)]
    pub fixed_eta: Option<f64>,
    /// Fixed ell instead of adaptive selection [default: none]
    #[arg(long)]
    pub fixed_ell: Option<f64>,
    /// Fixed h instead of adaptive selection [default: none]
    #[arg(long)]
    pub fixed_h: Option<f64>,
    #[command(flatten)]
    pub est: EstimatorArgs,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<monodrift::Error> for Failure {
    fn from(e: monodrift::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut files: Vec<&std::path::Path> = cli.config.iter().map(|p| p.as_path()).collect();
    if let Some(Command::Experiment(ExperimentArgs { spec: Some(spec), .. })) = &cli.command {
        files.push(spec.as_path());
    }
    let mut cfg = RunConfig::load_layered(&files)?;
    cfg.apply_env()?;
    if cli.verbose > 0 {
        cfg.verbosity = cli.verbose;
    }
    if let Some(cmd) = &cli.command {
        commands::apply_overrides(&mut cfg, cmd)?;
    }
    cfg.validate()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        None => Err(ConfigError::new("<subcommand>", "expected one of simulate, estimate, monotonize, experiment").into()),
        Some(cmd) => commands::dispatch(&cfg, cmd),
    }
}
