//! The `lspm` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod manifest;

/// An error caused by the invocation rather than by the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "lspm", version, about = "Latent shrinkage position models for network data")]
pub struct Cli {
    /// Worker threads for chains and study jobs (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate networks from a study preset or from explicit parameters.
    Simulate(SimulateArgs),
    /// Fit a model by MCMC and write chain traces.
    Fit(FitArgs),
    /// Summarise a fit: posterior summaries, R-hat and effective dimensions.
    Diagnose(DiagnoseArgs),
    /// Posterior predictive checks for a fit.
    Ppc(PpcArgs),
    /// Run a whole simulation study: simulate, fit, diagnose and check.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logit,
    Poisson,
}

impl From<ModelArg> for lspm_core::Link {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logit => lspm_core::Link::Logit,
            ModelArg::Poisson => lspm_core::Link::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Edgelist,
    Dense,
}

impl From<FormatArg> for lspm_core::FileFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Edgelist => lspm_core::FileFormat::EdgeList,
            FormatArg::Dense => lspm_core::FileFormat::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZUpdateArg {
    Whole,
    Pernode,
}

impl From<ZUpdateArg> for lspm_core::ZUpdateMode {
    fn from(z: ZUpdateArg) -> Self {
        match z {
            ZUpdateArg::Whole => lspm_core::ZUpdateMode::WholeMatrix,
            ZUpdateArg::Pernode => lspm_core::ZUpdateMode::PerNode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study preset 1 to 4.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), conflicts_with = "n")]
    pub study: Option<u8>,
    /// Single setting of the preset, e.g. `n=50`, `alpha=10`, `high`.
    #[arg(long, requires = "study")]
    pub variant: Option<String>,
    /// Networks per setting (default: 30 for presets, 1 otherwise).
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Number of nodes for a custom simulation.
    #[arg(long, requires_all = ["alpha", "delta"])]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Comma-separated shrinkage strengths, one per true dimension.
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "logit")]
    pub model: ModelArg,
    #[arg(long)]
    pub directed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// TOML or JSON config, or a previous run manifest; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// First node label in edge lists (0 or 1).
    #[arg(long)]
    pub index_base: Option<u8>,
    /// Treat the network as directed.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub directed: Option<bool>,
    /// Node count, for edge lists whose last nodes are isolated.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Truncation level p.
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step_z: Option<f64>,
    #[arg(long)]
    pub step_alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub z_update: Option<ZUpdateArg>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_alpha: Option<f64>,
    #[arg(long)]
    pub sigma2_alpha: Option<f64>,
    /// Standard deviation of per-chain jitter added to the initial positions.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Output directory of `lspm fit`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Truth sidecar written by `lspm simulate`, for Procrustes correlation.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub jump_factor: Option<f64>,
    #[arg(long)]
    pub width_factor: Option<f64>,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PpcArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Observed network; defaults to the fit's input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest count tabulated separately in frequency tables.
    #[arg(long, default_value_t = 10)]
    pub max_count: u32,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// TOML or JSON config, or a previous study manifest; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub study: Option<u8>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    /// Networks per setting.
    #[arg(long)]
    pub networks: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Posterior predictive replicates per fit.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("LSPM_LOG", "info");
    // A second call (as in tests) is harmless.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            eprintln!("error: {e:#}");
            if usage {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.threads {
        Some(0) => Err(UsageError("--threads must be at least 1".into()).into()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Diagnose(a) => commands::diagnose::run(a),
        Command::Ppc(a) => commands::ppc::run(a),
        Command::Study(a) => commands::study::run(a),
    }
}
