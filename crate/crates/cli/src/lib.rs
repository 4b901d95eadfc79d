//! Command-line front end: degradation synthesis, denoising, deblurring,
//! joint upsampling, the quantile residual study, and comparison runs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
pub mod config;
pub mod synthetic;

pub use config::{RunConfig, Task};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aquasi::Error),
    #[error("{0}")]
    Config(String),
    #[error("--{0} is required for this command")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Missing(_) => "missing-argument",
            CliError::Io { .. } => "io",
        }
    }

    /// Single-line description.
    pub fn detail(&self) -> String {
        self.to_string().replace(['\n', '\r'], " ")
    }

    /// The `error: <kind>: <detail>` line printed on failure.
    pub fn report(&self) -> String {
        format!("error: {}: {}", self.kind(), self.detail())
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aquasi", version, about = "Image restoration with the AQuaSI prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// TV + AQuaSI denoising with ADMM
    Denoise(CommonArgs),
    /// Non-blind deblurring with a known kernel
    Deblur(CommonArgs),
    /// Guided depth upsampling
    Upsample(CommonArgs),
    /// Synthesize degraded inputs (noise, blur, decimation)
    Degrade(CommonArgs),
    /// Histogram of quantile residuals as CSV
    ResidualHist(CommonArgs),
    /// AQuaSI vs. TV-only vs. RED on one input, with a metrics CSV
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Static guidance image (multi-channel guides are averaged)
    #[arg(long)]
    pub guidance: Option<PathBuf>,
    /// Output image, CSV, or (for compare) directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flat `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the energy trace CSV here
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Couple channels through one shared selection operator
    #[arg(long)]
    pub multichannel: bool,
    /// Print the resolved configuration and exit
    #[arg(long)]
    pub print_config: bool,
    /// Ground truth for metrics (compare)
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Blur kernel file (deblur, degrade)
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Override any config key, e.g. `--set lambda=2`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Command {
    pub fn split(&self) -> (Task, &CommonArgs) {
        match self {
            Command::Denoise(a) => (Task::Denoise, a),
            Command::Deblur(a) => (Task::Deblur, a),
            Command::Upsample(a) => (Task::Upsample, a),
            Command::Degrade(a) => (Task::Degrade, a),
            Command::ResidualHist(a) => (Task::ResidualHist, a),
            Command::Compare(a) => (Task::Compare, a),
        }
    }
}

/// Resolve the run configuration for `task` from its defaults, the config
/// file, `--set` overrides, and flags (in increasing precedence).
pub fn resolve_config(task: Task, args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::for_task(task);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for assignment in &args.overrides {
        cfg.set_assignment(assignment)?;
    }
    let paths = [
        (&args.input, &mut cfg.input),
        (&args.guidance, &mut cfg.guidance),
        (&args.output, &mut cfg.output),
        (&args.trace, &mut cfg.trace),
        (&args.reference, &mut cfg.reference),
        (&args.kernel, &mut cfg.kernel),
    ];
    for (flag, slot) in paths {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.multichannel {
        cfg.multichannel = true;
    }
    Ok(cfg)
}

/// Run a parsed command line. Returns the text to print on stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let (task, args) = cli.command.split();
    let cfg = resolve_config(task, args)?;
    if args.print_config {
        return Ok(cfg.to_text());
    }
    execute(&cfg)
}

/// Run a task from a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    match cfg.task {
        Task::Denoise => commands::denoise(cfg),
        Task::Deblur => commands::deblur(cfg),
        Task::Upsample => commands::upsample(cfg),
        Task::Degrade => commands::degrade(cfg),
        Task::ResidualHist => commands::residual_hist(cfg),
        Task::Compare => commands::compare(cfg),
    }
}
