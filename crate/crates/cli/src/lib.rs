//! The `dualseg` command line: phantom generation, training, inference,
//! evaluation, gradient checks and cross-validation reports.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dualseg", version, about = "3-D tissue segmentation with a dual-attention U-Net")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom dataset.
    Synth(SynthArgs),
    /// Train one cross-validation fold (or the configured holdout) and evaluate it.
    Train(TrainArgs),
    /// Segment a volume with a trained checkpoint.
    Infer(InferArgs),
    /// Score a predicted label volume against a reference.
    Evaluate(EvaluateArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate every leave-one-subject-out fold.
    Loso(LosoArgs),
    /// Aggregate the metrics of finished folds.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Nii,
    Raw,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Nii => "nii",
            Format::Raw => "vhdr",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Extent of each cubic phantom.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = dualseg::volume::DEFAULT_NOISE)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = Format::Nii)]
    pub format: Format,
    /// Label codes as `code:name,...`.
    #[arg(long)]
    pub labelmap: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub data: PathBuf,
    /// Leave-one-subject-out fold index; without it `run.holdout` is used.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint written under the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = dualseg::training::EVAL_STRIDE)]
    pub stride: usize,
    #[arg(long)]
    pub labelmap: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub labelmap: Option<String>,
    /// Also write `metrics.txt` and `metrics.kv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Include the whole reduced model.
    #[arg(long)]
    pub full_model: bool,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Random probes per seed.
    #[arg(long, default_value_t = 30)]
    pub probes: usize,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train independent folds concurrently.
    #[arg(long)]
    pub parallel_folds: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Fold output directories holding `metrics.kv`.
    #[arg(long, num_args = 1.., required = true)]
    pub folds: Vec<PathBuf>,
    #[arg(long, default_value = "model")]
    pub model: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out`.
pub fn run_from<I, T>(args: I, out: &mut dyn std::io::Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    commands::run(cli.command, out)
}
