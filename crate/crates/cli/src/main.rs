//! `sfr`: synthesize, ingest, train, predict, evaluate, ablate, fit the
//! kernel baseline and export heatmaps.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sfr_core::train::Variant;
use sfr_core::{Part, Split};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "sfr", version, about = "Region-to-region sound field reconstruction")]
pub struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of frequency bins processed at once.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Command configuration (JSON): scenario for synth, train config for
    /// train and ablate, ingest options for ingest, sigma grid for baseline.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset for one split of a scenario.
    Synth(SynthArgs),
    /// Convert a manifest of impulse responses into a dataset.
    Ingest(IngestArgs),
    /// Train one real and one imaginary model per frequency.
    Train(TrainArgs),
    /// Predict every pair of a dataset with trained models.
    Predict(PredictArgs),
    /// Score models on a test dataset.
    Eval(EvalArgs),
    /// Train and score all four model variants on a scenario.
    Ablate(AblateArgs),
    /// Fit the kernel ridge regression baseline.
    Baseline(BaselineArgs),
    /// Export one field component over a receiver grid.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; same as --config.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    /// Comma-separated frequencies (Hz) overriding the scenario.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest JSON listing impulse-response CSV files.
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    /// Seconds of each response kept.
    #[arg(long)]
    pub truncation: Option<f64>,
    #[arg(long)]
    pub speed_of_sound: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset.
    pub dataset: PathBuf,
    /// Scenario JSON giving the receiver and source regions.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// full, no_pde, plain_pinn or plain.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub n_pde: Option<usize>,
    /// receiver, source or both_averaged.
    #[arg(long)]
    pub laplacian_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    /// Directory written by `train`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Directory written by `baseline`.
    #[arg(long)]
    pub krr: Option<PathBuf>,
    /// Use the scenario's closed-form field.
    #[arg(long)]
    pub oracle: bool,
    /// Scenario for --oracle.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Dataset whose pairs are predicted.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Test dataset.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    /// Variant label for the --models rows.
    #[arg(long, default_value = "full")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Training dataset.
    pub dataset: PathBuf,
    /// Comma-separated regularization candidates.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub frequency: f64,
    /// Loudspeaker index on the scenario circle.
    #[arg(long)]
    pub source_index: usize,
    #[arg(long, default_value = "real")]
    pub part: Part,
    /// Points per side of the square grid.
    #[arg(long)]
    pub points: Option<usize>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}` (train or test)")),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Baseline(_) => "baseline",
            Command::Heatmap(_) => "heatmap",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut manifest = RunManifest::new(cli.command.name());
    manifest.seed = cli.seed;
    let result = commands::dispatch(&cli, &mut manifest);
    manifest.finish(&result, start.elapsed().as_secs_f64());
    if let Err(e) = manifest.save() {
        eprintln!("warning: could not write manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
