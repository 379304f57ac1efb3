//! `bounded`: synthesize labeled scenes, extract multi-scale features,
//! train and apply the classifier, and score the results.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bounded::synth::Profile;

#[derive(Debug, Parser)]
#[command(name = "bounded", version, about = "Edge and boundary detection in 3D point clouds")]
pub struct Cli {
    /// Worker threads for feature extraction and inference. Falls back to
    /// the config file, then to BOUNDED_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Synth(SynthArgs),
    /// Compute multi-scale features of a cloud.
    Features(FeaturesArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Classify every point of a cloud.
    Classify(ClassifyArgs),
    /// Score a model or the CA baseline on labeled clouds.
    Eval(EvalArgs),
    /// Time index construction, feature extraction and inference.
    Bench(BenchArgs),
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// default-like or defaultpp-like.
    #[arg(long, value_parser = parse_profile)]
    pub profile: Profile,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ScaleArgs {
    /// Comma-separated neighborhood sizes, largest first.
    #[arg(long)]
    pub scales: Option<String>,
    /// Feature columns: full, no-sigma, sigma, sigma-s, ..., or a hex mask.
    #[arg(long)]
    pub mask: Option<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long, conflicts_with_all = ["train", "validation"])]
    pub data: Option<PathBuf>,
    /// Labeled training clouds.
    #[arg(long, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Labeled clouds from which the validation points are sampled.
    #[arg(long, num_args = 1..)]
    pub validation: Vec<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV of the selected run (default: next to the model).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Optimizer steps per run (3000 for small sets, 8000 for large ones).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Two classes only: non-edge and sharp-edge.
    #[arg(long = "2c")]
    pub two_class: bool,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Colored PLY output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-point CSV of labels and probabilities (default: next to the PLY).
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Ca,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// Dataset directory written by `synth`; its evaluation clouds are used.
    #[arg(long, conflicts_with = "inputs")]
    pub data: Option<PathBuf>,
    /// Labeled clouds to evaluate.
    #[arg(long, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cloud precision/recall CSV (default: next to the report).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "model")]
    pub baseline: Option<Baseline>,
    /// CA threshold; 0.025 suits clean modeled scenes, 0.08 CAD scenes.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// CA neighborhood size.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Cloud to benchmark; without it a synthetic cloud is generated.
    #[arg(long, conflicts_with = "points")]
    pub input: Option<PathBuf>,
    /// Approximate size of the generated cloud.
    #[arg(long, default_value_t = 1_000_000)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Model for the inference phase; a randomly initialized one otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
