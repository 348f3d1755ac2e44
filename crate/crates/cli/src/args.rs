use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mapfuse", version, about = "Fuse aerial imagery with map layers for semantic labeling")]
pub struct Cli {
    /// Worker threads (falls back to MAPFUSE_THREADS, then all cores).
    #[arg(long, global = true, env = "MAPFUSE_THREADS")]
    pub threads: Option<usize>,
    /// Progress messages on standard error.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Predict label maps with a trained model.
    Predict(PredictArgs),
    /// Score a predicted label map against a reference.
    Eval(EvalArgs),
    /// Run an ablation grid and write JSON and Markdown reports.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset specification (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub test_scenes: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub p_drop: Option<f64>,
    #[arg(long)]
    pub jitter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dilate_erode: Option<i32>,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "fusenet")]
    pub model: String,
    #[arg(long)]
    pub encoding: Option<String>,
    /// Training configuration (JSON), optionally with an `arch` object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations_per_epoch: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decoder_trunc: Option<usize>,
    /// Erosion radius of the final test-split evaluation.
    #[arg(long, default_value_t = 3)]
    pub erode: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Output directory of `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scene id; defaults to every test scene.
    #[arg(long)]
    pub scene: Option<String>,
    /// Must match the encoding the model was trained with, if given.
    #[arg(long)]
    pub encoding: Option<String>,
    #[arg(long, default_value_t = 128)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub r#ref: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub erode: usize,
    /// Dataset directory supplying the class table.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confusion-matrix heat map (PPM).
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Print the plain-text table to standard error.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Ablation specification (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Use this dataset instead of generating one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Replaces the seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the model list.
    #[arg(long, value_delimiter = ',')]
    pub model: Option<Vec<String>>,
    /// Replaces the encoding list.
    #[arg(long, value_delimiter = ',')]
    pub encoding: Option<Vec<String>>,
}
