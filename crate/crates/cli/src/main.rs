//! `specband`: data preparation, training, band selection, cube reduction
//! and evaluation from the command line.

mod commands;
mod fail;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "specband", version, about = "Attention-CNN band selection for hyperspectral cubes")]
pub struct Cli {
    /// Seed every random choice of this invocation derives from.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte-Carlo runs executed concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Directory receiving every artifact and the manifest.
    #[arg(long, global = true, default_value = "specband-out")]
    pub out_dir: PathBuf,

    /// Experiment configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network on a balanced split and save a checkpoint.
    Train(TrainArgs),
    /// Aggregate heatmaps and select bands for each contamination rate.
    Select(SelectArgs),
    /// Monte-Carlo training, heatmap averaging, selection and evaluation on
    /// the reduced bands.
    Pipeline(PipelineArgs),
    /// Keep only selected bands of a cube.
    Reduce(ReduceArgs),
    /// Generate a synthetic cube with planted informative bands.
    Synth(SynthArgs),
    /// Evaluate a checkpoint, or run the Monte-Carlo protocol without band
    /// selection.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Cube payload (raw float32 LE, or `.csv`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cube header; defaults to the payload path with a `.toml` extension.
    #[arg(long)]
    pub header: Option<PathBuf>,
    /// Ground truth (raw uint16 LE, or `.csv`).
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of building blocks (2 to 4).
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long)]
    pub attention: bool,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Heatmap CSV files (`band,score`).
    #[arg(long, num_args = 1..)]
    pub heatmaps: Vec<PathBuf>,
    /// Attention checkpoints; heatmaps are extracted from the training
    /// split of `--data`/`--gt` drawn with `--seed`.
    #[arg(long, num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Contamination rates; defaults to 0.01 to 0.05.
    #[arg(long, num_args = 1..)]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Architectures such as CNN-2A or 3.
    #[arg(long, num_args = 1..)]
    pub arch: Vec<String>,
    #[arg(long, num_args = 1..)]
    pub lambda: Vec<f64>,
    /// Skip retraining on the selected bands.
    #[arg(long)]
    pub no_reduced: bool,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub header: Option<PathBuf>,
    /// Selection report (TOML with `selected`) or a plain list of indices.
    #[arg(long)]
    pub selection: PathBuf,
    /// Output payload name inside the output directory.
    #[arg(long, default_value = "reduced.bin")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub bands: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Comma-separated planted band indices.
    #[arg(long, value_delimiter = ',', default_value = "5,13,27")]
    pub planted: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 30)]
    pub rows: usize,
    #[arg(long, default_value_t = 60)]
    pub cols: usize,
    /// Base name of the written files.
    #[arg(long, default_value = "synth")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, num_args = 1..)]
    pub arch: Vec<String>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECBAND_LOG", "warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match commands::run(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
