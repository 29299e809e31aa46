//! `pxm`: synthesise cohorts, train, evaluate.

mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pxm", version, about = "Probabilistic ECG/text embeddings with a frozen teacher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired cohort.
    Synth(SynthArgs),
    /// Train on a cohort directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a cohort.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Run configuration (JSON); the `cohort` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `cohort.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub loss_variant: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Zeroshot,
    Probe,
    Retrieve,
    Window,
    Ablate,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Not needed for `ablate`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the run manifest next to the checkpoint, if any.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Window stride in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub stride: f64,
    /// 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Restricts `ablate` to one variant.
    #[arg(long)]
    pub loss_variant: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
