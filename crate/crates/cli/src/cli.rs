//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "npprov", version, about = "Train, evaluate and audit neural processes with position-only variance")]
pub struct Cli {
    /// Plain-text key=value file with settings; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus a per-epoch loss trace.
    Train(TrainArgs),
    /// Score a checkpoint on one or more evaluation suites.
    Eval(EvalArgs),
    /// Compare predicted std before and after scaling every value by ten.
    AuditVariance(AuditArgs),
    /// Write a task archive, one JSON task per line.
    SampleTasks(SampleArgs),
    /// Write grid, context and target rows behind a prediction plot.
    ExportPlot(PlotArgs),
}

/// Inputs that select where tasks come from.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Smart Meter CSV (timestamp,energy_kwh_hh) for the smartmeter dataset.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Base seed [default: $NPPROV_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// eq, matern, weakly-periodic, smartmeter or mnist.
    #[arg(long)]
    pub dataset: Option<String>,

    /// np-prov or convcnp [default: np-prov].
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub tasks_per_epoch: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Start from the full protocol (200 epochs of 256 tasks) instead of the
    /// desk-scale defaults (30 of 64).
    #[arg(long)]
    pub full: bool,

    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Loss trace to write [default: <out>.trace.jsonl].
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,

    /// IDX image file for the mnist dataset; without it a synthetic stroke
    /// corpus is used.
    #[arg(long, value_name = "PATH")]
    pub images: Option<PathBuf>,

    /// Size of the synthetic stroke corpus [default: 512].
    #[arg(long)]
    pub synthetic_images: Option<usize>,

    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,

    /// Comma-separated suites: in-range, ood-x, ood-y, compacted
    /// [default: in-range].
    #[arg(long)]
    pub suite: Option<String>,

    /// Tasks per repeat [default: 2048].
    #[arg(long)]
    pub n_tasks: Option<usize>,

    /// Independent repeats [default: 6].
    #[arg(long)]
    pub repeats: Option<usize>,

    /// Dataset to draw tasks from [default: the checkpoint's].
    #[arg(long)]
    pub dataset: Option<String>,

    /// Report to write, one JSON record per suite.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,

    /// Tasks to audit [default: 256].
    #[arg(long)]
    pub n_tasks: Option<usize>,

    /// Dataset to draw tasks from [default: the checkpoint's].
    #[arg(long)]
    pub dataset: Option<String>,

    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: Option<String>,

    /// Suite the tasks are drawn from [default: in-range].
    #[arg(long)]
    pub suite: Option<String>,

    #[arg(long)]
    pub count: Option<usize>,

    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,

    /// Index of the task, as numbered by sample-tasks with the same seed and
    /// suite [default: 0].
    #[arg(long)]
    pub task_index: Option<u64>,

    /// Suite the task is drawn from [default: in-range].
    #[arg(long)]
    pub suite: Option<String>,

    /// Dataset to draw the task from [default: the checkpoint's].
    #[arg(long)]
    pub dataset: Option<String>,

    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub source: SourceArgs,
}
