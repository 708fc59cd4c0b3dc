use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use higru::{SelectMetric, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "higru",
    version,
    about = "Hierarchical GRU emotion recognition for dialogue"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and keep the best validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled corpus.
    Eval(EvalArgs),
    /// Write per-utterance predictions as JSON Lines.
    Predict(EvalArgs),
    /// Train once per loss-weight exponent in 0, 0.25, ..., 1.5.
    SweepAlpha(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Higru,
    HigruF,
    HigruSf,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Higru => Variant::Plain,
            VariantArg::HigruF => Variant::Fused,
            VariantArg::HigruSf => Variant::SelfAttnFused,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Wa,
    Uwa,
}

impl From<MetricArg> for SelectMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Wa => SelectMetric::Wa,
            MetricArg::Uwa => SelectMetric::Uwa,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PathArgs {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    /// Word vectors in text format; random vectors when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub d0: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    /// Comma-separated hidden widths of the classifier, e.g. "100,100".
    #[arg(long)]
    pub fc: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub freeze_embeddings: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub anneal_every: Option<usize>,
    #[arg(long, value_enum)]
    pub select_metric: Option<MetricArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub paths: PathArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Suppress per-epoch progress on standard error.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub paths: PathArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Trainings to run at once.
    #[arg(long)]
    pub jobs: Option<usize>,
}
