use std::path::PathBuf;

use aur::backbone::ModelKind;
use aur::data::DataFormat;
use aur::eval::Protocol;
use aur::uncertainty::Activation;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aur", version, about = "Aleatoric uncertainty-aware recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded skewed-popularity dataset.
    Synth(SynthArgs),
    /// Train the expectation backbone.
    Train(TrainArgs),
    /// Train the uncertainty estimator against a frozen backbone.
    TrainUncertainty(TrainUncertaintyArgs),
    /// Write top-K recommendation lists as TSV.
    Recommend(RecommendArgs),
    /// Recall/NDCG reports under the evaluation protocols.
    Evaluate(EvaluateArgs),
    /// Correlation, KL, coverage and calibration diagnostics.
    Diagnose(DiagnoseArgs),
}

/// Configuration sources and data location shared by every command.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reuse the configuration echoed in an earlier artifact.
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DataFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub per_user: Option<usize>,
    /// Fraction of each user's interactions held out for testing.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Output directory for train.txt, test.txt and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// L2 coefficient.
    #[arg(long)]
    pub reg: Option<f64>,
    /// Bernoulli rate for keeping negatives.
    #[arg(long)]
    pub negative_rate: Option<f64>,
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainUncertaintyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Backbone checkpoint.
    #[arg(long)]
    pub backbone: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub scale_k: Option<f64>,
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Score this many random items per batch instead of all.
    #[arg(long)]
    pub item_subsample: Option<usize>,
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Trained models to rank with.
#[derive(Debug, Args)]
pub struct Models {
    #[arg(long)]
    pub backbone: PathBuf,
    /// Uncertainty checkpoint; required when lambda < 1.
    #[arg(long)]
    pub uncertainty: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Overrides the checkpoint's scale K at ranking time.
    #[arg(long)]
    pub scale_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub models: Models,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Rank tail items only.
    #[arg(long)]
    pub tail_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    One(Protocol),
    All,
}

impl std::str::FromStr for ProtocolChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(ProtocolChoice::All)
        } else {
            s.parse().map(ProtocolChoice::One)
        }
    }
}

impl ProtocolChoice {
    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::One(p) => vec![p],
            ProtocolChoice::All => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub models: Models,
    /// overall, tail-absolute, tail-relative or all.
    #[arg(long, default_value = "overall")]
    pub protocol: ProtocolChoice,
    /// Comma-separated metric cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    /// Output directory; one `eval_<protocol>.json` per protocol.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub models: Models,
    /// Cutoff for the calibration ratios.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}
