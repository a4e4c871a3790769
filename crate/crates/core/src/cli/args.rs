use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::autoencoder::Activation;
use crate::consistency::EntropyMode;
use crate::trainer::TrainConfig;

#[derive(Debug, Parser)]
#[command(
    name = "imvc",
    version,
    about = "Incomplete multi-view clustering with flow-based recovery of missing views"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic multi-view dataset.
    Synth(SynthArgs),
    /// Remove a fraction of (sample, view) slots from a dataset.
    Mask(MaskArgs),
    /// Train on a dataset and write the report, curves, labels and embedding.
    Train(TrainArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of samples
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Number of clusters
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Number of views
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    /// Width of every view
    #[arg(long, default_value_t = 20)]
    pub view_dim: usize,
    /// Dimension of the shared generating space
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    /// Minimum distance between cluster centres
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// Within-cluster standard deviation
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Per-view additive noise standard deviation
    #[arg(long, default_value_t = 0.05)]
    pub view_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Dataset directory or manifest
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of slots to remove, at most (V-1)/V
    #[arg(long)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the masked copy
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted labels, one per line
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth labels, one per line
    #[arg(long)]
    pub truth: PathBuf,
}

fn parse_lowercase<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    parse_lowercase(s)
}

fn parse_entropy_mode(s: &str) -> Result<EntropyMode, String> {
    parse_lowercase(s)
}

/// Flags override values from `--config`, which override the defaults.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with training settings; keys mirror the long flag names with underscores
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint written by an earlier run with the same settings
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Latent dimension, even [default: 32]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Coupling layers per flow [default: 6]
    #[arg(long)]
    pub flow_layers: Option<usize>,
    /// Encoder hidden widths, comma separated; decoders mirror them [default: 256,128]
    #[arg(long, value_delimiter = ',')]
    pub encoder_hidden: Option<Vec<usize>>,
    /// Hidden activation, relu or tanh [default: relu]
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    /// Coupling network hidden widths, comma separated [default: 64]
    #[arg(long, value_delimiter = ',')]
    pub coupling_hidden: Option<Vec<usize>>,
    /// Adam learning rate for every stage [default: 0.0003]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epochs of stage 1, feature extraction and flow fitting [default: 200]
    #[arg(long)]
    pub epochs_stage1: Option<usize>,
    /// Epochs of stage 2, distribution transfer [default: 30]
    #[arg(long)]
    pub epochs_stage2: Option<usize>,
    /// Epochs of stage 3, guided recovery [default: 20]
    #[arg(long)]
    pub epochs_stage3: Option<usize>,
    /// Batch size of stages 1 and 2 [default: 128]
    #[arg(long)]
    pub batch_stage12: Option<usize>,
    /// Batch size of stage 3 [default: 512]
    #[arg(long)]
    pub batch_stage3: Option<usize>,
    /// Weight of the neighbor consistency loss [default: 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the prototype consistency loss [default: 1]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Entropy weight inside the prototype loss [default: 0.1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Softmax temperature of prototype assignments [default: 1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Bound on coupling log-scales [default: 5]
    #[arg(long)]
    pub scale_clamp: Option<f64>,
    /// Number of clusters; taken from the labels when omitted [default: none]
    #[arg(long)]
    pub n_clusters: Option<usize>,
    /// Seed for initialization, shuffling and clustering [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Entropy term of the prototype loss, per_sample or batch_mean [default: per_sample]
    #[arg(long, value_parser = parse_entropy_mode)]
    pub entropy_mode: Option<EntropyMode>,
}

impl TrainArgs {
    pub fn apply(&self, config: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    config.$field = v.clone();
                }
            )*};
        }
        set!(
            latent_dim,
            flow_layers,
            encoder_hidden,
            activation,
            coupling_hidden,
            learning_rate,
            epochs_stage1,
            epochs_stage2,
            epochs_stage3,
            batch_stage12,
            batch_stage3,
            alpha,
            beta,
            gamma,
            tau,
            scale_clamp,
            seed,
            entropy_mode
        );
        if self.n_clusters.is_some() {
            config.n_clusters = self.n_clusters;
        }
    }
}
