use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::Activation;
use crate::consistency::EntropyMode;
use crate::error::{Error, Result};

/// Everything that shapes a training run. Missing JSON keys take the
/// defaults below; unknown keys are rejected so typos surface early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub flow_layers: usize,
    pub encoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub coupling_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub epochs_stage3: usize,
    pub batch_stage12: usize,
    pub batch_stage3: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub scale_clamp: f64,
    /// Cluster count; when absent the dataset's label count is used.
    pub n_clusters: Option<usize>,
    pub seed: u64,
    pub entropy_mode: EntropyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            flow_layers: 6,
            encoder_hidden: vec![256, 128],
            activation: Activation::Relu,
            coupling_hidden: vec![64],
            learning_rate: 3e-4,
            epochs_stage1: 200,
            epochs_stage2: 30,
            epochs_stage3: 20,
            batch_stage12: 128,
            batch_stage3: 512,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            tau: 1.0,
            scale_clamp: 5.0,
            n_clusters: None,
            seed: 0,
            entropy_mode: EntropyMode::PerSample,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative and finite, got {x}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.latent_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "latent_dim must be positive and even for the coupling split, got {}",
                self.latent_dim
            )));
        }
        if self.encoder_hidden.contains(&0) || self.coupling_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.batch_stage12 == 0 || self.batch_stage3 == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        positive("learning_rate", self.learning_rate)?;
        positive("tau", self.tau)?;
        positive("scale_clamp", self.scale_clamp)?;
        non_negative("alpha", self.alpha)?;
        non_negative("beta", self.beta)?;
        non_negative("gamma", self.gamma)?;
        if let Some(k) = self.n_clusters {
            if k < 2 {
                return Err(Error::Config(format!("n_clusters must be at least 2, got {k}")));
            }
        }
        Ok(())
    }

    /// Ablation label of the guidance terms switched on.
    pub fn variant(&self) -> &'static str {
        match (self.alpha > 0.0, self.beta > 0.0) {
            (true, true) => "NAC + PC",
            (true, false) => "NAC Only",
            (false, true) => "PC Only",
            (false, false) => "None",
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Cluster count from the config or, failing that, the labels.
    pub fn resolve_clusters(&self, labeled_classes: Option<usize>) -> Result<usize> {
        let k = self.n_clusters.or(labeled_classes).ok_or_else(|| {
            Error::Config("n_clusters is required for an unlabeled dataset".into())
        })?;
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 clusters, got {k}")));
        }
        Ok(k)
    }
}
