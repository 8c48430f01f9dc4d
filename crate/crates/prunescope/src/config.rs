//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use prunescope_core::importance::{BayesConfig, MetricWeights, DEFAULT_GAMMA};
use prunescope_core::netcore::{Activation, Network};
use prunescope_core::presets;
use prunescope_core::scheduler::ScheduleConfig;
use prunescope_core::training::{OptimizerConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Overrides the configured seed when set.
pub const SEED_ENV: &str = "PRUNESCOPE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Autoencoder {
        latent_dim: usize,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_pixels")]
        input_dim: usize,
    },
    ToyMultihead,
    Mlp {
        dims: Vec<usize>,
        #[serde(default = "default_activation")]
        hidden_activation: Activation,
    },
}

fn default_hidden() -> Vec<usize> {
    presets::AUTOENCODER_HIDDEN.to_vec()
}

fn default_pixels() -> usize {
    presets::IMAGE_PIXELS
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl ModelSpec {
    pub fn build(&self, seed: u64) -> Result<Network> {
        Ok(match self {
            ModelSpec::Autoencoder { latent_dim, hidden, input_dim } => presets::autoencoder_with(*input_dim, hidden, *latent_dim, seed)?,
            ModelSpec::ToyMultihead => presets::toy_multihead(seed)?,
            ModelSpec::Mlp { dims, hidden_activation } => presets::mlp_with(dims, *hidden_activation, seed)?,
        })
    }

    fn validate(&self) -> Result<()> {
        let widths: Vec<usize> = match self {
            ModelSpec::Autoencoder { latent_dim, hidden, input_dim } => {
                let mut w = hidden.clone();
                w.extend([*latent_dim, *input_dim]);
                w
            }
            ModelSpec::ToyMultihead => Vec::new(),
            ModelSpec::Mlp { dims, .. } => {
                if dims.len() < 2 {
                    return Err(AppError::Config("mlp needs at least an input and an output width".into()));
                }
                dims.clone()
            }
        };
        if widths.contains(&0) {
            return Err(AppError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// IDX image files; pixels are scaled to `[0, 1]` and reconstructed.
    Mnist {
        train_images: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        /// Use only the first `n` training images.
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// Seeded affine data. Autoencoders get points on a low-rank affine subspace,
    /// other models an affine regression target.
    Synthetic {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_rank")]
        rank: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_samples() -> usize {
    256
}

fn default_rank() -> usize {
    4
}

impl DataSpec {
    pub fn synthetic() -> Self {
        DataSpec::Synthetic { samples: default_samples(), rank: default_rank(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataSpec,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lpg")]
    pub layers_per_group: usize,
    #[serde(default)]
    pub bayes: BayesConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub metric_weights: MetricWeights,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Groups the pruner leaves alone.
    #[serde(default)]
    pub protect: Vec<String>,
}

fn default_epochs() -> usize {
    110
}

fn default_batch() -> usize {
    64
}

fn default_lpg() -> usize {
    1
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl ExperimentConfig {
    /// The toy multi-head model on synthetic data.
    pub fn toy() -> Self {
        serde_json::from_str(r#"{"model": {"preset": "toy_multihead"}, "data": {"source": "synthetic"}}"#).expect("built-in config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AppError::json("config", e))
    }

    /// Reads, applies the seed override, resolves data paths against the
    /// config's directory and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSpec::Mnist { train_images, test_images, .. } = &mut self.data {
            for p in std::iter::once(train_images).chain(test_images.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| AppError::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.layers_per_group == 0 {
            return Err(AppError::Config("layers_per_group must be at least 1".into()));
        }
        match &self.data {
            DataSpec::Mnist { train_images, test_images, .. } => {
                for p in std::iter::once(train_images).chain(test_images) {
                    if !p.is_file() {
                        return Err(AppError::Config(format!("data file {} does not exist", p.display())));
                    }
                }
                if !matches!(self.model, ModelSpec::Autoencoder { .. }) {
                    return Err(AppError::Config("image data needs the autoencoder preset".into()));
                }
            }
            DataSpec::Synthetic { samples, rank, .. } => {
                if *samples == 0 || *rank == 0 {
                    return Err(AppError::Config("synthetic data needs positive samples and rank".into()));
                }
            }
        }
        self.metric_weights.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            bayes: self.bayes,
            schedule: self.schedule,
            gamma: self.gamma,
            optimizer: self.optimizer,
            unit_scores: true,
        }
    }
}
