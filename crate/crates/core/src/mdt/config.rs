use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSubset, FEATURE_DIM};
use crate::types::{NUM_BLADES, NUM_MOVES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub num_moves: usize,
    pub num_blades: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            embed_dim: 128,
            layers: 3,
            heads: 8,
            ff_dim: 512,
            dropout: 0.1,
            num_moves: NUM_MOVES,
            num_blades: NUM_BLADES,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.layers == 0 || self.heads == 0 || self.ff_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::Config("embed_dim must be even for sinusoidal encodings".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.num_moves != NUM_MOVES || self.num_blades != NUM_BLADES {
            return Err(Error::Config(format!(
                "output heads must be {NUM_MOVES} moves and {NUM_BLADES} blade lines"
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn outputs(&self) -> usize {
        self.num_moves + self.num_blades
    }
}

/// Which augmentations run during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    #[default]
    All,
    NoiseOnly,
    TemporalOnly,
    /// Rotation and scaling of the skeleton.
    FeatureSpecific,
    None,
}

impl AugmentMode {
    pub fn temporal(self) -> bool {
        matches!(self, Self::All | Self::TemporalOnly)
    }

    pub fn noise(self) -> bool {
        matches!(self, Self::All | Self::NoiseOnly)
    }

    pub fn geometric(self) -> bool {
        matches!(self, Self::All | Self::FeatureSpecific)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    /// Temporal jitter is drawn uniformly from `-max_jitter..=max_jitter` frames.
    pub max_jitter: i64,
    pub noise_sigma: f64,
    /// Rotation angle bound in radians.
    pub max_rotation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mode: AugmentMode::All,
            max_jitter: 2,
            noise_sigma: 0.05,
            max_rotation: 0.05,
            scale_min: 0.95,
            scale_max: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub batch: usize,
    pub warmup_epochs: f64,
    pub flat_epochs: f64,
    /// Length of the whole schedule; the cosine tail ends here.
    pub total_epochs: usize,
    pub blade_loss_weight: f64,
    /// Ablation switch: weight move and blade losses equally.
    pub equal_weights: bool,
    pub oversample_target: usize,
    /// Blade "6" is thinned to this fraction of the mean of the other blade counts.
    pub blade_six_ratio: f64,
    pub rebalance: bool,
    pub class_weighting: bool,
    pub feature_subset: FeatureSubset,
    pub augment: AugmentConfig,
    /// Filled from the engine-wide seed, never read from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            clip_norm: 0.5,
            batch: 24,
            warmup_epochs: 3.0,
            flat_epochs: 5.0,
            total_epochs: 60,
            blade_loss_weight: 0.677,
            equal_weights: false,
            oversample_target: 400,
            blade_six_ratio: 2.0 / 3.0,
            rebalance: true,
            class_weighting: true,
            feature_subset: FeatureSubset::Full,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("blade_loss_weight", self.blade_loss_weight),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 || self.warmup_epochs < 0.0 || self.flat_epochs < 0.0 {
            return Err(Error::Config("weight_decay and schedule phases must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.batch == 0 || self.total_epochs == 0 {
            return Err(Error::Config("batch and total_epochs must be positive".into()));
        }
        let a = &self.augment;
        if a.max_jitter < 0 || a.noise_sigma < 0.0 || a.max_rotation < 0.0 || !(0.0 < a.scale_min && a.scale_min <= a.scale_max) {
            return Err(Error::Config("invalid augmentation ranges".into()));
        }
        Ok(())
    }

    /// Weight applied to the blade loss, honouring the equal-weights ablation.
    pub fn effective_blade_weight(&self) -> f64 {
        if self.equal_weights {
            1.0
        } else {
            self.blade_loss_weight
        }
    }
}
