use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModalityPair, ModelConfig};
use crate::objectives::RecNormalization;
use crate::video::{ClipShape, PatchGeometry};

/// How evaluation builds the auxiliary-branch mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMaskMode {
    /// Tube mask at the training ratio, seeded from a hash of the clip id.
    #[default]
    TrainingRatioDeterministic,
    /// Every token visible.
    Unmasked,
}

impl std::str::FromStr for EvalMaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training-ratio-deterministic" => Ok(Self::TrainingRatioDeterministic),
            "unmasked" => Ok(Self::Unmasked),
            other => Err(Error::Config(format!("unknown eval mask mode `{other}`"))),
        }
    }
}

/// Flat training configuration; the TOML file uses these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub modality_pair: ModalityPair,
    pub lambda: f64,
    pub mask_ratio: f64,
    pub patch_size: usize,
    pub tube_size: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub enc_depth: usize,
    pub enc_width: usize,
    pub enc_heads: usize,
    pub dec_depth: usize,
    pub dec_width: usize,
    pub dec_heads: usize,
    pub mlp_ratio: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub drop_path: f64,
    pub momentum: f64,
    pub seed: u64,
    pub eval_mask_mode: EvalMaskMode,
    pub rec_normalization: RecNormalization,
    /// Restricts training and validation records to one domain.
    pub train_domain: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Full-scale hyper-parameters at 16x224x224 with a ViT-B sized encoder.
    pub fn full_scale() -> Self {
        Self {
            modality_pair: ModalityPair::RGB_LDP,
            lambda: 0.1,
            mask_ratio: 0.75,
            patch_size: 16,
            tube_size: 2,
            frames: 16,
            channels: 3,
            height: 224,
            width: 224,
            enc_depth: 12,
            enc_width: 768,
            enc_heads: 12,
            dec_depth: 4,
            dec_width: 384,
            dec_heads: 6,
            mlp_ratio: 4,
            batch_size: 8,
            epochs: 75,
            lr_start: 5e-5,
            lr_min: 1e-6,
            weight_decay: 0.05,
            drop_path: 0.01,
            momentum: 0.9,
            seed: 0,
            eval_mask_mode: EvalMaskMode::TrainingRatioDeterministic,
            rec_normalization: RecNormalization::PerElement,
            train_domain: None,
        }
    }

    /// CPU-sized run on 8x32x32 synthetic clips.
    pub fn desk() -> Self {
        Self {
            patch_size: 8,
            frames: 8,
            height: 32,
            width: 32,
            enc_depth: 4,
            enc_width: 64,
            enc_heads: 4,
            dec_depth: 2,
            dec_width: 32,
            dec_heads: 2,
            mlp_ratio: 2,
            epochs: 20,
            lr_start: 0.02,
            lr_min: 1e-4,
            seed: 7,
            ..Self::full_scale()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn clip_shape(&self) -> ClipShape {
        ClipShape::new(self.frames, self.channels, self.height, self.width)
    }

    pub fn geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(self.clip_shape(), self.tube_size, self.patch_size)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            geometry: self.geometry()?,
            enc_depth: self.enc_depth,
            enc_width: self.enc_width,
            enc_heads: self.enc_heads,
            dec_depth: self.dec_depth,
            dec_width: self.dec_width,
            dec_heads: self.dec_heads,
            mlp_ratio: self.mlp_ratio,
            drop_path: self.drop_path,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} is outside [0, 1]", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!("mask ratio {} is outside [0, 1)", self.mask_ratio)));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_start) {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 < lr_min <= lr_start, got {} and {}",
                self.lr_min, self.lr_start
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("weight decay must be >= 0 and momentum in [0, 1)".into()));
        }
        let geometry = self.geometry().map_err(|e| Error::Config(e.to_string()))?;
        if geometry.masked_count(self.mask_ratio) == 0 {
            return Err(Error::Config(format!(
                "mask ratio {} masks no patches; the reconstruction loss needs at least one",
                self.mask_ratio
            )));
        }
        self.model_config().map(|_| ())
    }
}
