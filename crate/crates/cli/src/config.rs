//! Run configuration. Every key is optional; a missing key takes the
//! desk-scale default shown by `wafer config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wafer_core::autoencoder::{AeTrainConfig, AugmentConfig};
use wafer_core::baselines::BaselineConfig;
use wafer_core::cnn::{CnnArch, CnnTrainConfig, CnnVariant};
use wafer_core::nn::AdamConfig;
use wafer_core::occlusion::OcclusionConfig;
use wafer_core::synth::{SynthParams, DESK_COUNTS};
use wafer_core::N_CLASSES;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub autoencoder: AeTrainConfig,
    pub augment: AugmentSection,
    pub cnn: CnnSection,
    pub baselines: BaselineConfig,
    pub occlusion: OcclusionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Wafer records to ingest; synthetic data is generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Run directory; `data/`, `checkpoints/` and `reports/` live inside.
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic wafers per class, in label order.
    pub counts: [usize; N_CLASSES],
    pub train_fraction: f64,
    pub synth: SynthParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub enabled: bool,
    pub noise_sigma: f64,
    pub target_per_class: usize,
    pub batch_size: usize,
}

impl AugmentSection {
    pub fn params(&self) -> AugmentConfig {
        AugmentConfig {
            noise_sigma: self.noise_sigma,
            target_per_class: self.target_per_class,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSection {
    pub variant: CnnVariant,
    pub conv_filters: [usize; 3],
    pub dense_units: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub adam: AdamConfig,
}

impl CnnSection {
    pub fn arch(&self, variant: CnnVariant) -> CnnArch {
        CnnArch {
            variant,
            conv_filters: self.conv_filters,
            dense_units: self.dense_units,
        }
    }

    pub fn train_config(&self) -> CnnTrainConfig {
        CnnTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            val_fraction: self.val_fraction,
            adam: self.adam,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            autoencoder: AeTrainConfig::default(),
            augment: AugmentSection::default(),
            cnn: CnnSection::default(),
            baselines: BaselineConfig::default(),
            occlusion: OcclusionConfig::default(),
        }
    }
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: PathBuf::from("wafer-run"),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            counts: DESK_COUNTS,
            train_fraction: 0.8,
            synth: SynthParams::default(),
        }
    }
}

impl Default for AugmentSection {
    fn default() -> Self {
        let base = AugmentConfig::default();
        Self {
            enabled: true,
            noise_sigma: base.noise_sigma,
            target_per_class: 1_000,
            batch_size: base.batch_size,
        }
    }
}

impl Default for CnnSection {
    fn default() -> Self {
        let desk = CnnArch::desk(CnnVariant::Full);
        let train = CnnTrainConfig::default();
        Self {
            variant: CnnVariant::Full,
            conv_filters: desk.conv_filters,
            dense_units: desk.dense_units,
            epochs: train.epochs,
            batch_size: train.batch_size,
            val_fraction: train.val_fraction,
            adam: train.adam,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the TOML file at `path`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, detail: String| CliError::config(format!("{name}: {detail}"));
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(field(
                "data.train_fraction",
                format!("must lie in (0,1), got {}", self.data.train_fraction),
            ));
        }
        self.data
            .synth
            .validate()
            .map_err(|e| field("data.synth", e.to_string()))?;
        if self.autoencoder.batch_size == 0 {
            return Err(field("autoencoder.batch_size", "must be positive".into()));
        }
        let aug = &self.augment;
        if !(aug.noise_sigma > 0.0 && aug.noise_sigma.is_finite()) {
            return Err(field("augment.noise_sigma", format!("must be positive, got {}", aug.noise_sigma)));
        }
        if aug.target_per_class == 0 || aug.batch_size == 0 {
            return Err(field("augment", "target_per_class and batch_size must be positive".into()));
        }
        self.cnn
            .arch(self.cnn.variant)
            .validate()
            .map_err(|e| field("cnn", e.to_string()))?;
        let t = &self.cnn;
        if t.batch_size == 0 || !(0.0..1.0).contains(&t.val_fraction) {
            return Err(field(
                "cnn",
                "batch_size must be positive and val_fraction in [0,1)".into(),
            ));
        }
        self.occlusion
            .validate()
            .map_err(|e| field("occlusion", e.to_string()))?;
        let f = &self.baselines.forest;
        if f.n_trees == 0 || f.features_per_split == 0 || f.min_samples_split < 2 || f.max_depth == Some(0) {
            return Err(field(
                "baselines.forest",
                "n_trees, features_per_split, max_depth must be positive and min_samples_split >= 2".into(),
            ));
        }
        if self.baselines.svm.c.is_nan() || self.baselines.svm.c <= 0.0 {
            return Err(field("baselines.svm.c", "must be positive".into()));
        }
        Ok(())
    }
}
