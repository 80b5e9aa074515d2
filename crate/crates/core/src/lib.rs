//! Wafer-map defect classification.
//!
//! A convolutional classifier trained on wafer maps rebalanced by
//! autoencoder latent-noise augmentation, handcrafted-feature baselines
//! (logistic regression, linear SVM, random forest, soft voting),
//! evaluation metrics and occlusion-sensitivity analysis. Everything runs
//! on CPU and is deterministic for a given seed.

pub mod autoencoder;
pub mod baselines;
pub mod cnn;
pub mod data;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod occlusion;
pub mod rng;
pub mod synth;

pub use data::{
    one_hot_encode, resize_nearest, stratified_split, DefectClass, EncodedTensor, LabeledDataset,
    LabeledItem, Provenance, Sample, SplitRole, WaferMap, CHANNELS, GRID, N_CLASSES,
};
pub use error::{Error, Result};
