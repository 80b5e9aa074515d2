//! Pipeline stages as plain functions of the run config. Each stage draws
//! its randomness from `derive_seed(config.seed, [stage])`, so a stage run
//! on its own matches the same stage inside `pipeline`.

use wafer_core::autoencoder::{augment_all, train_autoencoder, Autoencoder};
use wafer_core::baselines::{BaselineProba, Baselines};
use wafer_core::cnn::{self, Cnn, CnnVariant, TrainReport};
use wafer_core::features::{extract_dataset, FeatureTable};
use wafer_core::io::{records_to_dataset, WaferRecord};
use wafer_core::metrics::{evaluate, MetricsReport};
use wafer_core::rng::derive_seed;
use wafer_core::synth::generate_dataset;
use wafer_core::{
    resize_nearest, stratified_split, LabeledDataset, Provenance, Sample, SplitRole, GRID,
};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth = 1,
    Split = 2,
    Autoencoder = 3,
    Augment = 4,
    Cnn = 5,
    Baselines = 6,
}

pub fn stage_seed(cfg: &RunConfig, stage: Stage) -> u64 {
    derive_seed(cfg.seed, &[stage as u64])
}

pub fn synth_dataset(cfg: &RunConfig) -> CliResult<LabeledDataset> {
    Ok(generate_dataset(
        &cfg.data.counts,
        &cfg.data.synth,
        stage_seed(cfg, Stage::Synth),
    )?)
}

/// Labelled records as a dataset, resized to the model grid.
pub fn records_dataset(records: &[WaferRecord]) -> CliResult<LabeledDataset> {
    let mut ds = records_to_dataset(records, Provenance::Original)?;
    for item in &mut ds.items {
        if let Sample::Map(m) = &item.sample {
            if m.height() != GRID || m.width() != GRID {
                item.sample = Sample::Map(resize_nearest(m, GRID, GRID)?);
            }
        }
    }
    Ok(ds)
}

pub fn split(ds: &LabeledDataset, cfg: &RunConfig) -> CliResult<(LabeledDataset, LabeledDataset)> {
    Ok(stratified_split(
        ds,
        cfg.data.train_fraction,
        stage_seed(cfg, Stage::Split),
    )?)
}

pub fn fit_autoencoder(train: &LabeledDataset, cfg: &RunConfig) -> CliResult<(Autoencoder, Vec<f64>)> {
    Ok(train_autoencoder(
        train,
        &cfg.autoencoder,
        stage_seed(cfg, Stage::Autoencoder),
    )?)
}

/// The training split brought up to the per-class target.
pub fn augmented(ae: &Autoencoder, train: &LabeledDataset, cfg: &RunConfig) -> CliResult<LabeledDataset> {
    Ok(augment_all(
        ae,
        train,
        &cfg.augment.params(),
        stage_seed(cfg, Stage::Augment),
    )?)
}

pub fn fit_cnn(train: &LabeledDataset, cfg: &RunConfig, variant: CnnVariant) -> CliResult<(Cnn, TrainReport)> {
    let seed = stage_seed(cfg, Stage::Cnn);
    let mut model = Cnn::build(cfg.cnn.arch(variant), seed)?;
    let report = cnn::train(&mut model, train, &cfg.cnn.train_config(), seed)?;
    Ok((model, report))
}

pub fn cnn_proba(model: &Cnn, test: &LabeledDataset, cfg: &RunConfig) -> CliResult<Vec<Vec<f64>>> {
    Ok(model.predict_proba(&test.tensors()?, cfg.cnn.batch_size)?)
}

pub fn evaluate_cnn(name: &str, model: &Cnn, test: &LabeledDataset, cfg: &RunConfig) -> CliResult<MetricsReport> {
    Ok(evaluate(name, &cnn_proba(model, test, cfg)?, &test.labels())?)
}

pub fn features(ds: &LabeledDataset) -> CliResult<FeatureTable> {
    Ok(extract_dataset(ds)?)
}

pub fn fit_baselines(train: &FeatureTable, cfg: &RunConfig) -> CliResult<Baselines> {
    Ok(Baselines::fit(
        &train.rows,
        &train.labels,
        &cfg.baselines,
        stage_seed(cfg, Stage::Baselines),
    )?)
}

/// Reports for `logreg`, `svm`, `forest` and `voting`, in that order.
pub fn evaluate_baselines(models: &Baselines, test: &FeatureTable) -> CliResult<Vec<MetricsReport>> {
    let BaselineProba {
        logreg,
        svm,
        forest,
        voting,
    } = models.predict_proba(&test.rows)?;
    [("logreg", logreg), ("svm", svm), ("forest", forest), ("voting", voting)]
        .into_iter()
        .map(|(name, p)| Ok(evaluate(name, &p, &test.labels)?))
        .collect()
}

/// Checkpoint stem of a trained classifier.
pub fn cnn_name(variant: CnnVariant, augmented: bool) -> String {
    if augmented {
        format!("cnn_{}", variant.name())
    } else {
        format!("cnn_{}_noaug", variant.name())
    }
}

pub fn with_role(mut ds: LabeledDataset, role: SplitRole) -> LabeledDataset {
    ds.role = role;
    ds
}
