//! Convolutional autoencoder and latent-noise augmentation.
//!
//! Encoder: 3x3 same conv (3 -> 64) + ReLU + 2x2 max-pool, so a
//! `26x26x3` input maps to a `13x13x64` latent. Decoder: 2x2 stride-2
//! transposed conv (64 -> 3) + ReLU back to `26x26x3`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    DefectClass, EncodedTensor, LabeledDataset, LabeledItem, Provenance, Sample, SplitRole,
    CHANNELS, GRID,
};
use crate::error::{Error, Result};
use crate::nn::{
    self, he_normal, ops, AdamConfig, AdamState, Layer, Network, ParamSet, Tensor,
};
use crate::rng::{self, rng_for};

pub const LATENT_GRID: usize = GRID / 2;
pub const LATENT_CHANNELS: usize = 64;
const ENCODER_LAYERS: usize = 3;
const DECODER_INIT_SCALE: f32 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    net: Network<f32>,
}

impl Autoencoder {
    /// He-initialised weights, zero encoder bias, decoder bias at the mean
    /// of a one-hot target (1/3).
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_for(seed, &[rng::TAG_INIT]);
        let mut ps = ParamSet::new();
        let ek = ps.add(
            "encoder.conv.kernel",
            he_normal(&[3, 3, CHANNELS, LATENT_CHANNELS], 9 * CHANNELS, &mut rng),
        );
        let eb = ps.add("encoder.conv.bias", Tensor::zeros(&[LATENT_CHANNELS]));
        let dk = ps.add(
            "decoder.tconv.kernel",
            he_normal(&[2, 2, LATENT_CHANNELS, CHANNELS], LATENT_CHANNELS, &mut rng)
                .map(|v| DECODER_INIT_SCALE * v),
        );
        let db = ps.add(
            "decoder.tconv.bias",
            Tensor::full(&[CHANNELS], 1.0 / CHANNELS as f32),
        );
        Self {
            net: Network::new(
                vec![
                    Layer::Conv2dSame { kernel: ek, bias: eb },
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    Layer::TransposedConv2x2 { kernel: dk, bias: db },
                    Layer::Relu,
                ],
                ps,
            ),
        }
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.net.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.net.params
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    /// Loads weights from a checkpoint parameter set.
    pub fn from_params(params: &ParamSet<f32>) -> Result<Self> {
        let mut ae = Self::new(0);
        ae.net.params.assign_from(params)?;
        Ok(ae)
    }

    /// Batch encode: `n x 26 x 26 x 3` to `n x 13 x 13 x 64`.
    pub fn encode_batch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        check_shape(x, &[GRID, GRID, CHANNELS], "encode")?;
        self.net.forward_range(x, 0..ENCODER_LAYERS)
    }

    pub fn decode_batch(&self, z: &Tensor<f32>) -> Result<Tensor<f32>> {
        check_shape(z, &[LATENT_GRID, LATENT_GRID, LATENT_CHANNELS], "decode")?;
        self.net
            .forward_range(z, ENCODER_LAYERS..self.net.layers.len())
    }

    pub fn encode(&self, x: &EncodedTensor) -> Result<Tensor<f32>> {
        self.encode_batch(&nn::stack_inputs([x]))
    }

    pub fn decode(&self, z: &Tensor<f32>) -> Result<EncodedTensor> {
        let out = self.decode_batch(z)?;
        if out.shape()[0] != 1 {
            return Err(Error::shape("decode", "expected a single latent"));
        }
        EncodedTensor::from_values(out.into_data())
    }

    pub fn reconstruct(&self, x: &EncodedTensor) -> Result<EncodedTensor> {
        self.decode(&self.encode(x)?)
    }
}

fn check_shape(t: &Tensor<f32>, tail: &[usize], op: &'static str) -> Result<()> {
    if t.rank() != 4 || &t.shape()[1..] != tail {
        return Err(Error::Shape {
            op,
            detail: format!("expected n x {tail:?}, got {:?}", t.shape()),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            adam: AdamConfig::default(),
        }
    }
}

/// Trains on reconstruction MSE; returns the model and the mean training
/// loss of each epoch.
pub fn train_autoencoder(
    train: &LabeledDataset,
    cfg: &AeTrainConfig,
    seed: u64,
) -> Result<(Autoencoder, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("autoencoder training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let inputs = train.tensors()?;
    let mut ae = Autoencoder::new(seed);
    let mut adam = AdamState::new(cfg.adam, &ae.net.params);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(seed, &[rng::TAG_SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = nn::stack_inputs(chunk.iter().map(|&i| &inputs[i]));
            ae.net.params.zero_grad();
            let (out, tape) = ae.net.forward_train(&x)?;
            let loss = ops::mse_loss(&out, &x)?;
            if !loss.is_finite() {
                return Err(Error::numeric(
                    format!("train_autoencoder epoch {epoch}"),
                    format!("loss is {loss}"),
                ));
            }
            ae.net.backward(tape, ops::mse_grad(&out, &x))?;
            adam.step(&mut ae.net.params);
            total += loss as f64 * chunk.len() as f64;
        }
        curve.push(total / inputs.len() as f64);
    }
    Ok((ae, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub target_per_class: usize,
    pub batch_size: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 1.0,
            target_per_class: 10_000,
            batch_size: 128,
        }
    }
}

impl AugmentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Augment(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if self.target_per_class == 0 || self.batch_size == 0 {
            return Err(Error::Augment(
                "target_per_class and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generates `target_per_class - sources.len()` new inputs (none if the
/// class is already at target). Sample `k` decodes the latent of
/// `sources[k % len]` plus i.i.d. `N(0, sigma^2)` noise drawn from its own
/// seeded stream.
pub fn augment_class(
    ae: &Autoencoder,
    class: DefectClass,
    sources: &[EncodedTensor],
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Vec<EncodedTensor>> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::Augment(format!("class {class} has no items to augment")));
    }
    let needed = cfg.target_per_class.saturating_sub(sources.len());
    let normal = Normal::new(0.0f32, cfg.noise_sigma as f32)
        .map_err(|e| Error::Augment(e.to_string()))?;
    let mut out = Vec::with_capacity(needed);
    let ks: Vec<usize> = (0..needed).collect();
    for chunk in ks.chunks(cfg.batch_size) {
        let x = nn::stack_inputs(chunk.iter().map(|&k| &sources[k % sources.len()]));
        let mut z = ae.encode_batch(&x)?;
        let per = z.len() / chunk.len();
        for (row, &k) in z.data_mut().chunks_exact_mut(per).zip(chunk) {
            let mut rng = rng_for(seed, &[rng::TAG_NOISE, class.label() as u64, k as u64]);
            for v in row {
                *v += normal.sample(&mut rng);
            }
        }
        let decoded = ae.decode_batch(&z)?;
        for sample in decoded.data().chunks_exact(EncodedTensor::LEN) {
            out.push(EncodedTensor::from_values(sample.to_vec())?);
        }
    }
    Ok(out)
}

/// Brings every class of a training split up to `target_per_class` items.
/// Originals are kept unchanged; the result is shuffled with `seed`.
pub fn augment_all(
    ae: &Autoencoder,
    train: &LabeledDataset,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<LabeledDataset> {
    if train.role == SplitRole::Test {
        return Err(Error::Augment("refusing to augment a test split".into()));
    }
    let counts = train.class_counts();
    let missing: Vec<_> = DefectClass::ALL
        .into_iter()
        .filter(|c| counts[c.label()] == 0)
        .map(|c| c.name())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Augment(format!(
            "classes absent from training data: {}",
            missing.join(", ")
        )));
    }
    let mut items = train.items.clone();
    for class in DefectClass::ALL {
        let members: Vec<&LabeledItem> = train.of_class(class).collect();
        let sources = members
            .iter()
            .map(|it| it.sample.to_tensor())
            .collect::<Result<Vec<_>>>()?;
        let generated = augment_class(ae, class, &sources, cfg, seed)?;
        for (k, t) in generated.into_iter().enumerate() {
            let mut id = members[k % members.len()].id.clone();
            let _ = write!(id, "-aug{k}");
            items.push(LabeledItem {
                id,
                sample: Sample::Tensor(t),
                class,
                provenance: Provenance::Augmented,
            });
        }
    }
    items.shuffle(&mut rng_for(seed, &[rng::TAG_SHUFFLE, u64::MAX]));
    Ok(LabeledDataset {
        items,
        role: SplitRole::Train,
    })
}

/// Two-column loss curve CSV (`epoch,mse`), epochs counted from 1.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,mse\n");
    for (i, v) in curve.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", i + 1);
    }
    s
}
