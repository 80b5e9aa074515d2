//! CNN classifier: three 3x3 same-padded convolutions, flatten, two dense
//! layers and an 8-way softmax, plus the two ablation variants.
//!
//! Reference widths are 16/64/128 filters and 512/128 dense units, which
//! puts about 44.45M parameters in the model (all but 150K of them in
//! `dense1`). With no pooling the flatten width is 26 * 26 * 128 = 86,528,
//! so `dense1` holds 86,528 * 512 + 512 = 44,302,848 parameters; the
//! 44,354,560 sometimes quoted for this layer does not follow from that
//! width. [`CnnArch::desk`] keeps the layer structure at reduced widths
//! so full training runs fit on one CPU core.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedTensor, LabeledDataset, CHANNELS, GRID, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{self, he_normal, ops, AdamConfig, AdamState, Layer, Network, ParamSet, Tensor};
use crate::rng::{self, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnVariant {
    Full,
    NoConv3,
    NoDense1,
}

impl CnnVariant {
    pub const ALL: [CnnVariant; 3] = [CnnVariant::Full, CnnVariant::NoConv3, CnnVariant::NoDense1];

    pub fn name(self) -> &'static str {
        match self {
            CnnVariant::Full => "full",
            CnnVariant::NoConv3 => "no_conv3",
            CnnVariant::NoDense1 => "no_dense1",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown CNN variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnArch {
    pub variant: CnnVariant,
    pub conv_filters: [usize; 3],
    pub dense_units: [usize; 2],
}

/// One parameterised layer: name and scalar parameter count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub name: &'static str,
    pub params: usize,
}

impl CnnArch {
    pub fn reference(variant: CnnVariant) -> Self {
        Self {
            variant,
            conv_filters: [16, 64, 128],
            dense_units: [512, 128],
        }
    }

    pub fn desk(variant: CnnVariant) -> Self {
        Self {
            variant,
            conv_filters: [4, 8, 8],
            dense_units: [32, 16],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.contains(&0) || self.dense_units.contains(&0) {
            return Err(Error::InvalidArgument("CNN widths must be positive".into()));
        }
        Ok(())
    }

    fn conv_widths(&self) -> Vec<usize> {
        let [a, b, c] = self.conv_filters;
        match self.variant {
            CnnVariant::NoConv3 => vec![a, b],
            _ => vec![a, b, c],
        }
    }

    fn dense_widths(&self) -> Vec<usize> {
        let [d1, d2] = self.dense_units;
        match self.variant {
            CnnVariant::NoDense1 => vec![d2],
            _ => vec![d1, d2],
        }
    }

    pub fn flatten_size(&self) -> usize {
        GRID * GRID * self.conv_widths().last().copied().unwrap_or(CHANNELS)
    }

    /// Per-layer parameter counts in forward order.
    pub fn layer_counts(&self) -> Vec<LayerCount> {
        let conv_names = ["conv1", "conv2", "conv3"];
        let mut out = Vec::new();
        let mut c_in = CHANNELS;
        for (name, f) in conv_names.iter().zip(self.conv_widths()) {
            out.push(LayerCount {
                name,
                params: 9 * c_in * f + f,
            });
            c_in = f;
        }
        let dense_names: &[&str] = match self.variant {
            CnnVariant::NoDense1 => &["dense2"],
            _ => &["dense1", "dense2"],
        };
        let mut fan_in = self.flatten_size();
        for (name, m) in dense_names.iter().zip(self.dense_widths()) {
            out.push(LayerCount {
                name,
                params: fan_in * m + m,
            });
            fan_in = m;
        }
        out.push(LayerCount {
            name: "out",
            params: fan_in * N_CLASSES + N_CLASSES,
        });
        out
    }

    pub fn total_params(&self) -> usize {
        self.layer_counts().iter().map(|l| l.params).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    pub arch: CnnArch,
    net: Network<f32>,
}

impl Cnn {
    /// He-initialised weights (seeded), zero biases.
    pub fn build(arch: CnnArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_for(seed, &[rng::TAG_INIT]);
        let mut ps = ParamSet::new();
        let mut layers = Vec::new();
        let mut c_in = CHANNELS;
        for (k, f) in arch.conv_widths().into_iter().enumerate() {
            let name = format!("conv{}", k + 1);
            let kernel = ps.add(
                format!("{name}.kernel"),
                he_normal(&[3, 3, c_in, f], 9 * c_in, &mut rng),
            );
            let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[f]));
            layers.push(Layer::Conv2dSame { kernel, bias });
            layers.push(Layer::Relu);
            c_in = f;
        }
        layers.push(Layer::Flatten);
        let dense_names: &[&str] = match arch.variant {
            CnnVariant::NoDense1 => &["dense2"],
            _ => &["dense1", "dense2"],
        };
        let mut fan_in = arch.flatten_size();
        for (name, m) in dense_names.iter().zip(arch.dense_widths()) {
            let weight = ps.add(format!("{name}.weight"), he_normal(&[m, fan_in], fan_in, &mut rng));
            let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[m]));
            layers.push(Layer::Dense { weight, bias });
            layers.push(Layer::Relu);
            fan_in = m;
        }
        let weight = ps.add("out.weight", he_normal(&[N_CLASSES, fan_in], fan_in, &mut rng));
        let bias = ps.add("out.bias", Tensor::zeros(&[N_CLASSES]));
        layers.push(Layer::Dense { weight, bias });
        Ok(Self {
            arch,
            net: Network::new(layers, ps),
        })
    }

    pub fn from_params(arch: CnnArch, params: &ParamSet<f32>) -> Result<Self> {
        let mut cnn = Self::build(arch, 0)?;
        cnn.net.params.assign_from(params)?;
        Ok(cnn)
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

    /// Class logits for a batch `n x 26 x 26 x 3`.
    pub fn logits(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.net.forward(x)
    }

    pub fn forward(&self, x: &EncodedTensor) -> Result<Vec<f32>> {
        let logits = self.logits(&nn::stack_inputs([x]))?;
        ops::softmax(logits.data())
    }

    /// `n x 8` class probabilities, evaluated in batches.
    pub fn predict_proba(&self, inputs: &[EncodedTensor], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch_size.max(1)) {
            let probs = ops::softmax_rows(&self.logits(&nn::stack_inputs(chunk))?)?;
            out.extend(
                probs
                    .data()
                    .chunks_exact(N_CLASSES)
                    .map(|r| r.iter().map(|&p| p as f64).collect()),
            );
        }
        Ok(out)
    }

    pub fn predict(&self, inputs: &[EncodedTensor], batch_size: usize) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(inputs, batch_size)?
            .iter()
            .map(|p| argmax(p))
            .collect())
    }
}

/// Index of the largest value; lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            val_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in 0..self.epochs() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e + 1,
                self.train_loss[e],
                self.train_acc[e],
                self.val_loss[e],
                self.val_acc[e]
            );
        }
        s
    }
}

fn onehot_batch(labels: impl Iterator<Item = usize>) -> Tensor<f32> {
    let labels: Vec<usize> = labels.collect();
    let mut y = Tensor::zeros(&[labels.len(), N_CLASSES]);
    for (r, &l) in labels.iter().enumerate() {
        y.data_mut()[r * N_CLASSES + l] = 1.0;
    }
    y
}

/// Mean cross-entropy and accuracy of `cnn` over `(inputs, labels)`.
pub fn evaluate_loss(
    cnn: &Cnn,
    inputs: &[EncodedTensor],
    labels: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let probs = cnn.predict_proba(inputs, batch_size)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (p, &y) in probs.iter().zip(labels) {
        loss -= p[y].max(ops::CE_CLAMP).ln();
        correct += usize::from(argmax(p) == y);
    }
    let n = labels.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Adam on softmax cross-entropy. The last `val_fraction` of a seeded
/// shuffle of `train` is held out for the validation curves.
pub fn train(
    cnn: &mut Cnn,
    train: &LabeledDataset,
    cfg: &CnnTrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    let counts = train.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "training data lacks class {}",
            crate::data::DefectClass::ALL[c]
        )));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "val_fraction must lie in [0,1) and batch_size must be positive".into(),
        ));
    }
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok(report);
    }
    let inputs = train.tensors()?;
    let labels = train.labels();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng_for(seed, &[rng::TAG_SHUFFLE, u64::MAX]));
    let n_val = (cfg.val_fraction * inputs.len() as f64).round() as usize;
    let (fit_idx, val_idx) = order.split_at(inputs.len() - n_val);
    let mut fit_idx = fit_idx.to_vec();
    let val_x: Vec<EncodedTensor> = val_idx.iter().map(|&i| inputs[i].clone()).collect();
    let val_y: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut adam = AdamState::new(cfg.adam, &cnn.net.params);
    for epoch in 0..cfg.epochs {
        fit_idx.shuffle(&mut rng_for(seed, &[rng::TAG_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in fit_idx.chunks(cfg.batch_size) {
            let x = nn::stack_inputs(chunk.iter().map(|&i| &inputs[i]));
            let y = onehot_batch(chunk.iter().map(|&i| labels[i]));
            cnn.net.params.zero_grad();
            let (logits, tape) = cnn.net.forward_train(&x)?;
            let probs = ops::softmax_rows(&logits)?;
            let loss = ops::cross_entropy(&probs, &y)?;
            if !loss.is_finite() {
                return Err(Error::numeric(
                    format!("cnn train epoch {epoch}"),
                    format!("loss is {loss}"),
                ));
            }
            for (row, &i) in probs.data().chunks_exact(N_CLASSES).zip(chunk) {
                let row: Vec<f64> = row.iter().map(|&p| p as f64).collect();
                correct += usize::from(argmax(&row) == labels[i]);
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            cnn.net
                .backward(tape, ops::softmax_cross_entropy_grad(&probs, &y)?)?;
            adam.step(&mut cnn.net.params);
        }
        let n_fit = fit_idx.len().max(1) as f64;
        report.train_loss.push(loss_sum / n_fit);
        report.train_acc.push(correct as f64 / n_fit);
        let (vl, va) = if val_x.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_loss(cnn, &val_x, &val_y, cfg.batch_size)?
        };
        report.val_loss.push(vl);
        report.val_acc.push(va);
    }
    Ok(report)
}
