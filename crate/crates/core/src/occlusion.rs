//! Occlusion sensitivity: mask a sliding window in every test input and
//! record the drop in macro-F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cnn::Cnn;
use crate::data::{EncodedTensor, LabeledDataset, CHANNELS, GRID};
use crate::error::{Error, Result};
use crate::metrics::{confusion, prf_accuracy};

/// Anything that labels encoded wafers.
pub trait Classifier {
    fn predict(&self, inputs: &[EncodedTensor]) -> Result<Vec<usize>>;
}

impl Classifier for Cnn {
    fn predict(&self, inputs: &[EncodedTensor]) -> Result<Vec<usize>> {
        Cnn::predict(self, inputs, 256)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionFill {
    /// Every channel of the window set to these values.
    Constant([f32; CHANNELS]),
    /// Window left as it is.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    pub window: usize,
    pub stride: usize,
    pub fill: OcclusionFill,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            window: 10,
            stride: 5,
            fill: OcclusionFill::Constant([0.0; CHANNELS]),
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window > GRID || self.stride == 0 {
            return Err(Error::Config(format!(
                "occlusion window must be in 1..={GRID} and stride >= 1 (got window {}, stride {})",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    /// Top-left coordinates along one axis: `0, stride, ...` while the
    /// window stays inside the grid.
    pub fn anchors(&self) -> Vec<usize> {
        (0..=GRID - self.window).step_by(self.stride).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub anchors: Vec<usize>,
    pub baseline_f1: f64,
    /// `delta[r][c]`: baseline minus occluded macro-F1 at anchor `(anchors[r], anchors[c])`.
    pub delta: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.delta {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Mean delta over the given `(row, col)` heatmap cells.
    pub fn mean_at(&self, cells: &[(usize, usize)]) -> f64 {
        cells.iter().map(|&(r, c)| self.delta[r][c]).sum::<f64>() / cells.len() as f64
    }

    /// The four corner cells.
    pub fn corners(&self) -> Vec<(usize, usize)> {
        let last = self.delta.len() - 1;
        vec![(0, 0), (0, last), (last, 0), (last, last)]
    }

    /// The central 2x2 cells (or the single middle cell of an odd grid).
    pub fn centre(&self) -> Vec<(usize, usize)> {
        let n = self.delta.len();
        let rows: Vec<usize> = if n.is_multiple_of(2) { vec![n / 2 - 1, n / 2] } else { vec![n / 2] };
        rows.iter().flat_map(|&r| rows.iter().map(move |&c| (r, c))).collect()
    }
}

/// Sidecar metadata written next to the heatmap grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub baseline_f1: f64,
    pub anchors: Vec<usize>,
    pub config: OcclusionConfig,
    pub n_items: usize,
}

fn macro_f1(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    Ok(prf_accuracy(&confusion(y_true, y_pred)?)?.macro_f1)
}

/// Copy of `x` with the `window x window` block at `(r, c)` filled.
pub fn occlude(x: &EncodedTensor, r: usize, c: usize, window: usize, fill: OcclusionFill) -> Result<EncodedTensor> {
    let OcclusionFill::Constant(values) = fill else {
        return Ok(x.clone());
    };
    let mut data = x.as_slice().to_vec();
    for i in r..(r + window).min(GRID) {
        for j in c..(c + window).min(GRID) {
            let k = (i * GRID + j) * CHANNELS;
            data[k..k + CHANNELS].copy_from_slice(&values);
        }
    }
    EncodedTensor::from_values(data)
}

pub fn occlusion_heatmap<M: Classifier + ?Sized>(
    model: &M,
    test: &LabeledDataset,
    cfg: &OcclusionConfig,
) -> Result<Heatmap> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("occlusion needs a non-empty test set".into()));
    }
    let inputs = test.tensors()?;
    let labels = test.labels();
    let baseline_f1 = macro_f1(&labels, &model.predict(&inputs)?)?;
    let anchors = cfg.anchors();
    let mut delta = Vec::with_capacity(anchors.len());
    for &r in &anchors {
        let mut row = Vec::with_capacity(anchors.len());
        for &c in &anchors {
            let occluded = inputs
                .iter()
                .map(|x| occlude(x, r, c, cfg.window, cfg.fill))
                .collect::<Result<Vec<_>>>()?;
            row.push(baseline_f1 - macro_f1(&labels, &model.predict(&occluded)?)?);
        }
        delta.push(row);
    }
    Ok(Heatmap {
        anchors,
        baseline_f1,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthParams};

    struct Constant(usize);

    impl Classifier for Constant {
        fn predict(&self, inputs: &[EncodedTensor]) -> Result<Vec<usize>> {
            Ok(vec![self.0; inputs.len()])
        }
    }

    /// Labels by the defect channel total inside the central 6x6 block.
    struct CentreProbe;

    impl Classifier for CentreProbe {
        fn predict(&self, inputs: &[EncodedTensor]) -> Result<Vec<usize>> {
            Ok(inputs
                .iter()
                .map(|x| {
                    let s: f32 = (10..16)
                        .flat_map(|i| (10..16).map(move |j| (i, j)))
                        .map(|(i, j)| x.as_slice()[(i * GRID + j) * CHANNELS + 2])
                        .sum();
                    if s > 8.0 {
                        0
                    } else {
                        1
                    }
                })
                .collect())
        }
    }

    #[test]
    fn default_grid_is_four_by_four() {
        let cfg = OcclusionConfig::default();
        assert_eq!(cfg.anchors(), vec![0, 5, 10, 15]);
        for (w, s) in [(1, 1), (26, 3), (7, 4), (3, 10)] {
            let cfg = OcclusionConfig {
                window: w,
                stride: s,
                ..Default::default()
            };
            assert_eq!(cfg.anchors().len(), (26 - w) / s + 1);
        }
        let bad = OcclusionConfig {
            window: 27,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_fill_and_constant_model_give_zero() {
        let ds = generate_dataset(&[3; 8], &SynthParams::default(), 4).unwrap();
        let before = ds.clone();
        let ident = OcclusionConfig {
            fill: OcclusionFill::Identity,
            ..Default::default()
        };
        let h = occlusion_heatmap(&CentreProbe, &ds, &ident).unwrap();
        assert_eq!(h.delta.len(), 4);
        assert!(h.delta.iter().flatten().all(|&d| d == 0.0));
        let h = occlusion_heatmap(&Constant(3), &ds, &OcclusionConfig::default()).unwrap();
        assert!(h.delta.iter().flatten().all(|&d| d == 0.0));
        assert_eq!(ds, before);
    }

    #[test]
    fn centre_probe_is_centre_sensitive() {
        let mut counts = [0; 8];
        counts[0] = 20;
        let ds = generate_dataset(&counts, &SynthParams::default(), 8).unwrap();
        let h = occlusion_heatmap(&CentreProbe, &ds, &OcclusionConfig::default()).unwrap();
        assert!(h.mean_at(&h.centre()) > h.mean_at(&h.corners()));
        assert_eq!(h.centre(), vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
        assert_eq!(h.to_csv().lines().count(), 4);
    }
}
