//! Wafer maps, labels, the one-hot network input and labelled datasets.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Side length of the network input grid.
pub const GRID: usize = 26;
/// Die-state channels of the network input.
pub const CHANNELS: usize = 3;
pub const N_CLASSES: usize = 8;

/// Die state of a wafer-map cell.
pub const OFF_WAFER: u8 = 0;
pub const GOOD_DIE: u8 = 1;
pub const DEFECT_DIE: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectClass {
    Center,
    Donut,
    EdgeLoc,
    EdgeRing,
    Loc,
    NearFull,
    Random,
    Scratch,
}

impl DefectClass {
    pub const ALL: [DefectClass; N_CLASSES] = [
        DefectClass::Center,
        DefectClass::Donut,
        DefectClass::EdgeLoc,
        DefectClass::EdgeRing,
        DefectClass::Loc,
        DefectClass::NearFull,
        DefectClass::Random,
        DefectClass::Scratch,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Result<Self> {
        Self::ALL
            .get(label)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("class label {label} outside 0..=7")))
    }

    pub fn name(self) -> &'static str {
        match self {
            DefectClass::Center => "Center",
            DefectClass::Donut => "Donut",
            DefectClass::EdgeLoc => "Edge-Loc",
            DefectClass::EdgeRing => "Edge-Ring",
            DefectClass::Loc => "Loc",
            DefectClass::NearFull => "Near-full",
            DefectClass::Random => "Random",
            DefectClass::Scratch => "Scratch",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class name `{name}`")))
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.label())
    }
}

/// Row-major grid of die states.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WaferMap {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl WaferMap {
    pub fn new(height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "wafer map dimensions must be positive, got {height}x{width}"
            )));
        }
        if cells.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "wafer map {height}x{width} needs {} cells, got {}",
                height * width,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&v| v > DEFECT_DIE) {
            return Err(Error::InvalidArgument(format!(
                "die state {bad} outside {{0,1,2}}"
            )));
        }
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Panics on out-of-range state; callers write only 0, 1 or 2.
    pub(crate) fn set(&mut self, row: usize, col: usize, value: u8) {
        assert!(value <= DEFECT_DIE);
        self.cells[row * self.width + col] = value;
    }

    /// 1.0 where the die is defective, 0.0 elsewhere.
    pub fn defect_mask(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|&v| if v == DEFECT_DIE { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn defect_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v == DEFECT_DIE).count()
    }
}

/// Nearest-neighbour resize; output `(i, j)` samples input
/// `(floor(i*H/out_h), floor(j*W/out_w))`.
pub fn resize_nearest(map: &WaferMap, out_h: usize, out_w: usize) -> Result<WaferMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let mut cells = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let src_i = i * map.height / out_h;
        for j in 0..out_w {
            let src_j = j * map.width / out_w;
            cells.push(map.get(src_i, src_j));
        }
    }
    WaferMap::new(out_h, out_w, cells)
}

/// `GRID x GRID x CHANNELS` input tensor, stored HWC row-major.
///
/// Encoded wafer maps are one-hot per cell; decoder outputs are any
/// nonnegative reals.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTensor {
    data: Vec<f32>,
}

impl EncodedTensor {
    pub const LEN: usize = GRID * GRID * CHANNELS;

    pub fn from_values(data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::LEN {
            return Err(Error::shape(
                "encoded_tensor",
                format!("expected {} values, got {}", Self::LEN, data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("encoded_tensor", "non-finite value"));
        }
        Ok(Self { data })
    }

    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; Self::LEN],
        }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * GRID + col) * CHANNELS + channel]
    }

    /// Inverse of one-hot encoding: `sum_k k * channel_k` per cell, rounded.
    pub fn to_map(&self) -> Result<WaferMap> {
        let cells = self
            .data
            .chunks_exact(CHANNELS)
            .map(|px| (px[1] + 2.0 * px[2]).round().clamp(0.0, 2.0) as u8)
            .collect();
        WaferMap::new(GRID, GRID, cells)
    }
}

/// One-hot encoding over die states: channel `k` is 1 where the cell equals `k`.
pub fn one_hot_encode(map: &WaferMap) -> Result<EncodedTensor> {
    if map.height != GRID || map.width != GRID {
        return Err(Error::shape(
            "one_hot_encode",
            format!(
                "expected {GRID}x{GRID} map, got {}x{}",
                map.height, map.width
            ),
        ));
    }
    let mut data = vec![0.0f32; EncodedTensor::LEN];
    for (idx, &v) in map.cells.iter().enumerate() {
        data[idx * CHANNELS + v as usize] = 1.0;
    }
    Ok(EncodedTensor { data })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Map(WaferMap),
    Tensor(EncodedTensor),
}

impl Sample {
    pub fn to_tensor(&self) -> Result<EncodedTensor> {
        match self {
            Sample::Map(m) => one_hot_encode(m),
            Sample::Tensor(t) => Ok(t.clone()),
        }
    }

    pub fn as_map(&self) -> Option<&WaferMap> {
        match self {
            Sample::Map(m) => Some(m),
            Sample::Tensor(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Synthetic,
    Augmented,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledItem {
    pub id: String,
    pub sample: Sample,
    pub class: DefectClass,
    pub provenance: Provenance,
}

/// Which side of a train/test split a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Unsplit,
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<LabeledItem>,
    pub role: SplitRole,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledItem>) -> Self {
        Self {
            items,
            role: SplitRole::Unsplit,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for item in &self.items {
            counts[item.class.label()] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.class.label()).collect()
    }

    pub fn tensors(&self) -> Result<Vec<EncodedTensor>> {
        self.items.iter().map(|i| i.sample.to_tensor()).collect()
    }

    /// Items of one class, in dataset order.
    pub fn of_class(&self, class: DefectClass) -> impl Iterator<Item = &LabeledItem> {
        self.items.iter().filter(move |i| i.class == class)
    }

    pub fn filter_class(&self, class: DefectClass) -> LabeledDataset {
        LabeledDataset {
            items: self.of_class(class).cloned().collect(),
            role: self.role,
        }
    }
}

/// Stratified split. Class `c` with `n_c` items sends `floor(train_fraction * n_c)`
/// items, chosen by a seeded shuffle, to the train side and the rest to test.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0,1), got {train_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in DefectClass::ALL {
        let mut members: Vec<usize> = ds
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.class == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::Split {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng::rng_for(
            seed,
            &[rng::TAG_SPLIT, class.label() as u64],
        ));
        // epsilon guards products such as 0.8 * 5 landing a hair under 4
        let n_train = (train_fraction * members.len() as f64 + 1e-9).floor() as usize;
        for (k, &idx) in members.iter().enumerate() {
            let item = ds.items[idx].clone();
            if k < n_train {
                train.push(item);
            } else {
                test.push(item);
            }
        }
    }
    Ok((
        LabeledDataset {
            items: train,
            role: SplitRole::Train,
        },
        LabeledDataset {
            items: test,
            role: SplitRole::Test,
        },
    ))
}
