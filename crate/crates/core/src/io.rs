//! Line-delimited JSON interchange format for wafer maps.
//!
//! One record per line, keys in this order, `label` omitted for unlabeled
//! wafers, `grid` the row-major die states as the characters `0`/`1`/`2`:
//!
//! ```text
//! {"id":"lot47-w03","h":3,"w":4,"label":6,"grid":"011012210110"}
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DefectClass, LabeledDataset, LabeledItem, Provenance, Sample, WaferMap};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WaferRecord {
    pub id: String,
    pub h: usize,
    pub w: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub grid: String,
}

// Wide integer types so out-of-range values surface as validation errors
// rather than parse errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    h: i64,
    w: i64,
    #[serde(default)]
    label: Option<i64>,
    grid: String,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<WaferRecord> {
        let invalid = |field, detail: String| Error::Validation {
            line,
            field,
            detail,
        };
        if self.h < 1 {
            return Err(invalid("h", format!("must be positive, got {}", self.h)));
        }
        if self.w < 1 {
            return Err(invalid("w", format!("must be positive, got {}", self.w)));
        }
        let label = match self.label {
            None => None,
            Some(l) if (0..=7).contains(&l) => Some(l as u8),
            Some(l) => return Err(invalid("label", format!("must lie in 0..=7, got {l}"))),
        };
        let expected = (self.h * self.w) as usize;
        if self.grid.len() != expected {
            return Err(invalid(
                "grid",
                format!(
                    "length {} does not match h*w = {}",
                    self.grid.len(),
                    expected
                ),
            ));
        }
        if let Some(ch) = self.grid.chars().find(|c| !matches!(c, '0' | '1' | '2')) {
            return Err(invalid("grid", format!("character {ch:?} outside {{0,1,2}}")));
        }
        Ok(WaferRecord {
            id: self.id,
            h: self.h as usize,
            w: self.w as usize,
            label,
            grid: self.grid,
        })
    }
}

impl WaferRecord {
    pub fn from_map(id: impl Into<String>, map: &WaferMap, label: Option<DefectClass>) -> Self {
        Self {
            id: id.into(),
            h: map.height(),
            w: map.width(),
            label: label.map(|c| c.label() as u8),
            grid: map.cells().iter().map(|&v| (b'0' + v) as char).collect(),
        }
    }

    pub fn to_map(&self) -> Result<WaferMap> {
        WaferMap::new(
            self.h,
            self.w,
            self.grid.bytes().map(|b| b.wrapping_sub(b'0')).collect(),
        )
    }

    pub fn class(&self) -> Option<DefectClass> {
        self.label
            .map(|l| DefectClass::from_label(l as usize).expect("validated label"))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Parses one line; `line` is 1-based and only used in error messages.
pub fn parse_record(text: &str, line: usize) -> Result<WaferRecord> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        detail: e.to_string(),
    })?;
    raw.validate(line)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<WaferRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| parse_record(l, i + 1))
        .collect()
}

pub fn write_records(records: &[WaferRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Labelled records become dataset items; unlabeled ones are dropped.
pub fn records_to_dataset(records: &[WaferRecord], provenance: Provenance) -> Result<LabeledDataset> {
    let mut items = Vec::new();
    for r in records {
        if let Some(class) = r.class() {
            items.push(LabeledItem {
                id: r.id.clone(),
                sample: Sample::Map(r.to_map()?),
                class,
                provenance,
            });
        }
    }
    Ok(LabeledDataset::new(items))
}

/// Map-backed items only; tensor samples have no die-state grid.
pub fn dataset_to_records(ds: &LabeledDataset) -> Result<Vec<WaferRecord>> {
    ds.items
        .iter()
        .map(|it| match &it.sample {
            Sample::Map(m) => Ok(WaferRecord::from_map(it.id.clone(), m, Some(it.class))),
            Sample::Tensor(_) => Err(Error::InvalidArgument(format!(
                "item {} is a tensor and cannot be written as a wafer record",
                it.id
            ))),
        })
        .collect()
}
