//! Output directory layout, checksummed writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const DATA_DIR: &str = "data";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_DIR: &str = "reports";

/// Writes files under a run directory and remembers their checksums.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

/// `manifest_<command>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Path relative to the run directory -> SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunDir {
    /// Opens (creating if needed) the configured output directory. Refuses
    /// to use the directory holding the input records.
    pub fn open(cfg: &RunConfig) -> CliResult<Self> {
        let root = cfg.paths.output.clone();
        if let Some(input) = &cfg.paths.input {
            let input_dir = input
                .parent()
                .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
                .unwrap_or(Path::new("."));
            if same_dir(input_dir, &root) {
                return Err(CliError::config(format!(
                    "paths.output ({}) must not be the input data directory",
                    root.display()
                )));
            }
        }
        for sub in [DATA_DIR, CHECKPOINT_DIR, REPORT_DIR] {
            fs::create_dir_all(root.join(sub))
                .map_err(|e| CliError::data(format!("{}: {e}", root.join(sub).display())))?;
        }
        Ok(Self {
            root,
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(rel);
        fs::write(&path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> CliResult<PathBuf> {
        self.write(rel, text.as_bytes())
    }

    /// Records a file produced by another writer.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let path = self.path(rel);
        let bytes = fs::read(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.written.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn read_text(&self, rel: &str, hint: &str) -> CliResult<String> {
        let path = self.path(rel);
        fs::read_to_string(&path)
            .map_err(|e| CliError::data(format!("{}: {e} ({hint})", path.display())))
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> CliResult<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            artifacts: std::mem::take(&mut self.written),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        let rel = format!("manifest_{command}.json");
        let path = self.path(&rel);
        fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// ASCII graymap of `rows x cols` values scaled linearly from `[lo, hi]`
/// to `0..=255`; each value becomes a `scale x scale` block.
pub fn pgm(values: &[f64], rows: usize, cols: usize, lo: f64, hi: f64, scale: usize) -> String {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = format!("P2\n{} {}\n255\n", cols * scale, rows * scale);
    for r in 0..rows * scale {
        let line: Vec<String> = (0..cols * scale)
            .map(|c| {
                let v = values[(r / scale) * cols + c / scale];
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round().to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}
