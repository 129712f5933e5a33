//! Versioned JSON checkpoints and the per-epoch metrics file.
//!
//! Checkpoint fields: `format_version`, `config` (the run configuration),
//! `seed`, `epochs_completed`, `normalizer` (`min`/`max` per pixel) and
//! `model` (`mps` site tensors with shapes and row-major `[l][p][o][r]` values,
//! `circuit`, one `params` vector per class circuit, `classes`).
//!
//! Metrics are CSV with the header `epoch,mean_cost,train_accuracy,test_accuracy`,
//! one line per epoch; `test_accuracy` is empty when no test split was used.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qfid_core::data::PIXELS;
use qfid_core::encoding::Normalizer;
use qfid_core::training::{LossRecord, ModelState};
use qfid_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "epoch,mean_cost,train_accuracy,test_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub seed: u64,
    pub epochs_completed: usize,
    pub normalizer: Normalizer,
    pub model: ModelState,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Load(format!("not valid JSON: {e}")))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Load(format!(
                    "format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Load("missing format_version".into())),
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::Load(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Load(e.to_string()))?;
        if self.normalizer.dim() != PIXELS || self.normalizer.max.len() != PIXELS {
            return Err(Error::Load(format!(
                "normalizer covers {} pixels, expected {PIXELS}",
                self.normalizer.dim()
            )));
        }
        if self.model.mps.num_sites() != PIXELS {
            return Err(Error::Load(format!(
                "tensor network has {} sites, expected {PIXELS}",
                self.model.mps.num_sites()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Load(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn metrics_csv(records: &[LossRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let test = r.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.epoch, r.mean_cost, r.train_accuracy, test).unwrap();
    }
    out
}

pub fn parse_metrics(text: &str) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Load("metrics header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Load(format!("metrics line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LossRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                mean_cost: f[1].parse().map_err(|_| bad())?,
                train_accuracy: f[2].parse().map_err(|_| bad())?,
                test_accuracy: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad())?)
                },
            })
        })
        .collect()
}
