//! Checkpoint persistence.
//!
//! A checkpoint is compact JSON with a fixed field order and shortest
//! round-trip float formatting, so loading and re-saving reproduces the file
//! byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simdreg_core::model::train::{TrainConfig, TrainOutcome};
use simdreg_core::model::{DecoderParams, PRUNED_NAMES};
use simdreg_core::{MaskStore, PruneMask};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group_size: usize,
    /// One string of `0`/`1` per row; `1` keeps the weight.
    pub bits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub step: u64,
    pub tensors: Vec<TensorRecord>,
    pub masks: Vec<MaskRecord>,
}

impl Checkpoint {
    pub fn new(
        config: &TrainConfig,
        step: u64,
        params: &DecoderParams<f32>,
        masks: &MaskStore,
    ) -> Self {
        let tensors = params
            .tensor_names()
            .into_iter()
            .zip(params.tensor_shapes())
            .zip(params.tensors())
            .map(|((name, (rows, cols)), v)| TensorRecord {
                name,
                rows,
                cols,
                values: v.to_vec(),
            })
            .collect();
        let masks = PRUNED_NAMES
            .iter()
            .zip(masks.masks())
            .map(|(name, m)| MaskRecord {
                name: name.to_string(),
                rows: m.rows(),
                cols: m.cols(),
                group_size: config.group_size,
                bits: m
                    .bits()
                    .chunks(m.cols().max(1))
                    .map(|row| row.iter().map(|&b| if b { '1' } else { '0' }).collect())
                    .collect(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            step,
            tensors,
            masks,
        }
    }

    pub fn from_outcome(config: &TrainConfig, out: &TrainOutcome) -> Self {
        Self::new(config, out.steps, &out.params, &out.masks)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| CliError::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let de = &mut serde_json::Deserializer::from_str(text);
        let ck: Checkpoint = serde_path_to_error::deserialize(de)
            .map_err(|e| bad(format!("at `{}`: {}", e.path(), e.inner())))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format version {}",
                ck.format_version
            )));
        }
        ck.config.validate().map_err(|e| bad(e.to_string()))?;
        ck.params().map_err(|e| bad(e.to_string()))?;
        let masks = ck.mask_store().map_err(|e| bad(e.to_string()))?;
        let spec = ck.config.group().map_err(|e| bad(e.to_string()))?;
        for (name, m) in PRUNED_NAMES.iter().zip(masks.masks()) {
            if let Some((row, group)) = m.first_mixed_group(spec).map_err(|e| bad(e.to_string()))? {
                return Err(bad(format!(
                    "mask {name} is not group-constant at row {row}, group {group}"
                )));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn params(&self) -> simdreg_core::Result<DecoderParams<f32>> {
        let named: Vec<(&str, usize, usize, &[f32])> = self
            .tensors
            .iter()
            .map(|t| (t.name.as_str(), t.rows, t.cols, t.values.as_slice()))
            .collect();
        DecoderParams::from_tensors(self.config.model, &named)
    }

    pub fn mask_store(&self) -> simdreg_core::Result<MaskStore> {
        let invalid = |reason: String| simdreg_core::Error::InvalidConfig {
            field: "masks",
            reason,
        };
        if self.masks.len() != PRUNED_NAMES.len() {
            return Err(invalid(format!(
                "expected {} masks, found {}",
                PRUNED_NAMES.len(),
                self.masks.len()
            )));
        }
        let mut out = Vec::with_capacity(self.masks.len());
        for (rec, name) in self.masks.iter().zip(PRUNED_NAMES) {
            if rec.name != name {
                return Err(invalid(format!("expected mask {name}, found {}", rec.name)));
            }
            if rec.group_size != self.config.group_size {
                return Err(invalid(format!(
                    "mask {name} has group size {}, config has {}",
                    rec.group_size, self.config.group_size
                )));
            }
            if rec.bits.len() != rec.rows || rec.bits.iter().any(|r| r.len() != rec.cols) {
                return Err(invalid(format!(
                    "mask {name} does not have {}x{} bits",
                    rec.rows, rec.cols
                )));
            }
            let mut bits = Vec::with_capacity(rec.rows * rec.cols);
            for c in rec.bits.iter().flat_map(|r| r.chars()) {
                bits.push(match c {
                    '1' => true,
                    '0' => false,
                    other => return Err(invalid(format!("mask {name} contains `{other}`"))),
                });
            }
            out.push(PruneMask::from_bits(rec.rows, rec.cols, bits)?);
        }
        let params = self.params()?;
        for (m, w) in out.iter().zip(params.pruned()) {
            if (m.rows(), m.cols()) != w.shape() {
                return Err(simdreg_core::Error::ShapeMismatch {
                    op: "checkpoint mask",
                    left_rows: m.rows(),
                    left_cols: m.cols(),
                    right_rows: w.rows(),
                    right_cols: w.cols(),
                });
            }
        }
        Ok(MaskStore::from_masks(out))
    }

    /// Weight matrix by tensor name; `fc1` is shorthand for `fc1.weight`.
    pub fn tensor(&self, layer: &str) -> Result<&TensorRecord> {
        let full = if layer.contains('.') {
            layer.to_string()
        } else {
            format!("{layer}.weight")
        };
        self.tensors
            .iter()
            .find(|t| t.name == full)
            .ok_or_else(|| CliError::UnknownLayer(layer.to_string()))
    }

    pub fn mask(&self, name: &str) -> Option<&MaskRecord> {
        self.masks.iter().find(|m| m.name == name)
    }
}
