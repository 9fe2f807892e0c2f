//! Binary checkpoint format.
//!
//! ```text
//! offset  size   field
//! 0       8      magic "NILMCKPT"
//! 8       4      format version, u32 LE
//! 12      8      header length L, u64 LE
//! 20      L      header JSON (UTF-8)
//! 20+L    8·P    parameters                     f64 LE
//!         8·P    Adam first moments             f64 LE
//!         8·P    Adam second moments            f64 LE
//!         8·P    best-validation parameters     f64 LE
//! ```
//!
//! `P` is the header's `n_params`; parameter order follows
//! [`ParamLayout`](super::ParamLayout).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::train::{HistoryRow, TrainState};
use super::{ClassifierParams, ResFfnConfig};
use crate::error::{NilmError, Result};
use crate::io::{f64s_from_le_bytes, f64s_to_le_bytes};

pub const MAGIC: &[u8; 8] = b"NILMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    artifact_version: u32,
    config: ResFfnConfig,
    n_params: usize,
    adam_step: u64,
    epoch: usize,
    best_epoch: usize,
    best_val_f1: Option<f64>,
    history: Vec<HistoryRow>,
    meta: serde_json::Value,
}

/// Training state plus caller-defined metadata (config hashes, feature kind).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.state;
        let n = s.params.values.len();
        let header = Header {
            artifact_version: crate::ARTIFACT_VERSION,
            config: s.params.config,
            n_params: n,
            adam_step: s.params.adam.step,
            epoch: s.epoch,
            best_epoch: s.best_epoch,
            best_val_f1: s.best_val_f1.is_finite().then_some(s.best_val_f1),
            history: s.history.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 32 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for part in [&s.params.values, &s.params.adam.m, &s.params.adam.v, &s.best_values] {
            if part.len() != n {
                return Err(NilmError::InvalidState("parameter arrays differ in length".into()));
            }
            out.extend_from_slice(&f64s_to_le_bytes(part));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| NilmError::Data(format!("checkpoint: {msg}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let n = header.n_params;
        if ResFfnConfig::param_count(&header.config) != n {
            return Err(bad("parameter count disagrees with config"));
        }
        let arrays = &bytes[20 + len..];
        if arrays.len() != 32 * n {
            return Err(bad(&format!("expected {} array bytes, found {}", 32 * n, arrays.len())));
        }
        let mut parts = arrays.chunks_exact(8 * n.max(1)).map(f64s_from_le_bytes);
        let mut next = || -> Result<Vec<f64>> {
            if n == 0 {
                return Ok(Vec::new());
            }
            parts.next().ok_or_else(|| bad("missing array"))?
        };
        let (values, m, v, best) = (next()?, next()?, next()?, next()?);
        let params = ClassifierParams {
            config: header.config,
            values,
            adam: AdamState {
                m,
                v,
                step: header.adam_step,
            },
        };
        Ok(Self {
            state: TrainState {
                params,
                epoch: header.epoch,
                best_values: best,
                best_epoch: header.best_epoch,
                best_val_f1: header.best_val_f1.unwrap_or(f64::NEG_INFINITY),
                history: header.history,
            },
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| NilmError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| NilmError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
