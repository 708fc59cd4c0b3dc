//! Checkpoint container.
//!
//! Layout: the 8-byte magic `HIGRUCKP`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the UTF-8 JSON header,
//! then every array as raw little-endian `f64` values. Array offsets in
//! the header are byte offsets from the start of the data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HiGru, ModelConfig};
use crate::data::LabelScheme;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"HIGRUCKP";
const VERSION: u32 = 1;

/// Everything besides weights needed to reuse a trained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Tokens in id order, reserved entries first.
    #[serde(default)]
    pub vocab: Vec<String>,
    #[serde(default)]
    pub scheme: Option<LabelScheme>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    meta: CheckpointMeta,
    arrays: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: CheckpointMeta,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &HiGru<T>, meta: CheckpointMeta) -> Self {
        let arrays = model
            .params()
            .iter()
            .map(|(_, name, t)| NamedArray {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Checkpoint {
            config: model.config().clone(),
            meta,
            arrays,
        }
    }

    /// Model with the stored architecture.
    pub fn to_model<T: Scalar>(&self) -> Result<HiGru<T>> {
        HiGru::from_arrays(self.config.clone(), &self.arrays)
    }

    /// Model with architecture `config`; fails if the stored arrays do not fit it.
    pub fn to_model_with<T: Scalar>(&self, config: ModelConfig) -> Result<HiGru<T>> {
        HiGru::from_arrays(config, &self.arrays)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut manifest = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            manifest.push(ManifestEntry {
                name: a.name.clone(),
                shape: a.shape.clone(),
                offset,
            });
            offset += 8 * a.data.len() as u64;
        }
        let header = Header {
            config: self.config.clone(),
            meta: self.meta.clone(),
            arrays: manifest,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            for x in &a.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(err("not a HiGRU checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| err("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..data_start])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let data = &bytes[data_start..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut expected_offset = 0u64;
        for e in header.arrays {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset {
                return Err(Error::Checkpoint(format!(
                    "array {:?} at offset {}, expected {expected_offset}",
                    e.name, e.offset
                )));
            }
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > data.len() {
                return Err(Error::Checkpoint(format!(
                    "array {:?} runs past end of file",
                    e.name
                )));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            expected_offset = end as u64;
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                data: values,
            });
        }
        if expected_offset as usize != data.len() {
            return Err(err("trailing bytes after the last array"));
        }
        Ok(Checkpoint {
            config: header.config,
            meta: header.meta,
            arrays,
        })
    }

    /// Writes atomically: a crash never leaves a truncated file at `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
