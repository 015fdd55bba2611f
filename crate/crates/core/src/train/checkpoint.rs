//! Self-describing binary checkpoints.
//!
//! Layout: magic `KGCCKPT\0`, format version (u32 LE), header length (u64 LE), a JSON
//! header, then every tensor's f32 values little-endian in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::negatives::LossConfig;
use crate::autodiff::{ParameterStore, Tensor};
use crate::error::{KgcError, Result};
use crate::io::write_atomic;
use crate::model::ModelConfig;

const MAGIC: &[u8; 8] = b"KGCCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub dataset: String,
    pub num_entities: usize,
    pub num_relations: usize,
    pub vocab_hash: String,
    pub config_hash: String,
    pub seed: u64,
    /// Epoch at which the stored parameters were taken.
    pub epoch: usize,
    pub best_valid_mrr: f64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParameterStore<f32>,
}

impl Checkpoint {
    /// Fills the tensor index from `params`.
    pub fn new(mut header: CheckpointHeader, params: ParameterStore<f32>) -> Self {
        header.tensors = params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_owned(),
                shape: t.shape().to_vec(),
            })
            .collect();
        Checkpoint { header, params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 4 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for entry in &self.header.tensors {
            let t = self.params.get(&entry.name).expect("index built from params");
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| KgcError::Checkpoint(m.to_owned());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a kgc checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(KgcError::Checkpoint(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)
            .map_err(|e| KgcError::Checkpoint(format!("header: {e}")))?;
        let mut data = &bytes[20 + len..];
        let mut params = ParameterStore::new(header.seed);
        for entry in &header.tensors {
            let count: usize = entry.shape.iter().product();
            if data.len() < 4 * count {
                return Err(KgcError::Checkpoint(format!("truncated tensor {}", entry.name)));
            }
            let values = data[..4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            data = &data[4 * count..];
            params.insert(entry.name.clone(), Tensor::from_vec(&entry.shape, values)?)?;
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| KgcError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            KgcError::Checkpoint(m) => KgcError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
