//! Checkpoint file: magic `SMPC`, `u32` version, `u32` header length, JSON
//! header, then raw little-endian `f32` arrays at the offsets the header
//! lists (parameters, then Adam first and second moments).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, TrainConfig};
use crate::error::{Result, SampError};
use crate::model::SampConfig;
use crate::param::ParamStore;
use crate::tensor::Tensor;
use crate::util::{atomic_write, read_file};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SMPC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offsets in `f32` elements from the start of the data section.
    param_offset: usize,
    m_offset: usize,
    v_offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    model: SampConfig,
    step: usize,
    adam_t: u64,
    /// All randomness during training derives from `(seed, step)`.
    rng_seed: u64,
    dataset_fingerprint: Option<String>,
    loss_tail: Vec<f32>,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to resume or evaluate a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: SampConfig,
    /// Number of completed optimizer steps.
    pub step: usize,
    pub params: ParamStore<f32>,
    pub adam: AdamState,
    pub rng_seed: u64,
    pub dataset_fingerprint: Option<String>,
    /// Most recent losses, oldest first.
    pub loss_tail: Vec<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let total: usize = self.params.numel();
        for (_, p) in self.params.iter() {
            let n = p.tensor().numel();
            tensors.push(TensorEntry {
                name: p.name().to_string(),
                shape: p.tensor().shape().to_vec(),
                param_offset: offset,
                m_offset: total + offset,
                v_offset: 2 * total + offset,
            });
            offset += n;
        }
        let header = Header {
            config: self.config.clone(),
            model: self.model.clone(),
            step: self.step,
            adam_t: self.adam.t,
            rng_seed: self.rng_seed,
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            loss_tail: self.loss_tail.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(12 + json.len() + 12 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let arrays = self
            .params
            .iter()
            .map(|(_, p)| p.tensor().data())
            .chain(self.adam.m.iter().map(Vec::as_slice))
            .chain(self.adam.v.iter().map(Vec::as_slice));
        for a in arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let malformed = |reason: &str| SampError::Malformed {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(malformed("missing SMPC header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(SampError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let hlen = u32_at(8) as usize;
        let data_start = 12 + hlen;
        if bytes.len() < data_start {
            return Err(malformed("truncated header"));
        }
        let header: Header = serde_json::from_slice(&bytes[12..data_start])?;
        let data = &bytes[data_start..];
        if data.len() % 4 != 0 {
            return Err(malformed("data section is not a whole number of f32"));
        }
        let floats: Vec<f32> = data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if floats.len() != 3 * total {
            return Err(malformed("data section length does not match the tensor table"));
        }
        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for t in &header.tensors {
            let n: usize = t.shape.iter().product();
            let slice = |o: usize| -> Result<Vec<f32>> {
                floats
                    .get(o..o + n)
                    .map(<[f32]>::to_vec)
                    .ok_or_else(|| malformed("tensor offset out of range"))
            };
            params.add(t.name.clone(), Tensor::new(t.shape.clone(), slice(t.param_offset)?)?)?;
            m.push(slice(t.m_offset)?);
            v.push(slice(t.v_offset)?);
        }
        Ok(Checkpoint {
            config: header.config,
            model: header.model,
            step: header.step,
            params,
            adam: AdamState { m, v, t: header.adam_t },
            rng_seed: header.rng_seed,
            dataset_fingerprint: header.dataset_fingerprint,
            loss_tail: header.loss_tail,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}
