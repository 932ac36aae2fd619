//! Binary checkpoint container.
//!
//! ```text
//! "ANTQCKPT" | u32 LE format version | u64 LE header length N | N bytes JSON header | tensor blobs
//! ```
//!
//! Blobs are little-endian f64 values. Every tensor is listed in the header
//! directory with its byte offset from the start of the blob region. The
//! full layout is described in `docs/checkpoint-format.md`.

use std::path::Path;

use antiqa_core::net::{self, ModelParams};
use antiqa_core::rng::RngState;
use antiqa_core::tensor::Tensor;
use antiqa_core::train::{AdamState, Checkpoint, CHECKPOINT_VERSION};
use antiqa_core::ArchConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::write_bytes;

pub const MAGIC: &[u8; 8] = b"ANTQCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_SCHEMA: &str = "antiqa-checkpoint/1";
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the blob region.
    pub offset: u64,
    /// Byte length, always `8 · product(shape)`.
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub arch: ArchConfig,
    pub epoch: usize,
    pub stage: Option<String>,
    pub rng: RngState,
    pub optimizer_step: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let meta = ck.meta();
    let mut tensors = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut push = |name: &str, group: Group, shape: &[usize], data: &[f64]| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            group,
            shape: shape.to_vec(),
            offset: blob.len() as u64,
            len: 8 * data.len() as u64,
        });
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in ck.params.iter() {
        push(name, Group::Param, t.shape(), t.data());
    }
    for (group, moments) in [(Group::AdamM, &ck.optimizer.m), (Group::AdamV, &ck.optimizer.v)] {
        for ((name, t), m) in ck.params.iter().zip(moments) {
            push(name, group, t.shape(), m);
        }
    }
    let header = Header {
        schema: CHECKPOINT_SCHEMA.into(),
        version: meta.version,
        arch: meta.arch,
        epoch: meta.epoch,
        stage: meta.stage,
        rng: meta.rng,
        optimizer_step: meta.optimizer_step,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

/// Parses a container, checking the directory against the blob region and
/// the tensors against the architecture.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
        return Err("not an antiqa checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported container version {version}"));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[PREAMBLE..];
    if hlen > body.len() as u64 {
        return Err(format!("header length {hlen} exceeds file size"));
    }
    let (head, blob) = body.split_at(hlen as usize);
    let header: Header = serde_json::from_slice(head).map_err(|e| format!("header: {e}"))?;
    if header.schema != CHECKPOINT_SCHEMA {
        return Err(format!("header schema {:?}, expected {CHECKPOINT_SCHEMA:?}", header.schema));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(format!("checkpoint version {}, expected {CHECKPOINT_VERSION}", header.version));
    }
    let mut expected_offset = 0u64;
    let mut params = ModelParams::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for e in &header.tensors {
        let numel: usize = e.shape.iter().product();
        if e.len != 8 * numel as u64 {
            return Err(format!("tensor {} ({:?}): length {} does not match shape {:?}", e.name, e.group, e.len, e.shape));
        }
        if e.offset != expected_offset {
            return Err(format!("tensor {} ({:?}): offset {} breaks the packed layout", e.name, e.group, e.offset));
        }
        let end = e.offset.checked_add(e.len).filter(|&end| end <= blob.len() as u64);
        let Some(end) = end else {
            return Err(format!("tensor {} ({:?}) runs past the end of the file", e.name, e.group));
        };
        expected_offset = end;
        let data: Vec<f64> = blob[e.offset as usize..end as usize]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match e.group {
            Group::Param => {
                let t = Tensor::new(e.shape.clone(), data).map_err(|err| err.to_string())?;
                params.insert(e.name.clone(), t).map_err(|err| err.to_string())?;
            }
            Group::AdamM | Group::AdamV => {
                let Some(p) = params.get(&e.name) else {
                    return Err(format!("moment {} has no matching parameter", e.name));
                };
                if p.shape() != e.shape.as_slice() {
                    return Err(format!("moment {} shape {:?} differs from parameter {:?}", e.name, e.shape, p.shape()));
                }
                let list = if e.group == Group::AdamM { &mut m } else { &mut v };
                if params.name_at(list.len()) != e.name {
                    return Err(format!("moment {} out of parameter order", e.name));
                }
                list.push(data);
            }
        }
    }
    if expected_offset != blob.len() as u64 {
        return Err(format!("{} trailing bytes after the last tensor", blob.len() as u64 - expected_offset));
    }
    if m.len() != params.len() || v.len() != params.len() {
        return Err(format!("optimizer moments cover {}/{} of {} parameters", m.len(), v.len(), params.len()));
    }
    net::check_params(&header.arch, &params).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        version: header.version,
        arch: header.arch,
        params,
        optimizer: AdamState { step: header.optimizer_step, m, v },
        epoch: header.epoch,
        stage: header.stage,
        rng: header.rng,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_bytes(path, &encode(ck))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
