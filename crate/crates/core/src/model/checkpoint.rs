//! Checkpoint container.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LUMICKPT"
//! 8       4     u32 format version
//! 12      8     u64 header length N
//! 20      N     UTF-8 JSON header
//! 20+N    ...   f32 blobs: every parameter in header order, then (when
//!               the header carries optimizer state) every first moment,
//!               then every second moment, in the same order
//! ```
//!
//! The header records the network config, the tensor list (name, group,
//! shape), training progress, the frozen groups and the optimizer step
//! count and hyper-parameters.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{Network, NetworkConfig, ParamGroup};
use crate::error::{Error, Result};
use crate::loss::TrainProgress;

pub const MAGIC: &[u8; 8] = b"LUMICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHeader {
    pub config: AdamConfig,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: NetworkConfig,
    pub tensors: Vec<TensorEntry>,
    pub progress: TrainProgress,
    pub frozen: Vec<ParamGroup>,
    pub adam: Option<AdamHeader>,
}

/// Everything a checkpoint restores.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network,
    pub progress: TrainProgress,
    pub adam: Option<AdamState>,
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode(net: &Network, progress: &TrainProgress, adam: Option<&AdamState>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        config: net.config().clone(),
        tensors: net
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                group: p.group,
                shape: p.shape.clone(),
            })
            .collect(),
        progress: *progress,
        frozen: net.frozen().to_vec(),
        adam: adam.map(|a| AdamHeader { config: a.cfg, t: a.t }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PREFIX + json.len() + 4 * net.param_count() * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params() {
        push_f32s(&mut out, &p.value);
    }
    if let Some(a) = adam {
        if a.m.len() != net.params().len() {
            return Err(Error::dims("optimizer state does not match the network"));
        }
        for m in &a.m {
            push_f32s(&mut out, m);
        }
        for v in &a.v {
            push_f32s(&mut out, v);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.pos as u64, "checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::parse(self.pos as u64, "tensor too large"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::parse(0, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(8, format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| Error::parse(12, "header length overflow"))?;
    let header: CheckpointHeader = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::parse(PREFIX as u64, format!("checkpoint header: {e}")))?;
    let sizes: Vec<usize> = header.tensors.iter().map(|t| t.shape.iter().product()).collect();
    let mut values = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        values.push(cur.f32s(n)?);
    }
    let mut network = Network::from_parts(header.config.clone(), values)?;
    for (p, t) in network.params().iter().zip(&header.tensors) {
        if p.name != t.name || p.shape != t.shape || p.group != t.group {
            return Err(Error::parse(PREFIX as u64, format!("tensor {} does not match the topology", t.name)));
        }
    }
    network.set_frozen(&header.frozen);
    let adam = match header.adam {
        Some(h) => {
            let mut m = Vec::with_capacity(sizes.len());
            for &n in &sizes {
                m.push(cur.f32s(n)?);
            }
            let mut v = Vec::with_capacity(sizes.len());
            for &n in &sizes {
                v.push(cur.f32s(n)?);
            }
            Some(AdamState {
                cfg: h.config,
                t: h.t,
                m,
                v,
            })
        }
        None => None,
    };
    if cur.pos != bytes.len() {
        return Err(Error::parse(cur.pos as u64, "trailing bytes after checkpoint"));
    }
    Ok(Checkpoint {
        network,
        progress: header.progress,
        adam,
    })
}

pub fn save(path: &Path, net: &Network, progress: &TrainProgress, adam: Option<&AdamState>) -> Result<()> {
    let bytes = encode(net, progress, adam)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
