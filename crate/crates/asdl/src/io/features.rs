//! Feature tensors on disk.
//!
//! Layout (little endian): magic `ASDLFEAT`, then u32 version, kind code,
//! channels, frames, bins and dtype (0 = f32), followed by the
//! `[channel][frame][bin]` samples.

use std::path::{Path, PathBuf};

use asdl_core::{FeatureKind, FeatureTensor};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

const MAGIC: &[u8; 8] = b"ASDLFEAT";
const VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;
const HEADER: usize = 8 + 6 * 4;

pub fn encode(t: &FeatureTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + t.data.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t.kind.code(), t.channels as u32, t.frames as u32, t.bins as u32, DTYPE_F32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], id: &str, path: &Path) -> Result<FeatureTensor> {
    let bad = |m: &str| AppError::format(path, m);
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("not a feature file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad("unsupported feature file version"));
    }
    let kind = FeatureKind::from_code(word(1)).ok_or_else(|| bad("unknown feature kind"))?;
    if word(5) != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    let (c, t, f) = (word(2) as usize, word(3) as usize, word(4) as usize);
    let body = &bytes[HEADER..];
    if body.len() != c * t * f * 4 {
        return Err(bad("payload length does not match the header"));
    }
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(FeatureTensor::new(kind, c, t, f, data, id)?)
}

pub fn write(path: &Path, t: &FeatureTensor) -> Result<()> {
    super::write_atomic(path, &encode(t))
}

pub fn read(path: &Path, id: &str) -> Result<FeatureTensor> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, id, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
}

/// One chunk of a feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkEntry {
    pub file: PathBuf,
    pub scene: String,
    pub chunk: usize,
    pub start_s: f64,
    pub view: usize,
    pub split: SplitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub kind: FeatureKind,
    pub snr: crate::config::Snr,
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub chunks: Vec<ChunkEntry>,
}

impl FeatureIndex {
    /// Chunk entries of one scene in time order.
    pub fn scene(&self, name: &str) -> Vec<&ChunkEntry> {
        let mut v: Vec<&ChunkEntry> = self.chunks.iter().filter(|c| c.scene == name).collect();
        v.sort_by_key(|c| c.chunk);
        v
    }

    /// Scene names of a split in first-appearance order.
    pub fn scenes(&self, split: SplitKind) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.chunks.iter().filter(|c| c.split == split) {
            if !out.contains(&c.scene) {
                out.push(c.scene.clone());
            }
        }
        out
    }
}
