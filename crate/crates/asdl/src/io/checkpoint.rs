//! Versioned model checkpoints.
//!
//! Layout: magic `ASDLCKPT`, u32 version, u32 header length, a JSON header,
//! then the little-endian f32 arrays (parameters, buffers, Adam first and
//! second moments) and a trailing SHA-256 of everything before it.

use std::path::Path;

use asdl_core::model::{AdamState, Layout, TensorInfo};
use asdl_core::{CrnnConfig, CrnnParams, NormStats};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

const MAGIC: &[u8; 8] = b"ASDLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config_hash: String,
    model: CrnnConfig,
    norm: NormStats,
    epoch: usize,
    adam_step: u64,
    tensors: Vec<TensorInfo>,
    n_params: usize,
    n_buffers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub params: CrnnParams<f32>,
    pub norm: NormStats,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
}

fn push_f32(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let p = &ck.params;
    let header = Header {
        config_hash: ck.config_hash.clone(),
        model: p.config.clone(),
        norm: ck.norm.clone(),
        epoch: ck.epoch,
        adam_step: ck.adam.step,
        tensors: p.layout.tensors.clone(),
        n_params: p.values.len(),
        n_buffers: p.buffers.len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push_f32(&mut out, &p.values);
    push_f32(&mut out, &p.buffers);
    push_f32(&mut out, &ck.adam.m);
    push_f32(&mut out, &ck.adam.v);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |m: String| AppError::format(path, m);
    if bytes.len() < 16 + 32 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch (truncated or corrupted file)".into()));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let hlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(body.get(16..16 + hlen).ok_or_else(|| bad("short header".into()))?).map_err(|e| bad(e.to_string()))?;
    let layout = Layout::new(&header.model);
    if layout.tensors != header.tensors || layout.n_params != header.n_params || layout.n_buffers != header.n_buffers {
        return Err(bad("tensor table does not match the stored model configuration".into()));
    }
    let floats: Vec<f32> = body[16 + hlen..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let (np, nb) = (header.n_params, header.n_buffers);
    if floats.len() != 3 * np + nb || (body.len() - 16 - hlen) % 4 != 0 {
        return Err(bad("payload length does not match the tensor table".into()));
    }
    let params = CrnnParams { config: header.model, layout, values: floats[..np].to_vec(), buffers: floats[np..np + nb].to_vec() };
    let adam = AdamState { m: floats[np + nb..2 * np + nb].to_vec(), v: floats[2 * np + nb..].to_vec(), step: header.adam_step };
    Ok(Checkpoint { config_hash: header.config_hash, params, norm: header.norm, adam, epoch: header.epoch })
}

pub fn write(path: &Path, ck: &Checkpoint) -> Result<()> {
    super::write_atomic(path, &encode(ck))
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use asdl_core::{FeatureKind, Variant};

    fn sample() -> Checkpoint {
        let mut cfg = CrnnConfig::desk(Variant::Crnn, 2);
        cfg.conv_channels = [2, 2, 4, 4];
        cfg.gru_hidden = 4;
        cfg.fc1_dim = 4;
        let params = CrnnParams::<f32>::init(&cfg, 5).unwrap();
        let n = params.n_params();
        let norm = NormStats { kind: FeatureKind::LogMel2, channels: 2, bins: 64, mean: vec![0.5; 128], std: vec![2.0; 128] };
        let adam = AdamState { m: vec![0.25; n], v: vec![0.125; n], step: 17 };
        Checkpoint { config_hash: "abc".into(), params, norm, adam, epoch: 3 }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        assert_eq!(decode(&encode(&ck), Path::new("x")).unwrap(), ck);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = encode(&sample());
        let k = bytes.len() / 2;
        bytes[k] ^= 1;
        assert!(decode(&bytes, Path::new("x")).unwrap_err().to_string().contains("checksum"));
        let short = encode(&sample());
        assert!(decode(&short[..short.len() - 5], Path::new("x")).is_err());
    }
}
