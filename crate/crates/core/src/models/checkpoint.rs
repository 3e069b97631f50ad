//! Versioned binary model checkpoint, little-endian.
//!
//! ```text
//! magic            8 bytes "CDCKPT\0\0"
//! version          u32 = 1
//! kind             u8  (0 = MF, 1 = CDAE)
//! scalar width     u8  (4 = f32, 8 = f64)
//! reserved         u16 = 0
//! num_users        u64
//! num_items        u64
//! dim              u64
//! seed             u64
//! corruption_ratio f64
//! param_count      u64
//! params           param_count x scalar, flat row-major segment order
//! ```

use std::fs;
use std::path::Path;

use super::{AnyModel, CdaeStyle, CfModel, MfLogistic, ModelKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CDCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub seed: u64,
    pub corruption_ratio: f64,
    pub param_count: usize,
}

pub fn encode<S: Scalar>(model: &AnyModel<S>, seed: u64) -> Vec<u8> {
    let corruption = match model {
        AnyModel::Mf(_) => 0.0,
        AnyModel::Cdae(m) => m.corruption_ratio(),
    };
    let params = model.params();
    let mut out = Vec::with_capacity(64 + params.len() * S::WIDTH as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(match model.kind() {
        ModelKind::Mf => 0,
        ModelKind::Cdae => 1,
    });
    out.push(S::WIDTH);
    out.extend_from_slice(&0u16.to_le_bytes());
    for v in [model.num_users(), model.num_items(), model.dim()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&corruption.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        p.write_le(&mut out);
    }
    out
}

pub fn decode<S: Scalar>(buf: &[u8]) -> Result<(AnyModel<S>, CheckpointHeader)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    const HEADER: usize = 8 + 4 + 4 + 8 * 6;
    if buf.len() < HEADER || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic or truncated header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = match buf[12] {
        0 => ModelKind::Mf,
        1 => ModelKind::Cdae,
        k => return Err(bad(&format!("unknown model kind {k}"))),
    };
    if buf[13] != S::WIDTH {
        return Err(bad(&format!("scalar width {} does not match requested width {}", buf[13], S::WIDTH)));
    }
    let header = CheckpointHeader {
        kind,
        num_users: u64_at(16) as usize,
        num_items: u64_at(24) as usize,
        dim: u64_at(32) as usize,
        seed: u64_at(40),
        corruption_ratio: f64::from_le_bytes(buf[48..56].try_into().unwrap()),
        param_count: u64_at(56) as usize,
    };
    let w = S::WIDTH as usize;
    if buf.len() - HEADER != header.param_count.saturating_mul(w) {
        return Err(bad("parameter block length does not match header"));
    }
    let params: Vec<S> = buf[HEADER..].chunks_exact(w).map(S::read_le).collect();
    let (m, n, d) = (header.num_users, header.num_items, header.dim);
    let model = match kind {
        ModelKind::Mf => AnyModel::Mf(MfLogistic::from_params(m, n, d, params)?),
        ModelKind::Cdae => AnyModel::Cdae(CdaeStyle::from_params(m, n, d, header.corruption_ratio, params)?),
    };
    Ok((model, header))
}

pub fn save_checkpoint<S: Scalar>(path: &Path, model: &AnyModel<S>, seed: u64) -> Result<()> {
    fs::write(path, encode(model, seed)).map_err(|e| Error::io(path, e))
}

/// Scalar width in bytes (4 or 8) stored in a checkpoint file's header.
pub fn read_width(path: &Path) -> Result<u8> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 14 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint", path.display())));
    }
    Ok(buf[13])
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(AnyModel<S>, CheckpointHeader)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
