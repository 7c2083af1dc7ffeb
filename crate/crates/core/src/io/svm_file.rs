//! Binary SVM model files: `b"PTSV"`, version (u32), feature dimension
//! (u64), then little-endian f64 values: reg, mean, scale, weights, bias.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::svm::SvmModel;

const MAGIC: &[u8; 4] = b"PTSV";
const VERSION: u32 = 1;

pub fn encode_svm<T: Real>(m: &SvmModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * (3 * m.feature_dim + 2));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.feature_dim as u64).to_le_bytes());
    let mut put = |v: T| out.extend_from_slice(&v.as_f64().to_le_bytes());
    put(m.reg);
    m.mean.iter().chain(&m.scale).chain(&m.weights).for_each(|&v| put(v));
    put(m.bias);
    out
}

pub fn decode_svm<T: Real>(buf: &[u8]) -> Result<SvmModel<T>> {
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(Error::Format("not an SVM model file".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SVM model version {version}")));
    }
    let dim = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let body = &buf[16..];
    let expected = dim
        .checked_mul(3)
        .and_then(|n| n.checked_add(2))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("SVM dimension overflows".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "SVM model body is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let vals: Vec<T> = body
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    Ok(SvmModel {
        reg: vals[0],
        mean: vals[1..1 + dim].to_vec(),
        scale: vals[1 + dim..1 + 2 * dim].to_vec(),
        weights: vals[1 + 2 * dim..1 + 3 * dim].to_vec(),
        bias: vals[1 + 3 * dim],
        feature_dim: dim,
    })
}

pub fn read_svm<T: Real>(path: &Path) -> Result<SvmModel<T>> {
    decode_svm(&std::fs::read(path)?)
}

pub fn write_svm<T: Real>(path: &Path, m: &SvmModel<T>) -> Result<()> {
    super::write_atomic(path, &encode_svm(m))
}
