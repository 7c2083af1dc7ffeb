//! Flat little-endian heatmap files.
//!
//! A file is a sequence of records:
//! `b"PTHM"`, joint index (u32), width (u32), height (u32), stride (f32),
//! origin x and y (f32), then `width * height` f32 values row-major.

use std::path::Path;

use crate::candidates::Heatmap;
use crate::error::{Error, Result};
use crate::model::Joint;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"PTHM";

pub fn encode_heatmaps<T: Real>(maps: &[Heatmap<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in maps {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(m.joint.index() as u32).to_le_bytes());
        out.extend_from_slice(&(m.width as u32).to_le_bytes());
        out.extend_from_slice(&(m.height as u32).to_le_bytes());
        for v in [m.stride, m.origin.0, m.origin.1] {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        for &v in &m.grid {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("heatmap file truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.take::<4>().map(f32::from_le_bytes)
    }
}

pub fn decode_heatmaps<T: Real>(buf: &[u8]) -> Result<Vec<Heatmap<T>>> {
    let mut c = Cursor { buf, pos: 0 };
    let mut out = Vec::new();
    while c.pos < buf.len() {
        if &c.take::<4>()? != MAGIC {
            return Err(Error::Format(format!("bad heatmap magic at byte {}", c.pos - 4)));
        }
        let j = c.u32()? as usize;
        let joint = Joint::from_index(j).ok_or_else(|| Error::UnknownJoint(j.to_string()))?;
        let width = c.u32()? as usize;
        let height = c.u32()? as usize;
        let stride = c.f32()?;
        let origin = (c.f32()?, c.f32()?);
        let n = width
            .checked_mul(height)
            .filter(|&n| n <= (buf.len() - c.pos) / 4)
            .ok_or_else(|| Error::Format("heatmap grid larger than file".into()))?;
        let mut grid = Vec::with_capacity(n);
        for _ in 0..n {
            grid.push(T::lit(f64::from(c.f32()?)));
        }
        out.push(
            Heatmap::new(joint, width, height, grid)?
                .with_geometry(T::lit(f64::from(stride)), (T::lit(f64::from(origin.0)), T::lit(f64::from(origin.1)))),
        );
    }
    Ok(out)
}

pub fn read_heatmaps<T: Real>(path: &Path) -> Result<Vec<Heatmap<T>>> {
    decode_heatmaps(&std::fs::read(path)?)
}

pub fn write_heatmaps<T: Real>(path: &Path, maps: &[Heatmap<T>]) -> Result<()> {
    super::write_atomic(path, &encode_heatmaps(maps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let maps: Vec<Heatmap<f64>> = Joint::ALL
            .iter()
            .map(|&j| {
                let grid = (0..12).map(|k| ((k + j.index()) % 5) as f64 / 4.0).collect();
                Heatmap::new(j, 4, 3, grid).unwrap().with_geometry(4.0, (2.0, 2.0))
            })
            .collect();
        let back: Vec<Heatmap<f64>> = decode_heatmaps(&encode_heatmaps(&maps)).unwrap();
        assert_eq!(back, maps);
    }

    #[test]
    fn truncation_detected() {
        let m = Heatmap::new(Joint::Head, 2, 2, vec![0.0f64, 0.5, 1.0, 0.25]).unwrap();
        let bytes = encode_heatmaps(&[m]);
        assert!(decode_heatmaps::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_heatmaps::<f64>(b"XXXX").is_err());
    }
}
