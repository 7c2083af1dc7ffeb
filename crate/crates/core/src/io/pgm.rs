//! Binary PGM (P5) grayscale images, 8 or 16 bit, mapped to `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::raster::GrayRaster;
use crate::scalar::Real;

fn image_err(e: image::ImageError) -> Error {
    Error::Format(format!("pgm: {e}"))
}

pub fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<GrayRaster<T>> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(image_err)?;
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| T::lit(f64::from(v) / 65535.0)).collect();
    GrayRaster::new(w as usize, h as usize, data)
}

/// 8-bit P5 encoding; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm<T: Real>(r: &GrayRaster<T>) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = r
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Cursor::new(Vec::new());
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, r.width() as u32, r.height() as u32, ExtendedColorType::L8)
        .map_err(image_err)?;
    Ok(out.into_inner())
}

pub fn read_pgm<T: Real>(path: &Path) -> Result<GrayRaster<T>> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_pgm<T: Real>(path: &Path, r: &GrayRaster<T>) -> Result<()> {
    super::write_atomic(path, &encode_pgm(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_8bit() {
        let r = GrayRaster::from_fn(7, 5, |x, y| ((x * 5 + y * 11) % 256) as f64 / 255.0);
        let bytes = encode_pgm(&r).unwrap();
        assert!(bytes.starts_with(b"P5"));
        let back: GrayRaster<f64> = decode_pgm(&bytes).unwrap();
        assert_eq!((back.width(), back.height()), (7, 5));
        for (a, b) in r.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_written_header() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let r: GrayRaster<f64> = decode_pgm(&bytes).unwrap();
        assert_eq!(r.data(), &[0.0, 1.0]);
    }
}
