//! Histogram-of-oriented-gradients descriptors for part windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayRaster;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HogConfig {
    /// Window width and height in pixels.
    pub window: (usize, usize),
    /// Cell side in pixels.
    pub cell: usize,
    /// Block side in cells. Blocks overlap with a stride of one cell.
    pub block: usize,
    pub bins: usize,
    /// Orientations over 360 degrees instead of 180.
    pub signed: bool,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            window: (16, 16),
            cell: 8,
            block: 2,
            bins: 9,
            signed: false,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.window;
        if self.cell == 0 || self.block == 0 || self.bins == 0 || w == 0 || h == 0 {
            return Err(Error::Config("hog sizes must be positive".into()));
        }
        if w % self.cell != 0 || h % self.cell != 0 {
            return Err(Error::Config(format!(
                "hog window {w}x{h} not divisible by cell {}",
                self.cell
            )));
        }
        if self.block > w / self.cell || self.block > h / self.cell {
            return Err(Error::Config(format!(
                "hog block {} larger than window in cells",
                self.block
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.window.0 / self.cell, self.window.1 / self.cell)
    }

    pub fn blocks(&self) -> (usize, usize) {
        let (cx, cy) = self.cells();
        (cx + 1 - self.block, cy + 1 - self.block)
    }

    /// `blocks_x * blocks_y * block^2 * bins`.
    pub fn descriptor_len(&self) -> usize {
        let (bx, by) = self.blocks();
        bx * by * self.block * self.block * self.bins
    }
}

/// Descriptor of the `cfg.window` region centered at `center`.
pub fn hog_descriptor<T: Real>(
    image: &GrayRaster<T>,
    center: (T, T),
    cfg: &HogConfig,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let patch = image.crop_centered(center.0, center.1, cfg.window.0, cfg.window.1)?;
    Ok(hog_patch(&patch, cfg))
}

/// Descriptor of a patch that is exactly `cfg.window` in size.
pub(crate) fn hog_patch<T: Real>(patch: &GrayRaster<T>, cfg: &HogConfig) -> Vec<T> {
    debug_assert_eq!((patch.width(), patch.height()), cfg.window);
    let (cells_x, cells_y) = cfg.cells();
    let bins = cfg.bins;
    let span = if cfg.signed {
        T::TAU()
    } else {
        T::PI()
    };
    let bin_width = span / T::from_usize_lossy(bins);

    let mut hist = vec![T::zero(); cells_x * cells_y * bins];
    for y in 0..cells_y * cfg.cell {
        for x in 0..cells_x * cfg.cell {
            let (xi, yi) = (x as isize, y as isize);
            let gx = patch.at_clamped(xi + 1, yi) - patch.at_clamped(xi - 1, yi);
            let gy = patch.at_clamped(xi, yi + 1) - patch.at_clamped(xi, yi - 1);
            let mag = gx.hypot(gy);
            // sub-noise gradients from resampling round-off count as flat
            if mag <= T::lit(1e-9) {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < T::zero() {
                angle = angle + T::TAU();
            }
            if !cfg.signed && angle >= T::PI() {
                angle = angle - T::PI();
            }
            let bin = (angle / bin_width).floor().to_usize().unwrap_or(0).min(bins - 1);
            let cell = (y / cfg.cell) * cells_x + x / cfg.cell;
            hist[cell * bins + bin] = hist[cell * bins + bin] + mag;
        }
    }

    let (blocks_x, blocks_y) = cfg.blocks();
    let mut out = Vec::with_capacity(cfg.descriptor_len());
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let start = out.len();
            for cy in by..by + cfg.block {
                for cx in bx..bx + cfg.block {
                    let c = cy * cells_x + cx;
                    out.extend_from_slice(&hist[c * bins..(c + 1) * bins]);
                }
            }
            let norm = out[start..].iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                for v in &mut out[start..] {
                    *v = *v / norm;
                }
            }
        }
    }
    out
}
