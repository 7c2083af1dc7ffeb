use crate::error::{Error, Result};
use crate::scalar::Real;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> GrayRaster<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(GrayRaster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayRaster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with border replication.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample at a continuous pixel position, border replicated.
    pub fn sample(&self, x: T, y: T) -> T {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0.to_isize().unwrap_or(0);
        let yi = y0.to_isize().unwrap_or(0);
        let one = T::one();
        let a = self.at_clamped(xi, yi);
        let b = self.at_clamped(xi + 1, yi);
        let c = self.at_clamped(xi, yi + 1);
        let d = self.at_clamped(xi + 1, yi + 1);
        (a * (one - fx) + b * fx) * (one - fy) + (c * (one - fx) + d * fx) * fy
    }

    /// Copies a `w`×`h` window centered at `(cx, cy)`. The center is shifted
    /// so the window lies inside the image.
    pub fn crop_centered(&self, cx: T, cy: T, w: usize, h: usize) -> Result<Self> {
        if w > self.width || h > self.height || w == 0 || h == 0 {
            return Err(Error::WindowExceedsImage {
                window_w: w,
                window_h: h,
                image_w: self.width,
                image_h: self.height,
            });
        }
        let x0 = clamp_origin(cx, w, self.width);
        let y0 = clamp_origin(cy, h, self.height);
        Ok(GrayRaster::from_fn(w, h, |x, y| self.at(x0 + x, y0 + y)))
    }

    /// Square window of side `side` centered at `(cx, cy)`, shifted inside
    /// the image and bilinearly resampled to `out_w`×`out_h`.
    pub fn resample_window(
        &self,
        cx: T,
        cy: T,
        side: T,
        out_w: usize,
        out_h: usize,
    ) -> Result<Self> {
        let side_px = side.ceil().to_usize().unwrap_or(usize::MAX);
        if side_px > self.width || side_px > self.height {
            return Err(Error::WindowExceedsImage {
                window_w: side_px,
                window_h: side_px,
                image_w: self.width,
                image_h: self.height,
            });
        }
        let half = side * T::lit(0.5);
        let max_x = T::from_usize_lossy(self.width) - side;
        let max_y = T::from_usize_lossy(self.height) - side;
        let left = (cx - half).max(T::zero()).min(max_x);
        let top = (cy - half).max(T::zero()).min(max_y);
        let sx = side / T::from_usize_lossy(out_w);
        let sy = side / T::from_usize_lossy(out_h);
        let half_px = T::lit(0.5);
        Ok(GrayRaster::from_fn(out_w, out_h, |x, y| {
            // pixel centers map to pixel centers
            let px = left + (T::from_usize_lossy(x) + half_px) * sx - half_px;
            let py = top + (T::from_usize_lossy(y) + half_px) * sy - half_px;
            self.sample(px, py)
        }))
    }
}

fn clamp_origin<T: Real>(center: T, size: usize, limit: usize) -> usize {
    let start = (center - T::from_usize_lossy(size) * T::lit(0.5)).round();
    let start = start.max(T::zero()).to_usize().unwrap_or(0);
    start.min(limit - size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_is_shifted_inside() {
        let img = GrayRaster::<f64>::from_fn(20, 10, |x, y| (x + 100 * y) as f64);
        let c = img.crop_centered(0.0, 0.0, 4, 4).unwrap();
        assert_eq!(c.at(0, 0), 0.0);
        let c = img.crop_centered(19.0, 9.0, 4, 4).unwrap();
        assert_eq!(c.at(3, 3), img.at(19, 9));
        assert!(img.crop_centered(5.0, 5.0, 21, 4).is_err());
    }

    #[test]
    fn identity_resample() {
        let img = GrayRaster::<f64>::from_fn(16, 16, |x, y| (x * y) as f64 / 225.0);
        let r = img.resample_window(8.0, 8.0, 16.0, 16, 16).unwrap();
        for (a, b) in r.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
