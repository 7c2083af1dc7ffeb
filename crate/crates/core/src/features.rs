//! Pose-representation (PR) features.
//!
//! The configuration part is the 2-D relational pose feature: for `n`
//! keypoints it holds `C(n,2)` pairwise distances, `C(n,2)` pairwise
//! orientations and `3 C(n,3)` inner angles, in that order. Pairs and
//! triples are enumerated lexicographically by joint index; each triple
//! contributes the angles at its three vertices in ascending index order.
//! With 14 keypoints that is 91 + 91 + 1092 = 1274 components.
//!
//! The optional appearance part concatenates one HOG descriptor per part
//! window (13 limb midpoints followed by the head keypoint).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{hog_patch, HogConfig};
use crate::model::{Joint, Point, Skeleton, LIMBS, NUM_JOINTS};
use crate::raster::GrayRaster;
use crate::scalar::Real;

/// Length of the 14-keypoint configuration vector.
pub const CONFIG_DIM: usize = relational_len(NUM_JOINTS);
pub const NUM_PAIRS: usize = NUM_JOINTS * (NUM_JOINTS - 1) / 2;
pub const NUM_TRIPLE_ANGLES: usize = CONFIG_DIM - 2 * NUM_PAIRS;
pub const NUM_PARTS: usize = 14;

/// `C(n,2) + C(n,2) + 3 C(n,3)`.
pub const fn relational_len(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let pairs = n * (n - 1) / 2;
    let triples = if n >= 3 { n * (n - 1) * (n - 2) / 6 } else { 0 };
    2 * pairs + 3 * triples
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrFeature<T> {
    pub config: Vec<T>,
    pub appearance: Option<Vec<T>>,
}

impl<T: Real> PrFeature<T> {
    pub fn combined_dim(&self) -> usize {
        self.config.len() + self.appearance.as_ref().map_or(0, Vec::len)
    }

    /// Configuration followed by appearance.
    pub fn combined(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.combined_dim());
        v.extend_from_slice(&self.config);
        if let Some(a) = &self.appearance {
            v.extend_from_slice(a);
        }
        v
    }

    pub fn distances(&self) -> &[T] {
        &self.config[..NUM_PAIRS]
    }

    pub fn orientations(&self) -> &[T] {
        &self.config[NUM_PAIRS..2 * NUM_PAIRS]
    }

    pub fn inner_angles(&self) -> &[T] {
        &self.config[2 * NUM_PAIRS..]
    }
}

/// Orientation of `b - a` in `(-pi, pi]`; zero for coincident points.
fn orientation<T: Real>(a: Point<T>, b: Point<T>) -> T {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx == T::zero() && dy == T::zero() {
        return T::zero();
    }
    let t = dy.atan2(dx);
    if t <= -T::PI() {
        T::PI()
    } else {
        t
    }
}

/// Angle in `[0, pi]` at `v` between `a - v` and `b - v`; zero when either
/// arm has zero length.
fn inner_angle<T: Real>(v: Point<T>, a: Point<T>, b: Point<T>) -> T {
    let (ux, uy) = (a.x - v.x, a.y - v.y);
    let (wx, wy) = (b.x - v.x, b.y - v.y);
    if (ux == T::zero() && uy == T::zero()) || (wx == T::zero() && wy == T::zero()) {
        return T::zero();
    }
    let cross = ux * wy - uy * wx;
    let dot = ux * wx + uy * wy;
    cross.abs().atan2(dot)
}

/// Relational feature over an arbitrary number of keypoints.
pub fn relational_feature_n<T: Real>(points: &[Point<T>], distance_scale: T) -> Vec<T> {
    let n = points.len();
    let mut out = Vec::with_capacity(relational_len(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push(points[i].dist(points[j]) / distance_scale);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(orientation(points[i], points[j]));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                out.push(inner_angle(a, b, c));
                out.push(inner_angle(b, a, c));
                out.push(inner_angle(c, a, b));
            }
        }
    }
    out
}

/// 1274-D configuration feature. With `normalize`, distances are divided by
/// the torso length (left unscaled if the torso is degenerate).
pub fn relational_feature<T: Real>(s: &Skeleton<T>, normalize: bool) -> Vec<T> {
    let scale = if normalize {
        let torso = s.torso_length();
        if torso > T::zero() && torso.is_finite() {
            torso
        } else {
            T::one()
        }
    } else {
        T::one()
    };
    relational_feature_n(s.keypoints(), scale)
}

/// Center and side of each part window: limb midpoints (side 1.5x limb
/// length), then the head keypoint (side 1.5x head-neck length). Sides are
/// clamped to `[16, 96]` px.
pub fn part_windows<T: Real>(s: &Skeleton<T>) -> [(Point<T>, T); NUM_PARTS] {
    let (lo, hi) = (T::lit(16.0), T::lit(96.0));
    let side = |len: T| (len * T::lit(1.5)).max(lo).min(hi);
    let mut out = [(Point::new(T::zero(), T::zero()), T::zero()); NUM_PARTS];
    for (l, &(a, b)) in LIMBS.iter().enumerate() {
        let (pa, pb) = (s.get(a), s.get(b));
        out[l] = (pa.midpoint(pb), side(pa.dist(pb)));
    }
    let head_len = s.get(Joint::Head).dist(s.get(Joint::Neck));
    out[NUM_PARTS - 1] = (s.get(Joint::Head), side(head_len));
    out
}

/// Per-part HOG descriptors, concatenated in [`part_windows`] order.
pub fn appearance_feature<T: Real>(
    s: &Skeleton<T>,
    image: &GrayRaster<T>,
    cfg: &HogConfig,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(NUM_PARTS * cfg.descriptor_len());
    for (center, side) in part_windows(s) {
        let patch = image.resample_window(center.x, center.y, side, cfg.window.0, cfg.window.1)?;
        out.extend(hog_patch(&patch, cfg));
    }
    Ok(out)
}

/// Full PR feature. Appearance is present iff an image is supplied.
pub fn pr_feature<T: Real>(
    s: &Skeleton<T>,
    image: Option<&GrayRaster<T>>,
    hog: Option<&HogConfig>,
    normalize: bool,
) -> Result<PrFeature<T>> {
    let config = relational_feature(s, normalize);
    let appearance = match (image, hog) {
        (None, _) => None,
        (Some(img), Some(cfg)) => Some(appearance_feature(s, img, cfg)?),
        (Some(_), None) => {
            return Err(Error::Config("an image requires a HOG configuration".into()))
        }
    };
    Ok(PrFeature { config, appearance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::upright;

    #[test]
    fn dimension_is_1274() {
        assert_eq!(CONFIG_DIM, 1274);
        assert_eq!(NUM_PAIRS, 91);
        assert_eq!(NUM_TRIPLE_ANGLES, 1092);
        let f = relational_feature(&upright::<f64>(), false);
        assert_eq!(f.len(), 1274);
    }

    #[test]
    fn three_keypoint_variant() {
        assert_eq!(relational_len(3), 9);
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(0.0, 4.0),
        ];
        let f = relational_feature_n(&pts, 1.0f64);
        assert_eq!(f.len(), 9);
        assert_eq!(&f[..3], &[3.0, 4.0, 5.0]);
        assert_eq!(f[3], 0.0);
        assert!((f[4] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        // angles of the 3-4-5 triangle sum to pi
        let s: f64 = f[6..].iter().sum();
        assert!((s - std::f64::consts::PI).abs() < 1e-12);
        assert!((f[6] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_geometry_is_total() {
        let pts = [Point::new(1.0f64, 1.0); 4];
        let f = relational_feature_n(&pts, 1.0);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn orientation_range_excludes_minus_pi() {
        let a = Point::new(0.0f64, -0.0);
        let b = Point::new(-1.0, -0.0);
        assert_eq!(orientation(a, b), std::f64::consts::PI);
    }

    #[test]
    fn translation_gives_same_vector() {
        let s = upright::<f64>();
        let a = relational_feature(&s, false);
        let b = relational_feature(&s.translated(5.0, 7.0), false);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn normalized_distances_divide_by_torso() {
        let s = upright::<f64>();
        let raw = relational_feature(&s, false);
        let norm = relational_feature(&s, true);
        let torso = s.torso_length();
        for i in 0..NUM_PAIRS {
            assert!((raw[i] / torso - norm[i]).abs() < 1e-12);
        }
        assert_eq!(raw[NUM_PAIRS..], norm[NUM_PAIRS..]);
    }

    #[test]
    fn configuration_only_feature() {
        let f = pr_feature(&upright::<f32>(), None, None, true).unwrap();
        assert!(f.appearance.is_none());
        assert_eq!(f.combined_dim(), 1274);
    }

    #[test]
    fn appearance_feature_dimension() {
        let img = GrayRaster::<f64>::from_fn(240, 300, |x, y| ((x / 7 + y / 5) % 2) as f64);
        let cfg = HogConfig::default();
        let f = pr_feature(&upright(), Some(&img), Some(&cfg), true).unwrap();
        assert_eq!(f.combined_dim(), 1274 + 14 * 36);
        assert_eq!(f.combined_dim(), 1778);
    }

    #[test]
    fn appearance_ignores_brightness_offset() {
        let a = GrayRaster::<f64>::from_fn(240, 300, |x, y| ((x * 3 + y * 7) % 17) as f64 / 40.0);
        let b = GrayRaster::<f64>::from_fn(240, 300, |x, y| a.at(x, y) + 0.25);
        let cfg = HogConfig::default();
        let s = upright();
        let fa = pr_feature(&s, Some(&a), Some(&cfg), true).unwrap();
        let fb = pr_feature(&s, Some(&b), Some(&cfg), true).unwrap();
        for (x, y) in fa.appearance.unwrap().iter().zip(fb.appearance.unwrap().iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn image_without_hog_config_is_an_error() {
        let img = GrayRaster::<f64>::from_fn(240, 300, |_, _| 0.0);
        assert!(pr_feature(&upright(), Some(&img), None, true).is_err());
    }
}
