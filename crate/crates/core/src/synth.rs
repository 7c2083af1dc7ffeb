//! Synthetic action-pose corpus: per-action skeleton templates, jittered
//! poses, and per-joint heatmaps with distractor peaks, for end-to-end runs
//! without an external estimator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::candidates::Heatmap;
use crate::error::{Error, Result};
use crate::io::ConfigMap;
use crate::model::{ActionLabel, Annotated, DatasetSplit, Joint, Point, Skeleton, WeakImage, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of action classes, at most 8.
    pub n_actions: usize,
    pub poses_per_action: usize,
    /// Per-joint Gaussian jitter in pixels.
    pub base_noise: f64,
    /// Probability that a person image carries a distractor peak on one of
    /// its joint maps.
    pub outlier_rate: f64,
    pub seed: u64,
    /// Share of each action's poses that are fully annotated.
    pub fs_fraction: f64,
    /// Share of weakly labeled poses drawn from the action's variant
    /// template, which never appears among the annotations.
    pub variant_rate: f64,
    /// Person-free images used for negative mining.
    pub n_backgrounds: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    /// Pixels per heatmap cell.
    pub stride: usize,
    /// Peak width in cells.
    pub peak_sigma: f64,
    /// Per-limb angular jitter in degrees.
    pub angle_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_actions: 8,
            poses_per_action: 50,
            base_noise: 2.0,
            outlier_rate: 0.1,
            seed: 0,
            fs_fraction: 0.5,
            variant_rate: 0.2,
            n_backgrounds: 40,
            image_size: 320,
            stride: 4,
            peak_sigma: 1.2,
            angle_noise: 6.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        rate("outlier_rate", self.outlier_rate)?;
        rate("fs_fraction", self.fs_fraction)?;
        rate("variant_rate", self.variant_rate)?;
        if self.n_actions == 0 || self.n_actions > ActionLabel::ALL.len() {
            return Err(Error::Config(format!("n_actions must lie in 1..=8, got {}", self.n_actions)));
        }
        if !(self.base_noise >= 0.0 && self.angle_noise >= 0.0 && self.peak_sigma > 0.0) {
            return Err(Error::Config("noise levels must be non-negative and peak_sigma positive".into()));
        }
        if self.stride == 0 || self.image_size < 8 * self.stride {
            return Err(Error::Config("image_size must span at least 8 heatmap cells".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, c: &mut ConfigMap) -> Result<()> {
        c.take_into("synth.n_actions", &mut self.n_actions)?;
        c.take_into("synth.poses_per_action", &mut self.poses_per_action)?;
        c.take_into("synth.base_noise", &mut self.base_noise)?;
        c.take_into("synth.outlier_rate", &mut self.outlier_rate)?;
        c.take_into("synth.fs_fraction", &mut self.fs_fraction)?;
        c.take_into("synth.variant_rate", &mut self.variant_rate)?;
        c.take_into("synth.n_backgrounds", &mut self.n_backgrounds)?;
        c.take_into("synth.image_size", &mut self.image_size)?;
        c.take_into("synth.stride", &mut self.stride)?;
        c.take_into("synth.peak_sigma", &mut self.peak_sigma)?;
        c.take_into("synth.angle_noise", &mut self.angle_noise)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub split: DatasetSplit<f64>,
    /// True pose of every FS and WS image; for evaluation only.
    pub ground_truth: BTreeMap<String, Skeleton<f64>>,
    /// Fourteen heatmaps per WS and background image.
    pub heatmaps: BTreeMap<String, Vec<Heatmap<f64>>>,
}

/// Limb directions in degrees from straight down; positive turns away from
/// the body midline. Order: upper arm, forearm, thigh, shin for the right
/// side, then the same for the left, then the torso lean.
type Angles = [f64; 9];

const HEAD: f64 = 24.0;
const TORSO: f64 = 60.0;
const SHOULDER_HALF: f64 = 20.0;
const HIP_HALF: f64 = 13.0;
const UPPER_ARM: f64 = 34.0;
const FOREARM: f64 = 30.0;
const THIGH: f64 = 46.0;
const SHIN: f64 = 44.0;

fn template(a: ActionLabel) -> Angles {
    match a {
        ActionLabel::Athletics => [40.0, -60.0, 30.0, -10.0, 35.0, -25.0, -20.0, -80.0, 10.0],
        ActionLabel::Badminton => [160.0, 170.0, 30.0, 10.0, 15.0, 10.0, 15.0, 10.0, -5.0],
        ActionLabel::Baseball => [80.0, 100.0, -70.0, -100.0, 25.0, 25.0, 25.0, 25.0, 15.0],
        ActionLabel::Gymnastics => [170.0, 175.0, 170.0, 175.0, 80.0, 85.0, 80.0, 85.0, 0.0],
        ActionLabel::Soccer => [60.0, 70.0, 60.0, 70.0, 70.0, 50.0, 5.0, 5.0, -8.0],
        ActionLabel::Tennis => [90.0, 130.0, 25.0, -20.0, 20.0, 0.0, 20.0, 0.0, 5.0],
        ActionLabel::Volleyball => [-25.0, -15.0, -25.0, -15.0, 40.0, -10.0, 40.0, -10.0, 0.0],
        ActionLabel::General => [10.0, 5.0, 10.0, 5.0, 5.0, 0.0, 5.0, 0.0, 0.0],
    }
}

/// Mirror image of the template with the arms lifted further.
fn variant(a: ActionLabel) -> Angles {
    let t = template(a);
    [
        t[4] + 50.0,
        t[5] + 60.0,
        t[2],
        t[3],
        t[0].clamp(-30.0, 90.0),
        t[1].clamp(-30.0, 90.0),
        t[6] + 30.0,
        t[7] + 20.0,
        -t[8],
    ]
}

fn dir(deg: f64, side: f64) -> (f64, f64) {
    let r = deg.to_radians();
    (side * r.sin(), r.cos())
}

/// Unit-scale skeleton with the neck at the origin, image axes (y down).
fn skeleton_from(angles: &Angles) -> [Point<f64>; NUM_JOINTS] {
    skeleton_scaled(angles, &[1.0; 8])
}

/// As [`skeleton_from`] with per-limb length factors: head, torso, upper
/// arm, forearm, thigh, shin, shoulder and hip half-widths.
fn skeleton_scaled(angles: &Angles, f: &[f64; 8]) -> [Point<f64>; NUM_JOINTS] {
    let mut kp = [Point::new(0.0, 0.0); NUM_JOINTS];
    let lean = angles[8].to_radians();
    let (ls, lc) = lean.sin_cos();
    let neck = Point::new(0.0, 0.0);
    let pelvis = Point::new(f[1] * TORSO * ls, f[1] * TORSO * lc);
    kp[Joint::Neck.index()] = neck;
    kp[Joint::Head.index()] = Point::new(-f[0] * HEAD * ls, -f[0] * HEAD * lc);
    let put = |kp: &mut [Point<f64>; NUM_JOINTS], j: Joint, from: Point<f64>, len: f64, d: (f64, f64)| {
        let p = Point::new(from.x + len * d.0, from.y + len * d.1);
        kp[j.index()] = p;
        p
    };
    // right side is image left (-x)
    for (side, sh, el, wr, hip, kn, an, off) in [
        (-1.0, Joint::RightShoulder, Joint::RightElbow, Joint::RightWrist, Joint::RightHip, Joint::RightKnee, Joint::RightAnkle, 0),
        (1.0, Joint::LeftShoulder, Joint::LeftElbow, Joint::LeftWrist, Joint::LeftHip, Joint::LeftKnee, Joint::LeftAnkle, 4),
    ] {
        let s = put(&mut kp, sh, neck, f[6] * SHOULDER_HALF, (side * lc, -side * ls));
        let e = put(&mut kp, el, s, f[2] * UPPER_ARM, dir(angles[off], side));
        put(&mut kp, wr, e, f[3] * FOREARM, dir(angles[off + 1], side));
        let h = put(&mut kp, hip, pelvis, f[7] * HIP_HALF, (side * lc, -side * ls));
        let k = put(&mut kp, kn, h, f[4] * THIGH, dir(angles[off + 2], side));
        put(&mut kp, an, k, f[5] * SHIN, dir(angles[off + 3], side));
    }
    kp
}

/// Jittered, scaled and translated instance of `angles` inside the image.
fn sample_pose(angles: &Angles, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Skeleton<f64> {
    let angle_noise = Normal::new(0.0, cfg.angle_noise).expect("valid sigma");
    let mut a = *angles;
    for v in &mut a {
        *v += angle_noise.sample(rng);
    }
    place(skeleton_from(&a), cfg, rng)
}

/// Scales by a random factor, adds joint noise and translates into the
/// image.
fn place(unit: [Point<f64>; NUM_JOINTS], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Skeleton<f64> {
    let joint_noise = Normal::new(0.0, cfg.base_noise).expect("valid sigma");
    let scale = rng.random_range(0.8..1.2);
    let mut kp = unit.map(|p| {
        Point::new(
            p.x * scale + joint_noise.sample(rng),
            p.y * scale + joint_noise.sample(rng),
        )
    });
    let (lo, hi) = Skeleton::new_unchecked(kp).bbox();
    let margin = 2.0 * cfg.stride as f64;
    let size = cfg.image_size as f64;
    let room_x = (size - 2.0 * margin - (hi.x - lo.x)).max(0.0);
    let room_y = (size - 2.0 * margin - (hi.y - lo.y)).max(0.0);
    let dx = margin - lo.x + rng.random_range(0.0..=room_x);
    let dy = margin - lo.y + rng.random_range(0.0..=room_y);
    for p in &mut kp {
        *p = Point::new(p.x + dx, p.y + dy);
    }
    Skeleton::new_unchecked(kp)
}

fn render(joint: Joint, bumps: &[(Point<f64>, f64)], cfg: &SynthConfig) -> Result<Heatmap<f64>> {
    let cells = cfg.image_size / cfg.stride;
    let s = cfg.stride as f64;
    let two_var = 2.0 * cfg.peak_sigma * cfg.peak_sigma;
    let mut grid = vec![0.0f64; cells * cells];
    for (y, row) in grid.chunks_mut(cells).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            for &(p, amp) in bumps {
                let (dx, dy) = (x as f64 - p.x / s, y as f64 - p.y / s);
                *v = v.max(amp * (-(dx * dx + dy * dy) / two_var).exp());
            }
        }
    }
    Ok(Heatmap::new(joint, cells, cells, grid)?.with_geometry(s, (0.0, 0.0)))
}

fn random_point(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Point<f64> {
    let m = 2.0 * cfg.stride as f64;
    let hi = cfg.image_size as f64 - m;
    Point::new(rng.random_range(m..hi), rng.random_range(m..hi))
}

fn person_heatmaps(s: &Skeleton<f64>, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Heatmap<f64>>> {
    let distracted = (rng.random::<f64>() < cfg.outlier_rate).then(|| rng.random_range(0..NUM_JOINTS));
    Joint::ALL
        .iter()
        .map(|&j| {
            let mut bumps = vec![(s.get(j), rng.random_range(0.6..1.0))];
            if distracted == Some(j.index()) {
                bumps.push((random_point(cfg, rng), rng.random_range(0.3..1.0)));
            }
            render(j, &bumps, cfg)
        })
        .collect()
}

/// A person-free image still draws responses from an estimator, often in
/// a loosely body-like arrangement: a template with strongly perturbed
/// angles and limb lengths, some joints scattered at random, and a second
/// random response on some maps.
fn background_heatmaps(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Heatmap<f64>>> {
    let wild = Normal::new(0.0, 45.0).expect("valid sigma");
    let mut a = template(ActionLabel::ALL[rng.random_range(0..cfg.n_actions)]);
    for v in &mut a {
        *v += wild.sample(rng);
    }
    let f: [f64; 8] = std::array::from_fn(|_| rng.random_range(0.5..1.6));
    let ghost = place(skeleton_scaled(&a, &f), cfg, rng);
    Joint::ALL
        .iter()
        .map(|&j| {
            let at = if rng.random::<f64>() < 0.3 {
                random_point(cfg, rng)
            } else {
                let (m, hi) = (2.0 * cfg.stride as f64, (cfg.image_size - 2 * cfg.stride) as f64);
                let g = ghost.get(j);
                Point::new(g.x.clamp(m, hi), g.y.clamp(m, hi))
            };
            let mut bumps = vec![(at, rng.random_range(0.3..1.0))];
            if rng.random::<f64>() < 0.5 {
                bumps.push((random_point(cfg, rng), rng.random_range(0.3..1.0)));
            }
            render(j, &bumps, cfg)
        })
        .collect()
}

/// Generates the corpus. Identical configurations give identical corpora.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = DatasetSplit {
        fs: Vec::new(),
        ws: Vec::new(),
        us: Vec::new(),
        backgrounds: Vec::new(),
    };
    let mut ground_truth = BTreeMap::new();
    let mut heatmaps = BTreeMap::new();
    let n_fs = (cfg.poses_per_action as f64 * cfg.fs_fraction).round() as usize;
    for &action in &ActionLabel::ALL[..cfg.n_actions] {
        for k in 0..cfg.poses_per_action {
            let id = format!("{action}_{k:03}");
            if k < n_fs {
                let s = sample_pose(&template(action), cfg, &mut rng);
                split.fs.push(Annotated {
                    image_id: id.clone(),
                    skeleton: s.clone(),
                    action,
                });
                ground_truth.insert(id, s);
            } else {
                let angles = if rng.random::<f64>() < cfg.variant_rate {
                    variant(action)
                } else {
                    template(action)
                };
                let s = sample_pose(&angles, cfg, &mut rng);
                heatmaps.insert(id.clone(), person_heatmaps(&s, cfg, &mut rng)?);
                split.ws.push(WeakImage {
                    image_id: id.clone(),
                    action,
                });
                ground_truth.insert(id, s);
            }
        }
    }
    for k in 0..cfg.n_backgrounds {
        let id = format!("bg_{k:03}");
        heatmaps.insert(id.clone(), background_heatmaps(cfg, &mut rng)?);
        split.backgrounds.push(id);
    }
    Ok(SynthCorpus {
        split,
        ground_truth,
        heatmaps,
    })
}
