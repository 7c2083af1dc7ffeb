//! Candidate poses from per-joint heatmaps.
//!
//! Each heatmap contributes its local maxima above a loose threshold; full
//! candidates are combinations of one maximum per joint, enumerated by a
//! beam search that keeps the best partial assemblies by summed likelihood.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidatePose, Joint, Point, Skeleton, NUM_JOINTS};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    pub joint: Joint,
    pub width: usize,
    pub height: usize,
    /// Row-major likelihoods in `[0, 1]`.
    pub grid: Vec<T>,
    /// Pixels per cell.
    pub stride: T,
    /// Pixel position of cell `(0, 0)`.
    pub origin: (T, T),
}

impl<T: Real> Heatmap<T> {
    pub fn new(joint: Joint, width: usize, height: usize, grid: Vec<T>) -> Result<Self> {
        if grid.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: grid.len(),
            });
        }
        if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one())) {
            return Err(Error::Format(format!("heatmap value {v} outside [0, 1]")));
        }
        Ok(Heatmap {
            joint,
            width,
            height,
            grid,
            stride: T::one(),
            origin: (T::zero(), T::zero()),
        })
    }

    pub fn with_geometry(mut self, stride: T, origin: (T, T)) -> Self {
        self.stride = stride;
        self.origin = origin;
        self
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.grid[y * self.width + x]
    }

    pub fn to_pixels(&self, cx: T, cy: T) -> Point<T> {
        Point::new(self.origin.0 + cx * self.stride, self.origin.1 + cy * self.stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateGenConfig {
    pub threshold: f64,
    pub top_k: usize,
    pub beam: usize,
    /// Suppression radius in cells.
    pub nms_radius: f64,
}

impl Default for CandidateGenConfig {
    fn default() -> Self {
        CandidateGenConfig {
            threshold: 0.1,
            top_k: 3,
            beam: 500,
            nms_radius: 2.0,
        }
    }
}

impl CandidateGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        if self.top_k == 0 || self.beam == 0 {
            return Err(Error::Config("top_k and beam must be at least 1".into()));
        }
        if !(self.nms_radius >= 0.0) {
            return Err(Error::Config("nms_radius must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub position: Point<T>,
    pub value: T,
}

/// Vertex offset of the parabola through `(-1, l), (0, c), (1, r)`.
fn quadratic_offset<T: Real>(l: T, c: T, r: T) -> T {
    let denom = l - c - c + r;
    if denom >= T::zero() {
        return T::zero();
    }
    let half = T::lit(0.5);
    ((l - r) / (denom + denom)).max(-half).min(half)
}

/// Strict 8-neighborhood maxima at or above the threshold, greedily
/// suppressed within `nms_radius` cells, best `top_k` by value, refined to
/// sub-cell precision and mapped to pixels.
pub fn local_maxima<T: Real>(h: &Heatmap<T>, cfg: &CandidateGenConfig) -> Vec<Peak<T>> {
    let thr = T::lit(cfg.threshold);
    let (w, ht) = (h.width as isize, h.height as isize);
    let mut peaks: Vec<(usize, usize, T)> = Vec::new();
    for y in 0..ht {
        for x in 0..w {
            let v = h.at(x as usize, y as usize);
            if v < thr {
                continue;
            }
            let mut strict = true;
            'nb: for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= ht {
                        continue;
                    }
                    if h.at(nx as usize, ny as usize) >= v {
                        strict = false;
                        break 'nb;
                    }
                }
            }
            if strict {
                peaks.push((x as usize, y as usize, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then((a.1, a.0).cmp(&(b.1, b.0))));

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut kept: Vec<(usize, usize, T)> = Vec::new();
    for p in peaks {
        let suppressed = kept.iter().any(|k| {
            let dx = k.0 as f64 - p.0 as f64;
            let dy = k.1 as f64 - p.1 as f64;
            dx * dx + dy * dy <= r2
        });
        if !suppressed {
            kept.push(p);
            if kept.len() == cfg.top_k {
                break;
            }
        }
    }

    kept.into_iter()
        .map(|(x, y, v)| {
            let ox = if x > 0 && x + 1 < h.width {
                quadratic_offset(h.at(x - 1, y), v, h.at(x + 1, y))
            } else {
                T::zero()
            };
            let oy = if y > 0 && y + 1 < h.height {
                quadratic_offset(h.at(x, y - 1), v, h.at(x, y + 1))
            } else {
                T::zero()
            };
            Peak {
                position: h.to_pixels(T::from_usize_lossy(x) + ox, T::from_usize_lossy(y) + oy),
                value: v,
            }
        })
        .collect()
}

/// One choice per slot: the chosen option index and the summed score.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly<T> {
    pub choice: Vec<usize>,
    pub score: T,
}

fn rank<T: Real>(a: &Assembly<T>, b: &Assembly<T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.choice.cmp(&b.choice))
}

/// Beam search over slots in order. Partial assemblies are ranked by summed
/// value (ties by lexicographic choice) and at most `beam` survive each
/// step. Because the score is additive, the result is exactly the top-`beam`
/// of the full product. Any empty slot yields no assemblies.
pub fn beam_assemble<T: Real>(values: &[Vec<T>], beam: usize) -> Vec<Assembly<T>> {
    if values.iter().any(Vec::is_empty) || beam == 0 {
        return Vec::new();
    }
    let mut partial = vec![Assembly {
        choice: Vec::with_capacity(values.len()),
        score: T::zero(),
    }];
    for slot in values {
        let mut next = Vec::with_capacity(partial.len() * slot.len());
        for p in &partial {
            for (i, &v) in slot.iter().enumerate() {
                let mut choice = p.choice.clone();
                choice.push(i);
                next.push(Assembly {
                    choice,
                    score: p.score + v,
                });
            }
        }
        next.sort_by(rank);
        next.truncate(beam);
        partial = next;
    }
    partial
}

/// Candidate poses for one image from one heatmap per joint (any order).
pub fn enumerate_candidates<T: Real>(
    maps: &[Heatmap<T>],
    cfg: &CandidateGenConfig,
    image_id: &str,
    stage: u32,
) -> Result<Vec<CandidatePose<T>>> {
    cfg.validate()?;
    let mut by_joint: [Option<&Heatmap<T>>; NUM_JOINTS] = [None; NUM_JOINTS];
    for m in maps {
        by_joint[m.joint.index()] = Some(m);
    }
    let mut peaks = Vec::with_capacity(NUM_JOINTS);
    for j in Joint::ALL {
        let m = by_joint[j.index()].ok_or(Error::MissingJoint(j.name()))?;
        peaks.push(local_maxima(m, cfg));
    }
    let values: Vec<Vec<T>> = peaks
        .iter()
        .map(|ps| ps.iter().map(|p| p.value).collect())
        .collect();
    beam_assemble(&values, cfg.beam)
        .into_iter()
        .map(|a| {
            let kp: [Point<T>; NUM_JOINTS] = std::array::from_fn(|j| peaks[j][a.choice[j]].position);
            Ok(CandidatePose::new(Skeleton::new(kp)?, a.score, image_id).with_stage(stage))
        })
        .collect()
}

fn near_duplicate<T: Real>(a: &Skeleton<T>, b: &Skeleton<T>, tol: T) -> bool {
    a.keypoints()
        .iter()
        .zip(b.keypoints())
        .all(|(p, q)| p.dist(*q) <= tol)
}

/// Concatenates per-stage lists, dropping candidates of the same image whose
/// joints all lie within 1 px of a higher-scoring one.
pub fn merge_stage_candidates<T: Real>(per_stage: &[Vec<CandidatePose<T>>]) -> Vec<CandidatePose<T>> {
    let all: Vec<&CandidatePose<T>> = per_stage.iter().flatten().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| {
        all[b]
            .score
            .partial_cmp(&all[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let tol = T::one();
    let mut keep = vec![false; all.len()];
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let dup = kept.iter().any(|&k| {
            all[k].image_id == all[i].image_id && near_duplicate(&all[k].skeleton, &all[i].skeleton, tol)
        });
        if !dup {
            keep[i] = true;
            kept.push(i);
        }
    }
    all.into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then(|| c.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(joint: Joint, w: usize, h: usize, centers: &[(f64, f64, f64)], sigma: f64) -> Heatmap<f64> {
        let mut grid = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut v: f64 = 0.0;
                for &(cx, cy, a) in centers {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    v = v.max(a * (-d2 / (2.0 * sigma * sigma)).exp());
                }
                grid[y * w + x] = v;
            }
        }
        Heatmap::new(joint, w, h, grid).unwrap()
    }

    #[test]
    fn single_bump() {
        let h = bump(Joint::Head, 32, 24, &[(12.3, 9.6, 0.9)], 1.5);
        let peaks = local_maxima(&h, &CandidateGenConfig::default());
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].position.x - 12.3).abs() < 0.5);
        assert!((peaks[0].position.y - 9.6).abs() < 0.5);
    }

    #[test]
    fn geometry_maps_cells_to_pixels() {
        let h = bump(Joint::Head, 16, 16, &[(5.0, 7.0, 1.0)], 1.0).with_geometry(4.0, (2.0, -3.0));
        let p = local_maxima(&h, &CandidateGenConfig::default())[0].position;
        assert!((p.x - 22.0).abs() < 1e-9);
        assert!((p.y - 25.0).abs() < 1e-9);
    }

    #[test]
    fn plateau_has_no_strict_maximum() {
        let h = Heatmap::new(Joint::Neck, 10, 10, vec![0.5; 100]).unwrap();
        assert!(local_maxima(&h, &CandidateGenConfig::default()).is_empty());
    }

    #[test]
    fn nms_keeps_the_larger_bump() {
        let cfg = CandidateGenConfig::default();
        // one cell apart: only one can be a strict maximum
        let h = bump(Joint::Neck, 20, 20, &[(8.0, 8.0, 0.9), (9.0, 8.0, 0.7)], 0.4);
        let p = local_maxima(&h, &cfg);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].value, 0.9);
        // two cells apart: two strict maxima, the radius-2 NMS removes one
        let h = bump(Joint::Neck, 20, 20, &[(8.0, 8.0, 0.7), (10.0, 8.0, 0.9)], 0.4);
        let p = local_maxima(&h, &cfg);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].value, 0.9);
        let no_nms = CandidateGenConfig {
            nms_radius: 1.0,
            ..cfg
        };
        assert_eq!(local_maxima(&h, &no_nms).len(), 2);
    }

    #[test]
    fn threshold_and_top_k() {
        let centers = [(3.0, 3.0, 0.9), (10.0, 3.0, 0.5), (3.0, 10.0, 0.3), (10.0, 10.0, 0.05)];
        let h = bump(Joint::Neck, 14, 14, &centers, 0.8);
        let cfg = CandidateGenConfig::default();
        let p = local_maxima(&h, &cfg);
        assert_eq!(p.iter().map(|p| p.value).collect::<Vec<_>>(), vec![0.9, 0.5, 0.3]);
        let top2 = CandidateGenConfig { top_k: 2, ..cfg };
        assert_eq!(local_maxima(&h, &top2).len(), 2);
    }

    fn maps_with(extra: Option<(Joint, f64)>) -> Vec<Heatmap<f64>> {
        Joint::ALL
            .iter()
            .map(|&j| {
                let c = (4.0 + j.index() as f64, 6.0, 0.5 + 0.03 * j.index() as f64);
                match extra {
                    Some((ej, a)) if ej == j => bump(j, 30, 20, &[c, (c.0, 15.0, a)], 1.0),
                    _ => bump(j, 30, 20, &[c], 1.0),
                }
            })
            .collect()
    }

    #[test]
    fn one_maximum_per_joint_gives_one_candidate() {
        let maps = maps_with(None);
        let c = enumerate_candidates(&maps, &CandidateGenConfig::default(), "img", 1).unwrap();
        assert_eq!(c.len(), 1);
        let expected: f64 = (0..14).map(|j| 0.5 + 0.03 * j as f64).sum();
        assert!((c[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn extra_maximum_doubles_candidates() {
        let maps = maps_with(Some((Joint::LeftElbow, 0.3)));
        let c = enumerate_candidates(&maps, &CandidateGenConfig::default(), "img", 2).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c[0].score >= c[1].score);
        assert!(c.iter().all(|c| c.stage == 2));
    }

    #[test]
    fn empty_joint_and_missing_joint() {
        let mut maps = maps_with(None);
        maps[3] = Heatmap::new(maps[3].joint, 30, 20, vec![0.0; 600]).unwrap();
        assert!(enumerate_candidates(&maps, &CandidateGenConfig::default(), "img", 1)
            .unwrap()
            .is_empty());
        maps.remove(3);
        assert!(matches!(
            enumerate_candidates(&maps, &CandidateGenConfig::default(), "img", 1),
            Err(Error::MissingJoint(_))
        ));
    }

    #[test]
    fn beam_caps_output() {
        let values = vec![vec![0.9, 0.5, 0.2]; NUM_JOINTS];
        let out = beam_assemble(&values, 500);
        assert_eq!(out.len(), 500);
        assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(out[0].choice, vec![0; NUM_JOINTS]);
    }

    fn cand(id: &str, dx: f64, score: f64, stage: u32) -> CandidatePose<f64> {
        let s = crate::model::fixtures::upright::<f64>().translated(dx, 0.0);
        CandidatePose::new(s, score, id).with_stage(stage)
    }

    #[test]
    fn stage_merging() {
        let merged = merge_stage_candidates(&[vec![cand("a", 0.0, 0.5, 1)], vec![cand("a", 0.6, 0.8, 2)]]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].stage, 2);
        assert!(merge_stage_candidates::<f64>(&[vec![], vec![]]).is_empty());
        let stages: Vec<Vec<_>> = (1..=3)
            .map(|s| vec![cand("a", 10.0 * s as f64, 0.5, s), cand("a", 100.0 + 10.0 * s as f64, 0.4, s)])
            .collect();
        assert_eq!(merge_stage_candidates(&stages).len(), 6);
        // same geometry on different images is not a duplicate
        assert_eq!(merge_stage_candidates(&[vec![cand("a", 0.0, 0.5, 1), cand("b", 0.0, 0.5, 1)]]).len(), 2);
    }
}
