//! Correct-pose-selection SVM.
//!
//! A linear SVM over PR features, trained by dual coordinate descent on the
//! L2-regularized hinge loss. The bias is folded into the weight vector by
//! appending a constant `1` to every (standardized) feature, so the solver
//! minimizes `0.5 * (|w|^2 + b^2) + C * sum(max(0, 1 - y (w.x + b)))`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PrFeature;
use crate::model::{CandidatePose, Point, Skeleton, LIMBS, NUM_JOINTS};
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    #[inline]
    pub fn sign<T: Real>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSet<T> {
    pub samples: Vec<(Vec<T>, Label)>,
}

impl<T: Real> TrainSet<T> {
    pub fn new() -> Self {
        TrainSet {
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Vec<T>, y: Label) {
        self.samples.push((x, y));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, y: Label) -> usize {
        self.samples.iter().filter(|(_, l)| *l == y).count()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|(x, _)| x.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Regularization strength `C > 0`.
    pub reg: f64,
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Epoch cap; `None` means `10 * |train set|`.
    pub max_iter: Option<usize>,
    /// Per-dimension standardization using training-set statistics.
    pub standardize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            reg: 1.0,
            tol: 1e-4,
            max_iter: None,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel<T> {
    /// Weights over standardized features.
    pub weights: Vec<T>,
    pub bias: T,
    pub reg: T,
    pub feature_dim: usize,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> SvmModel<T> {
    pub fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `w . standardize(x) + b`.
    pub fn decision(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[T]) -> T {
        let mut acc = self.bias;
        for i in 0..self.feature_dim {
            acc = acc + self.weights[i] * (x[i] - self.mean[i]) / self.scale[i];
        }
        acc
    }

    pub fn predict(&self, x: &[T]) -> Result<Label> {
        Ok(if self.decision(x)? >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<T> {
    /// Primal objective at the current iterate.
    pub primal: T,
    /// Dual objective (minimization form, `0.5 |w|^2 - sum(alpha)`).
    pub dual: T,
    /// Best primal objective seen so far; this iterate is what gets returned.
    pub best_primal: T,
    pub gap: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochStats<T>>,
    pub converged: bool,
}

impl<T: Real> TrainReport<T> {
    pub fn final_objective(&self) -> T {
        self.epochs.last().map_or(T::nan(), |e| e.best_primal)
    }
}

fn standardization<T: Real>(ts: &TrainSet<T>, dim: usize, on: bool) -> (Vec<T>, Vec<T>) {
    if !on {
        return (vec![T::zero(); dim], vec![T::one(); dim]);
    }
    let n = T::from_usize_lossy(ts.len());
    let mut mean = vec![T::zero(); dim];
    for (x, _) in &ts.samples {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); dim];
    for (x, _) in &ts.samples {
        for i in 0..dim {
            let d = x[i] - mean[i];
            var[i] = var[i] + d * d;
        }
    }
    let tiny = T::lit(1e-12);
    let scale = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > tiny {
                s
            } else {
                T::one()
            }
        })
        .collect();
    (mean, scale)
}

/// Trains the linear SVM. Deterministic for a fixed sample order.
pub fn train<T: Real>(ts: &TrainSet<T>, params: &SvmParams) -> Result<(SvmModel<T>, TrainReport<T>)> {
    if !(params.reg > 0.0) || !(params.tol > 0.0) {
        return Err(Error::Config("svm reg and tol must be positive".into()));
    }
    if ts.count(Label::Positive) == 0 || ts.count(Label::Negative) == 0 {
        return Err(Error::DegenerateTrainingSet("needs both labels"));
    }
    let dim = ts.dim().unwrap_or(0);
    if dim == 0 {
        return Err(Error::DegenerateTrainingSet("zero-dimensional features"));
    }
    for (x, _) in &ts.samples {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
    }
    let (mean, scale) = standardization(ts, dim, params.standardize);

    // Augmented, standardized design matrix, row-major with a trailing 1.
    let aug = dim + 1;
    let n = ts.len();
    let mut xs = Vec::with_capacity(n * aug);
    let mut ys = Vec::with_capacity(n);
    for (x, y) in &ts.samples {
        for i in 0..dim {
            xs.push((x[i] - mean[i]) / scale[i]);
        }
        xs.push(T::one());
        ys.push(y.sign::<T>());
    }
    let row = |i: usize| &xs[i * aug..(i + 1) * aug];
    let qdiag: Vec<T> = (0..n).map(|i| dot(row(i), row(i))).collect();

    let c = T::lit(params.reg);
    let tol = T::lit(params.tol);
    let max_epochs = params.max_iter.unwrap_or(10 * n).max(1);
    let mut alpha = vec![T::zero(); n];
    let mut w = vec![T::zero(); aug];
    let mut best_w = w.clone();
    let mut best_primal = T::infinity();
    let mut epochs = Vec::new();
    let mut converged = false;

    for _ in 0..max_epochs {
        for i in 0..n {
            let xi = row(i);
            let g = ys[i] * dot(&w, xi) - T::one();
            let pg = if alpha[i] == T::zero() {
                g.min(T::zero())
            } else if alpha[i] == c {
                g.max(T::zero())
            } else {
                g
            };
            if pg != T::zero() {
                let old = alpha[i];
                alpha[i] = (old - g / qdiag[i]).max(T::zero()).min(c);
                let step = (alpha[i] - old) * ys[i];
                for (wk, &xk) in w.iter_mut().zip(xi) {
                    *wk = *wk + step * xk;
                }
            }
        }

        let half_wsq = T::lit(0.5) * dot(&w, &w);
        let hinge: T = (0..n)
            .map(|i| (T::one() - ys[i] * dot(&w, row(i))).max(T::zero()))
            .sum();
        let primal = half_wsq + c * hinge;
        let dual = half_wsq - alpha.iter().copied().sum::<T>();
        if primal < best_primal {
            best_primal = primal;
            best_w.copy_from_slice(&w);
        }
        let gap = best_primal + dual;
        epochs.push(EpochStats {
            primal,
            dual,
            best_primal,
            gap,
        });
        if gap <= tol * best_primal.abs().max(T::one()) {
            converged = true;
            break;
        }
    }

    let bias = best_w[dim];
    best_w.truncate(dim);
    Ok((
        SvmModel {
            weights: best_w,
            bias,
            reg: c,
            feature_dim: dim,
            mean,
            scale,
        },
        TrainReport { epochs, converged },
    ))
}

/// Primal objective of `model` on `ts` in the model's standardized space.
pub fn objective<T: Real>(model: &SvmModel<T>, ts: &TrainSet<T>) -> Result<T> {
    let mut hinge = T::zero();
    for (x, y) in &ts.samples {
        hinge = hinge + (T::one() - y.sign::<T>() * model.decision(x)?).max(T::zero());
    }
    let wsq = dot(&model.weights, &model.weights) + model.bias * model.bias;
    Ok(T::lit(0.5) * wsq + model.reg * hinge)
}

/// Jittered copies of an annotation that stay PCP-correct at `eps`.
///
/// A joint shared by several limbs is displaced once, uniformly within a
/// disk whose radius is `eps` times the shortest incident limb, so every
/// limb satisfies the PCP criterion. Joints touching a zero-length limb stay
/// put.
pub fn synthesize_positives<T: Real>(
    annotation: &Skeleton<T>,
    eps: f64,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<Skeleton<T>>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("eps must be in (0, 1], got {eps}")));
    }
    if n == 0 {
        return Err(Error::Config("need at least one positive".into()));
    }
    let mut radius = [f64::INFINITY; NUM_JOINTS];
    for (l, &(a, b)) in LIMBS.iter().enumerate() {
        let len = annotation.limb_length(l).as_f64();
        for j in [a.index(), b.index()] {
            radius[j] = radius[j].min(eps * len);
        }
    }
    // keep the sampled point strictly inside the disk after rounding
    let shrink = 1.0 - 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut kp = *annotation.keypoints();
        for (j, p) in kp.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            if radius[j] > 0.0 && radius[j].is_finite() {
                let r = radius[j] * shrink * u.sqrt();
                *p = Point::new(p.x + T::lit(r * theta.cos()), p.y + T::lit(r * theta.sin()));
            }
        }
        out.push(Skeleton::new(kp)?);
    }
    Ok(out)
}

/// Every detection on a person-free background image is a false positive.
pub fn mine_negatives<T: Real>(
    background_candidates: &[CandidatePose<T>],
    backgrounds: &[String],
) -> Result<Vec<Skeleton<T>>> {
    let bg: HashSet<&str> = backgrounds.iter().map(String::as_str).collect();
    background_candidates
        .iter()
        .map(|c| {
            if bg.contains(c.image_id.as_str()) {
                Ok(c.skeleton.clone())
            } else {
                Err(Error::NonBackgroundSource(c.image_id.clone()))
            }
        })
        .collect()
}

/// Index of the highest-scoring candidate whose decision value strictly
/// exceeds `margin`. Score ties go to the larger decision value, then to the
/// earlier candidate.
pub fn select_index<T: Real>(
    model: &SvmModel<T>,
    candidates: &[(CandidatePose<T>, PrFeature<T>)],
    margin: T,
) -> Result<Option<usize>> {
    let mut best: Option<(usize, T, T)> = None;
    for (i, (cand, feat)) in candidates.iter().enumerate() {
        let x = feat.combined();
        let d = model.decision(&x)?;
        if !(d > margin) {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, s, bd)) => cand.score > s || (cand.score == s && d > bd),
        };
        if better {
            best = Some((i, cand.score, d));
        }
    }
    Ok(best.map(|(i, _, _)| i))
}

pub fn select<'a, T: Real>(
    model: &SvmModel<T>,
    candidates: &'a [(CandidatePose<T>, PrFeature<T>)],
    margin: T,
) -> Result<Option<&'a CandidatePose<T>>> {
    Ok(select_index(model, candidates, margin)?.map(|i| &candidates[i].0))
}
