//! Dirichlet-process-mixture clustering of PR features and Bayes-factor
//! outlier detection.

pub mod gibbs;
pub mod nig;
pub mod outliers;
pub mod partition;
pub mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use gibbs::{crp_log_prior, gibbs_run, log_likelihood, log_posterior, GibbsRun, GibbsSampler};
pub use nig::{cluster_log_marginal, log_marginal_of, NigBase, SuffStats};
pub use outliers::{
    detect_outliers_with, log_bayes_factor, merge_set, normalize_scores, small_clusters, MergeVerdict,
    MergedPartition, OutlierReport, MAX_MERGE_CLUSTERS,
};
pub use partition::Partition;
pub use pca::{project, Projection};

use crate::error::{Error, Result};
use crate::features::PrFeature;
use crate::model::CandidatePose;
use crate::scalar::Real;

/// Source of the Normal-Inverse-Gamma hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasePrior {
    Fixed { mu0: f64, kappa0: f64, a0: f64, b0: f64 },
    /// `mu0` and `b0` from the pooled mean and variance of the features.
    DataScaled { kappa0: f64, a0: f64 },
}

impl BasePrior {
    pub fn resolve<T: Real, V: AsRef<[T]>>(&self, features: &[V]) -> Result<NigBase<T>> {
        match *self {
            BasePrior::Fixed { mu0, kappa0, a0, b0 } => NigBase::new(T::lit(mu0), T::lit(kappa0), T::lit(a0), T::lit(b0)),
            BasePrior::DataScaled { kappa0, a0 } => NigBase::data_scaled(features, T::lit(kappa0), T::lit(a0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmmConfig {
    /// CRP concentration used while sampling.
    pub gamma: f64,
    /// Prior mass parameter of the outlier bound.
    pub alpha: f64,
    pub base: BasePrior,
    pub gibbs_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub pca_dim: Option<usize>,
    pub small_cluster_max: usize,
}

impl Default for DpmmConfig {
    fn default() -> Self {
        DpmmConfig {
            gamma: 1.0,
            alpha: 1.0 / 3.0,
            base: BasePrior::DataScaled { kappa0: 0.1, a0: 1.0 },
            gibbs_iters: 2000,
            burn_in: 500,
            seed: 0,
            pca_dim: Some(8),
            small_cluster_max: 3,
        }
    }
}

impl DpmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.burn_in >= self.gibbs_iters {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below gibbs_iters ({})",
                self.burn_in, self.gibbs_iters
            )));
        }
        if self.small_cluster_max == 0 {
            return Err(Error::Config("small_cluster_max must be at least 1".into()));
        }
        if self.pca_dim == Some(0) {
            return Err(Error::Config("pca_dim must be at least 1".into()));
        }
        if let BasePrior::Fixed { mu0, kappa0, a0, b0 } = self.base {
            NigBase::new(mu0, kappa0, a0, b0)?;
        }
        Ok(())
    }
}

/// MAP partition of a collapsed Gibbs run.
pub fn gibbs_cluster<T: Real, V: AsRef<[T]>>(features: &[V], cfg: &DpmmConfig) -> Result<Partition> {
    cfg.validate()?;
    if features.len() < 2 {
        return Err(Error::TooFewFeatures { got: features.len(), need: 2 });
    }
    let base = cfg.base.resolve(features)?;
    Ok(gibbs_run(features, base, T::lit(cfg.gamma), cfg.gibbs_iters, cfg.burn_in, cfg.seed).map)
}

/// Outlier rule with the base and `alpha` taken from `cfg`.
pub fn detect_outliers<T: Real, V: AsRef<[T]>>(
    features: &[V],
    scores: &[T],
    p: &Partition,
    cfg: &DpmmConfig,
) -> Result<OutlierReport> {
    cfg.validate()?;
    if scores.len() != features.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: scores.len() });
    }
    if p.len() != features.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: p.len() });
    }
    let base = cfg.base.resolve(features)?;
    Ok(detect_outliers_with(features, scores, p, &base, T::lit(cfg.alpha), cfg.small_cluster_max))
}

/// Poses recovered by clustering, plus the intermediate results.
#[derive(Debug, Clone)]
pub struct Recovery<T> {
    pub poses: Vec<CandidatePose<T>>,
    pub partition: Partition,
    pub report: OutlierReport,
}

/// Projects, clusters and filters the candidates of one action class. The
/// survivors are members of clusters not flagged as outliers if the rule
/// accepted `z_I`, otherwise members of large clusters only. One pose per
/// image (the highest scoring) is returned, in first-seen image order.
pub fn recover_poses<T: Real>(
    candidates: &[(CandidatePose<T>, PrFeature<T>)],
    cfg: &DpmmConfig,
) -> Result<Option<Recovery<T>>> {
    cfg.validate()?;
    if candidates.len() < 4 {
        return Ok(None);
    }
    let raw: Vec<Vec<T>> = candidates.iter().map(|(_, f)| f.combined()).collect();
    let dim = raw[0].len();
    if let Some(f) = raw.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: f.len() });
    }
    let feats = match cfg.pca_dim {
        Some(d) => project(&raw, d.min(dim).min(raw.len()))?.0,
        None => raw,
    };
    let partition = gibbs_cluster(&feats, cfg)?;
    let scores: Vec<T> = candidates.iter().map(|(c, _)| c.score).collect();
    let report = detect_outliers(&feats, &scores, &partition, cfg)?;

    let sizes = partition.sizes();
    let keep = |i: usize| -> bool {
        if report.accepted {
            report.outlier_indices.binary_search(&i).is_err()
        } else {
            sizes[partition.cluster_of(i)] > cfg.small_cluster_max
        }
    };
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (i, (c, _)) in candidates.iter().enumerate() {
        if !keep(i) {
            continue;
        }
        match best.get(c.image_id.as_str()) {
            None => {
                order.push(c.image_id.as_str());
                best.insert(c.image_id.as_str(), i);
            }
            Some(&j) if c.score > candidates[j].0.score => {
                best.insert(c.image_id.as_str(), i);
            }
            _ => {}
        }
    }
    let poses = order.iter().map(|id| candidates[best[id]].0.clone()).collect();
    Ok(Some(Recovery { poses, partition, report }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_groups(seed: u64, n: usize, extra: &[f64]) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut f = Vec::new();
        for c in [-10.0, 10.0] {
            for _ in 0..n {
                f.push(vec![c + noise.sample(&mut rng)]);
            }
        }
        f.extend(extra.iter().map(|&x| vec![x + noise.sample(&mut rng)]));
        f
    }

    fn quick() -> DpmmConfig {
        DpmmConfig {
            gibbs_iters: 200,
            burn_in: 50,
            pca_dim: None,
            ..DpmmConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        DpmmConfig::default().validate().unwrap();
        assert!(DpmmConfig { burn_in: 2000, ..DpmmConfig::default() }.validate().is_err());
        assert!(DpmmConfig { small_cluster_max: 0, ..DpmmConfig::default() }.validate().is_err());
    }

    #[test]
    fn recovers_two_groups() {
        let f = two_groups(3, 20, &[]);
        let p = gibbs_cluster(&f, &quick()).unwrap();
        assert_eq!(p.n_clusters(), 2);
        assert_eq!(p.sizes(), vec![20, 20]);
    }

    #[test]
    fn deterministic_under_seed() {
        let f = two_groups(4, 15, &[3.0]);
        let cfg = quick();
        assert_eq!(gibbs_cluster(&f, &cfg).unwrap(), gibbs_cluster(&f, &cfg).unwrap());
    }

    #[test]
    fn planted_outliers_flagged() {
        let f = two_groups(5, 50, &[200.0, 200.0]);
        let cfg = quick();
        let p = gibbs_cluster(&f, &cfg).unwrap();
        let r = detect_outliers(&f, &vec![1.0; f.len()], &p, &cfg).unwrap();
        assert!(r.accepted);
        assert_eq!(r.outlier_indices, vec![100, 101]);
    }

    #[test]
    fn smaller_alpha_flags_subset() {
        let f = two_groups(6, 30, &[14.0, 30.0, 31.0]);
        let scores: Vec<f64> = (0..f.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let cfg = quick();
        let p = gibbs_cluster(&f, &cfg).unwrap();
        let mut prev: Option<Vec<usize>> = None;
        for alpha in [1.0, 1.0 / 3.0, 0.1, 1e-3, 1e-8] {
            let r = detect_outliers(&f, &scores, &p, &DpmmConfig { alpha, ..cfg.clone() }).unwrap();
            if let Some(prev) = &prev {
                assert!(r.outlier_indices.iter().all(|i| prev.contains(i)));
            }
            prev = Some(r.outlier_indices);
        }
    }

    #[test]
    fn bayes_factor_antisymmetric() {
        let f = two_groups(7, 10, &[40.0]);
        let a = Partition::from_labels(&(0..21).map(|i| if i < 10 { 0 } else if i < 20 { 1 } else { 2 }).collect::<Vec<_>>());
        let b = Partition::from_labels(&(0..21).map(|i| usize::from(i >= 10)).collect::<Vec<_>>());
        let base = NigBase::new(0.0, 0.1, 1.0, 100.0).unwrap();
        let ab = log_bayes_factor(&f, &a, &b, &base);
        let ba = log_bayes_factor(&f, &b, &a, &base);
        assert!((ab + ba).abs() < 1e-10);
    }
}
