//! Outlier clusters by Bayes factors against merged partitions.
//!
//! Given an initial partition `z_I`, every partition `z_m` obtained by
//! folding a subset of small clusters into their nearest large cluster is a
//! simpler rival model. `z_I` wins against `z_m` when
//!
//! ```text
//! log K = log p(X|z_I) - log p(X|z_m)
//!       > -nu log(alpha) + sum_{k in m} ln Γ(W_{m,k}) - sum_{k in I} ln Γ(W_{I,k})
//! ```
//!
//! where `nu` is the number of clusters merged away and `W` is the sum of
//! square-rooted min-max normalized detection scores of a cluster's
//! members. Only if `z_I` wins against every rival are the small clusters
//! declared outliers.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::gibbs::log_likelihood;
use super::nig::{log_marginal_of, NigBase};
use super::partition::Partition;
use crate::scalar::{sq_dist, Real};

/// Upper bound on the number of small clusters whose subsets are
/// enumerated (at most `2^12 - 1` rival partitions).
pub const MAX_MERGE_CLUSTERS: usize = 12;

/// A rival partition and how it was formed.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedPartition {
    pub partition: Partition,
    /// `(small cluster, large cluster)` ids in the initial partition.
    pub merges: Vec<(usize, usize)>,
}

impl MergedPartition {
    pub fn descriptor(&self) -> String {
        let parts: Vec<String> = self.merges.iter().map(|(s, l)| format!("{s}->{l}")).collect();
        format!("merge[{}]", parts.join(","))
    }
}

fn cluster_means<T: Real, V: AsRef<[T]>>(features: &[V], p: &Partition) -> Vec<Vec<T>> {
    let dim = features.first().map_or(0, |f| f.as_ref().len());
    p.clusters()
        .iter()
        .map(|m| {
            let mut mean = vec![T::zero(); dim];
            for &i in m {
                for (a, &v) in mean.iter_mut().zip(features[i].as_ref()) {
                    *a = *a + v;
                }
            }
            let n = T::from_usize_lossy(m.len());
            mean.iter_mut().for_each(|a| *a = *a / n);
            mean
        })
        .collect()
}

/// Small clusters (size `<= small_max`) considered for merging, smallest
/// first, capped at [`MAX_MERGE_CLUSTERS`].
pub fn small_clusters(p: &Partition, small_max: usize) -> Vec<usize> {
    let sizes = p.sizes();
    let mut small: Vec<usize> = (0..sizes.len()).filter(|&k| sizes[k] <= small_max).collect();
    small.sort_by_key(|&k| (sizes[k], k));
    small.truncate(MAX_MERGE_CLUSTERS);
    small.sort_unstable();
    small
}

/// Every partition formed by merging a non-empty subset of the small
/// clusters, each into the large cluster with the nearest mean. Empty when
/// small and large clusters do not coexist.
pub fn merge_set<T: Real, V: AsRef<[T]>>(p: &Partition, small_max: usize, features: &[V]) -> Vec<MergedPartition> {
    let sizes = p.sizes();
    let large: Vec<usize> = (0..sizes.len()).filter(|&k| sizes[k] > small_max).collect();
    let small = small_clusters(p, small_max);
    if small.is_empty() || large.is_empty() {
        return Vec::new();
    }
    let means = cluster_means(features, p);
    let target: Vec<usize> = small
        .iter()
        .map(|&s| {
            let mut best = large[0];
            let mut best_d = sq_dist(&means[s], &means[best]);
            for &l in &large[1..] {
                let d = sq_dist(&means[s], &means[l]);
                if d < best_d {
                    best = l;
                    best_d = d;
                }
            }
            best
        })
        .collect();

    let mut out = Vec::with_capacity((1usize << small.len()) - 1);
    for mask in 1u32..(1u32 << small.len()) {
        let merges: Vec<(usize, usize)> = (0..small.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| (small[b], target[b]))
            .collect();
        let partition = p.relabel(|k| merges.iter().find(|(s, _)| *s == k).map_or(k, |&(_, l)| l));
        out.push(MergedPartition { partition, merges });
    }
    out
}

/// Linear map of scores onto `[0, 1]`; a constant batch maps to all ones.
pub fn normalize_scores<T: Real>(scores: &[T]) -> Vec<T> {
    let lo = scores.iter().copied().fold(T::infinity(), T::min);
    let hi = scores.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return vec![T::one(); scores.len()];
    }
    scores.iter().map(|&s| (s - lo) / (hi - lo)).collect()
}

/// `log p(X|a) - log p(X|b)`.
pub fn log_bayes_factor<T: Real, V: AsRef<[T]>>(features: &[V], a: &Partition, b: &Partition, base: &NigBase<T>) -> T {
    log_likelihood(features, a, base) - log_likelihood(features, b, base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeVerdict {
    pub descriptor: String,
    pub log_bayes_factor: f64,
    pub log_lower_bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub initial: Partition,
    /// `z_I` beat every rival.
    pub accepted: bool,
    pub outlier_indices: Vec<usize>,
    pub per_merge: Vec<MergeVerdict>,
}

impl fmt::Display for OutlierReport {
    /// One rival per line: descriptor, log K, log bound, verdict.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.per_merge {
            writeln!(
                f,
                "{}\t{:.6}\t{:.6}\t{}",
                m.descriptor,
                m.log_bayes_factor,
                m.log_lower_bound,
                if m.satisfied { "keep" } else { "merge" }
            )?;
        }
        Ok(())
    }
}

/// Evaluates the weighted Bayes-factor rule for `p` against its merge set.
pub fn detect_outliers_with<T: Real, V: AsRef<[T]>>(
    features: &[V],
    scores: &[T],
    p: &Partition,
    base: &NigBase<T>,
    alpha: T,
    small_max: usize,
) -> OutlierReport {
    assert_eq!(features.len(), scores.len(), "scores must align with features");
    let rivals = merge_set(p, small_max, features);
    if rivals.is_empty() {
        return OutlierReport {
            initial: p.clone(),
            accepted: false,
            outlier_indices: Vec::new(),
            per_merge: Vec::new(),
        };
    }
    let tbar = normalize_scores(scores);
    let weight = |members: &[usize]| -> T { members.iter().map(|&i| tbar[i].sqrt()).sum() };
    let init_marg: Vec<T> = p.clusters().iter().map(|m| log_marginal_of(features, m, base)).collect();
    let init_lgw: Vec<T> = p.clusters().iter().map(|m| weight(m).ln_gamma()).collect();
    let ln_alpha = alpha.ln();

    let mut per_merge = Vec::with_capacity(rivals.len());
    let mut all = true;
    for rival in &rivals {
        // Only clusters touched by the merge differ between the two models.
        let mut affected: Vec<usize> = rival.merges.iter().flat_map(|&(s, l)| [s, l]).collect();
        affected.sort_unstable();
        affected.dedup();
        let mut targets: Vec<usize> = rival.merges.iter().map(|&(_, l)| l).collect();
        targets.sort_unstable();
        targets.dedup();

        let mut log_k = T::zero();
        let mut bound = -T::from_usize_lossy(rival.merges.len()) * ln_alpha;
        for &k in &affected {
            log_k = log_k + init_marg[k];
            bound = bound - init_lgw[k];
        }
        for &l in &targets {
            let mut members: Vec<usize> = p.members(l).to_vec();
            for &(s, _) in rival.merges.iter().filter(|(_, t)| *t == l) {
                members.extend_from_slice(p.members(s));
            }
            log_k = log_k - log_marginal_of(features, &members, base);
            bound = bound + weight(&members).ln_gamma();
        }
        let satisfied = log_k > bound;
        all &= satisfied;
        per_merge.push(MergeVerdict {
            descriptor: rival.descriptor(),
            log_bayes_factor: log_k.as_f64(),
            log_lower_bound: bound.as_f64(),
            satisfied,
        });
    }

    let outlier_indices = if all {
        let mut idx: Vec<usize> = small_clusters(p, small_max)
            .into_iter()
            .flat_map(|k| p.members(k).to_vec())
            .collect();
        idx.sort_unstable();
        idx
    } else {
        Vec::new()
    };
    OutlierReport {
        initial: p.clone(),
        accepted: all,
        outlier_indices,
        per_merge,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn no_small_clusters_means_no_rivals() {
        let f = feats(&[0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2, 5.3]);
        let p = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1, 1]);
        assert!(merge_set(&p, 3, &f).is_empty());
        let base = NigBase::new(2.5, 0.1, 1.0, 6.0).unwrap();
        let r = detect_outliers_with(&f, &[1.0; 8], &p, &base, 1.0 / 3.0, 3);
        assert!(!r.accepted && r.outlier_indices.is_empty() && r.per_merge.is_empty());
    }

    #[test]
    fn single_small_cluster_goes_to_nearest_large() {
        let f = feats(&[0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3, 7.0]);
        let p = Partition::from_labels(&[0, 0, 0, 0, 1, 1, 1, 1, 2]);
        let m = merge_set(&p, 3, &f);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].merges, vec![(2, 1)]);
        assert_eq!(m[0].partition.members(1), &[4, 5, 6, 7, 8]);
    }

    #[test]
    fn three_small_clusters_give_seven_rivals() {
        let f = feats(&[0.0, 0.1, 0.2, 0.3, 10.0, 20.0, 30.0]);
        let p = Partition::from_labels(&[0, 0, 0, 0, 1, 2, 3]);
        let m = merge_set(&p, 3, &f);
        assert_eq!(m.len(), 7);
        assert!(m.iter().all(|r| r.partition.n_clusters() == 4 - r.merges.len()));
    }

    #[test]
    fn score_normalization() {
        assert_eq!(normalize_scores(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_scores(&[0.3, 0.3]), vec![1.0, 1.0]);
    }

    #[test]
    fn equal_scores_reduce_to_unweighted_bound() {
        // with all T = 1 the weights are cluster sizes
        let f = feats(&[0.0, 0.2, -0.1, 0.1, 0.3, 9.0]);
        let p = Partition::from_labels(&[0, 0, 0, 0, 0, 1]);
        let base = NigBase::new(1.0, 0.1, 1.0, 4.0).unwrap();
        let alpha = 1.0f64 / 3.0;
        let r = detect_outliers_with(&f, &[0.7; 6], &p, &base, alpha, 1);
        let expected = -alpha.ln() + 6.0f64.ln_gamma_ref() - 5.0f64.ln_gamma_ref() - 1.0f64.ln_gamma_ref();
        assert!((r.per_merge[0].log_lower_bound - expected).abs() < 1e-12);
    }

    trait LnGammaRef {
        fn ln_gamma_ref(self) -> f64;
    }
    impl LnGammaRef for f64 {
        fn ln_gamma_ref(self) -> f64 {
            statrs::function::gamma::ln_gamma(self)
        }
    }
}
