//! Collapsed Gibbs sampling of the Chinese-restaurant-process partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nig::{log_marginal_of, NigBase, SuffStats};
use super::partition::Partition;
use crate::scalar::Real;

/// Unnormalized log prior mass `sum_k [ln(alpha) + ln Γ(n_k)]`.
pub fn crp_log_prior<T: Real>(p: &Partition, alpha: T) -> T {
    let la = alpha.ln();
    p.sizes()
        .into_iter()
        .map(|n| la + T::from_usize_lossy(n).ln_gamma())
        .sum()
}

/// `log p(X | z) = sum_k log m(X_k)`.
pub fn log_likelihood<T: Real, V: AsRef<[T]>>(features: &[V], p: &Partition, base: &NigBase<T>) -> T {
    p.clusters()
        .iter()
        .map(|m| log_marginal_of(features, m, base))
        .sum()
}

/// Unnormalized log posterior `log p(z) + log p(X | z)` with CRP mass `gamma`.
pub fn log_posterior<T: Real, V: AsRef<[T]>>(
    features: &[V],
    p: &Partition,
    gamma: T,
    base: &NigBase<T>,
) -> T {
    crp_log_prior(p, gamma) + log_likelihood(features, p, base)
}

pub struct GibbsSampler<'a, T, V> {
    features: &'a [V],
    base: NigBase<T>,
    gamma: T,
    dim: usize,
    z: Vec<usize>,
    clusters: Vec<SuffStats<T>>,
    rng: ChaCha8Rng,
    logw: Vec<f64>,
}

impl<'a, T: Real, V: AsRef<[T]>> GibbsSampler<'a, T, V> {
    /// Seats the items one at a time by the sequential CRP conditional.
    pub fn new(features: &'a [V], base: NigBase<T>, gamma: T, seed: u64) -> Self {
        let dim = features.first().map_or(0, |f| f.as_ref().len());
        let mut s = GibbsSampler {
            features,
            base,
            gamma,
            dim,
            z: vec![usize::MAX; features.len()],
            clusters: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            logw: Vec::new(),
        };
        for i in 0..features.len() {
            let k = s.draw_cluster(i);
            s.seat(i, k);
        }
        s
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.z)
    }

    fn seat(&mut self, i: usize, k: usize) {
        if k == self.clusters.len() {
            self.clusters.push(SuffStats::empty(self.dim));
        }
        self.clusters[k].add(self.features[i].as_ref());
        self.z[i] = k;
    }

    fn unseat(&mut self, i: usize) {
        let k = self.z[i];
        self.clusters[k].remove(self.features[i].as_ref());
        if self.clusters[k].n == 0 {
            let last = self.clusters.len() - 1;
            self.clusters.swap_remove(k);
            if k != last {
                for zj in self.z.iter_mut() {
                    if *zj == last {
                        *zj = k;
                    }
                }
            }
        }
        self.z[i] = usize::MAX;
    }

    /// Samples a table for unseated item `i`; `clusters.len()` means new.
    fn draw_cluster(&mut self, i: usize) -> usize {
        let x = self.features[i].as_ref();
        self.logw.clear();
        for c in &self.clusters {
            let w = T::from_usize_lossy(c.n).ln() + c.log_predictive(x, &self.base);
            self.logw.push(w.as_f64());
        }
        let fresh = SuffStats::empty(self.dim);
        let w_new = self.gamma.ln() + fresh.log_predictive(x, &self.base);
        self.logw.push(w_new.as_f64());

        let max = self.logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.logw.iter().map(|w| (w - max).exp()).sum();
        let mut u = self.rng.random::<f64>() * total;
        for (k, w) in self.logw.iter().enumerate() {
            u -= (w - max).exp();
            if u <= 0.0 {
                return k;
            }
        }
        self.logw.len() - 1
    }

    /// One systematic scan over all items.
    pub fn sweep(&mut self) {
        for i in 0..self.features.len() {
            self.unseat(i);
            let k = self.draw_cluster(i);
            self.seat(i, k);
        }
        // refresh running statistics so round-off does not accumulate
        for (k, c) in self.clusters.iter_mut().enumerate() {
            let idx: Vec<usize> = (0..self.z.len()).filter(|&i| self.z[i] == k).collect();
            *c = SuffStats::of(self.features, idx, self.dim);
        }
    }
}

/// Outcome of a Gibbs run.
#[derive(Debug, Clone)]
pub struct GibbsRun<T> {
    /// Highest-posterior partition among the post-burn-in samples.
    pub map: Partition,
    pub map_score: T,
    /// Log posterior of every post-burn-in sample, in order.
    pub sample_scores: Vec<T>,
}

pub fn gibbs_run<T: Real, V: AsRef<[T]>>(
    features: &[V],
    base: NigBase<T>,
    gamma: T,
    iters: usize,
    burn_in: usize,
    seed: u64,
) -> GibbsRun<T> {
    let mut sampler = GibbsSampler::new(features, base, gamma, seed);
    let mut best: Option<(Partition, T)> = None;
    let mut scores = Vec::with_capacity(iters.saturating_sub(burn_in));
    for it in 0..iters {
        sampler.sweep();
        if it < burn_in {
            continue;
        }
        let p = sampler.partition();
        let score = log_posterior(features, &p, gamma, &base);
        scores.push(score);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((p, score));
        }
    }
    let (map, map_score) = best.unwrap_or_else(|| {
        let p = sampler.partition();
        let s = log_posterior(features, &p, gamma, &base);
        (p, s)
    });
    GibbsRun {
        map,
        map_score,
        sample_scores: scores,
    }
}
