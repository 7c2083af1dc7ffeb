//! Conjugate Normal-Inverse-Gamma marginal likelihood for diagonal Gaussian
//! clusters. Every dimension shares the same hyperparameters and is
//! integrated out independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigBase<T> {
    pub mu0: T,
    pub kappa0: T,
    pub a0: T,
    pub b0: T,
}

impl<T: Real> NigBase<T> {
    pub fn new(mu0: T, kappa0: T, a0: T, b0: T) -> Result<Self> {
        if !(kappa0 > T::zero() && a0 > T::zero() && b0 > T::zero() && mu0.is_finite()) {
            return Err(Error::Config(
                "NIG base needs kappa0, a0, b0 > 0 and finite mu0".into(),
            ));
        }
        Ok(NigBase { mu0, kappa0, a0, b0 })
    }

    /// `mu0` = pooled mean, `b0` = pooled variance of all feature entries.
    pub fn data_scaled<V: AsRef<[T]>>(features: &[V], kappa0: T, a0: T) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = T::zero();
        for f in features {
            for &v in f.as_ref() {
                sum = sum + v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::TooFewFeatures { got: 0, need: 1 });
        }
        let nf = T::from_usize_lossy(n);
        let mean = sum / nf;
        let mut ss = T::zero();
        for f in features {
            for &v in f.as_ref() {
                ss = ss + (v - mean) * (v - mean);
            }
        }
        let var = ss / nf;
        let b0 = if var > T::lit(1e-12) { var } else { T::one() };
        NigBase::new(mean, kappa0, a0, b0)
    }
}

/// Running per-dimension statistics (count, mean, centered sum of squares).
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats<T> {
    pub n: usize,
    pub mean: Vec<T>,
    pub m2: Vec<T>,
}

impl<T: Real> SuffStats<T> {
    pub fn empty(dim: usize) -> Self {
        SuffStats {
            n: 0,
            mean: vec![T::zero(); dim],
            m2: vec![T::zero(); dim],
        }
    }

    /// Two-pass statistics of `idx` rows of `features`.
    pub fn of<V: AsRef<[T]>>(features: &[V], idx: impl IntoIterator<Item = usize> + Clone, dim: usize) -> Self {
        let mut s = SuffStats::empty(dim);
        for i in idx.clone() {
            s.n += 1;
            for (m, &v) in s.mean.iter_mut().zip(features[i].as_ref()) {
                *m = *m + v;
            }
        }
        if s.n == 0 {
            return s;
        }
        let nf = T::from_usize_lossy(s.n);
        s.mean.iter_mut().for_each(|m| *m = *m / nf);
        for i in idx {
            for ((q, &m), &v) in s.m2.iter_mut().zip(&s.mean).zip(features[i].as_ref()) {
                *q = *q + (v - m) * (v - m);
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn add(&mut self, x: &[T]) {
        self.n += 1;
        let nf = T::from_usize_lossy(self.n);
        for ((m, q), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m = *m + d / nf;
            *q = *q + d * (v - *m);
        }
    }

    pub fn remove(&mut self, x: &[T]) {
        debug_assert!(self.n > 0);
        if self.n == 1 {
            *self = SuffStats::empty(self.dim());
            return;
        }
        let nf = T::from_usize_lossy(self.n);
        let nm1 = T::from_usize_lossy(self.n - 1);
        for ((m, q), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let old = (*m * nf - v) / nm1;
            *q = (*q - (v - old) * (v - *m)).max(T::zero());
            *m = old;
        }
        self.n -= 1;
    }

    /// Log marginal likelihood of the summarized points.
    pub fn log_marginal(&self, base: &NigBase<T>) -> T {
        if self.n == 0 {
            return T::zero();
        }
        let d = T::from_usize_lossy(self.dim());
        let half = T::lit(0.5);
        let nf = T::from_usize_lossy(self.n);
        let kn = base.kappa0 + nf;
        let an = base.a0 + half * nf;
        let shared = an.ln_gamma() - base.a0.ln_gamma() + base.a0 * base.b0.ln()
            + half * (base.kappa0.ln() - kn.ln())
            - half * nf * T::TAU().ln();
        let sum_ln_bn: T = self
            .mean
            .iter()
            .zip(&self.m2)
            .map(|(&m, &q)| {
                let dm = m - base.mu0;
                (base.b0 + half * q + base.kappa0 * nf * dm * dm / (kn + kn)).ln()
            })
            .sum();
        d * shared - an * sum_ln_bn
    }

    /// `log p(x | points)` by the ratio of marginals.
    pub fn log_predictive(&self, x: &[T], base: &NigBase<T>) -> T {
        let mut with = self.clone();
        with.add(x);
        with.log_marginal(base) - self.log_marginal(base)
    }
}

/// `log ∫ ∏ p(x_i | φ) dG0(φ)`; zero for an empty set.
pub fn cluster_log_marginal<T: Real, V: AsRef<[T]>>(members: &[V], base: &NigBase<T>) -> T {
    match members.first() {
        None => T::zero(),
        Some(first) => SuffStats::of(members, 0..members.len(), first.as_ref().len()).log_marginal(base),
    }
}

/// Marginal of the rows `idx` of `features`.
pub fn log_marginal_of<T: Real, V: AsRef<[T]>>(features: &[V], idx: &[usize], base: &NigBase<T>) -> T {
    match idx.first() {
        None => T::zero(),
        Some(&i) => SuffStats::of(features, idx.iter().copied(), features[i].as_ref().len()).log_marginal(base),
    }
}
