//! Mean-centered PCA used to shrink PR features before clustering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mean and orthonormal basis (`d` rows of length `dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection<T> {
    pub mean: Vec<T>,
    pub basis: Vec<Vec<T>>,
    /// Singular values of the centered data, descending.
    pub singular_values: Vec<T>,
}

impl<T: Real> Projection<T> {
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.basis
            .iter()
            .map(|b| {
                b.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(&bi, (&xi, &mi))| bi * (xi - mi))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, y: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (b, &c) in self.basis.iter().zip(y) {
            for (o, &bi) in out.iter_mut().zip(b) {
                *o = *o + c * bi;
            }
        }
        out
    }
}

/// Projects onto the top-`d` principal directions. The sign of each
/// direction is fixed so its largest-magnitude entry is positive.
pub fn project<T: Real, V: AsRef<[T]>>(features: &[V], d: usize) -> Result<(Vec<Vec<T>>, Projection<T>)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::TooFewFeatures { got: n, need: 2 });
    }
    let dim = features[0].as_ref().len();
    if d == 0 || d > dim.min(n) {
        return Err(Error::Config(format!(
            "projection dimension {d} must lie in 1..={}",
            dim.min(n)
        )));
    }
    if let Some(f) = features.iter().find(|f| f.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: f.as_ref().len(),
        });
    }

    let mut mean = vec![0.0f64; dim];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| features[i].as_ref()[j].as_f64() - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut basis = Vec::with_capacity(d);
    let mut singular_values = Vec::with_capacity(d);
    for &r in order.iter().take(d) {
        let mut row: Vec<f64> = v_t.row(r).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        basis.push(row.into_iter().map(T::lit).collect::<Vec<T>>());
        singular_values.push(T::lit(svd.singular_values[r]));
    }
    let proj = Projection {
        mean: mean.into_iter().map(T::lit).collect(),
        basis,
        singular_values,
    };
    let projected = features.iter().map(|f| proj.apply(f.as_ref())).collect();
    Ok((projected, proj))
}
