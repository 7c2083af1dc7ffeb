//! Independent oracles shared by the integration tests. None of these call
//! into the code under test except for plain data types.

#![allow(dead_code)]

use posetrain::model::{Joint, Point, Skeleton, NUM_JOINTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// An upright reference pose about 210 px tall.
pub fn upright() -> Skeleton<f64> {
    let xy = [
        (90.0, 250.0),
        (92.0, 200.0),
        (95.0, 150.0),
        (125.0, 150.0),
        (128.0, 200.0),
        (130.0, 250.0),
        (70.0, 140.0),
        (78.0, 110.0),
        (88.0, 75.0),
        (132.0, 75.0),
        (142.0, 110.0),
        (150.0, 140.0),
        (110.0, 70.0),
        (110.0, 40.0),
    ];
    Skeleton::from_xy(&xy).unwrap()
}

pub fn displace(s: &Skeleton<f64>, j: Joint, dx: f64, dy: f64) -> Skeleton<f64> {
    let mut kp = *s.keypoints();
    kp[j.index()] = Point::new(kp[j.index()].x + dx, kp[j.index()].y + dy);
    Skeleton::new(kp).unwrap()
}

/// Keypoints scattered in a 400 px square.
pub fn random_skeleton(rng: &mut ChaCha8Rng) -> Skeleton<f64> {
    let kp: [Point<f64>; NUM_JOINTS] =
        std::array::from_fn(|_| Point::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0)));
    Skeleton::new(kp).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for k in 0..=max {
            cur.push(k);
            rec(i + 1, n, if k == max { max + 1 } else { max }, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(0, n, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Probability of a seating arrangement under the Chinese restaurant process,
/// customer by customer.
pub fn crp_sequential_prob(labels: &[usize], gamma: f64) -> f64 {
    let mut counts: Vec<usize> = Vec::new();
    let mut p = 1.0;
    for (i, &k) in labels.iter().enumerate() {
        let denom = gamma + i as f64;
        if k == counts.len() {
            p *= gamma / denom;
            counts.push(1);
        } else {
            p *= counts[k] as f64 / denom;
            counts[k] += 1;
        }
    }
    p
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Composite Simpson weights on `n` (even) intervals.
fn simpson(n: usize) -> impl Iterator<Item = (usize, f64)> {
    (0..=n).map(move |i| {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        (i, w / 3.0)
    })
}

/// `log ∫∫ ∏ N(x_i | mu, s2) N(mu | mu0, s2 / kappa0) IG(s2 | a0, b0) dmu ds2`
/// for 1-D data, by nested Simpson quadrature over `mu` and `ln s2`.
pub fn nig_log_marginal_quadrature(xs: &[f64], mu0: f64, kappa0: f64, a0: f64, b0: f64) -> f64 {
    let n = xs.len() as f64;
    let kn = kappa0 + n;
    let mn = (kappa0 * mu0 + xs.iter().sum::<f64>()) / kn;
    let ln_tau2pi = std::f64::consts::TAU.ln();
    let ig_norm = a0 * b0.ln() - ln_gamma(a0);
    // inner integral over mu for a fixed tau = ln s2, in log space
    let inner = |tau: f64| -> f64 {
        let s2 = tau.exp();
        // terms that do not depend on mu
        let fixed = -0.5 * n * (ln_tau2pi + tau) - 0.5 * (ln_tau2pi + tau - kappa0.ln()) + ig_norm
            - (a0 + 1.0) * tau
            - b0 / s2;
        let half = 12.0 * (s2 / kn).sqrt();
        let steps = 400;
        let h = 2.0 * half / steps as f64;
        let vals: Vec<f64> = simpson(steps)
            .map(|(i, w)| {
                let mu = mn - half + i as f64 * h;
                let sq: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() + kappa0 * (mu - mu0) * (mu - mu0);
                fixed - sq / (2.0 * s2) + (w * h).ln()
            })
            .collect();
        log_sum_exp(&vals) + tau // ds2 = s2 dtau
    };
    let centre = b0.ln();
    let (lo, hi) = (centre - 40.0, centre + 40.0);
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let vals: Vec<f64> = simpson(steps)
        .map(|(i, w)| inner(lo + i as f64 * h) + (w * h).ln())
        .collect();
    log_sum_exp(&vals)
}

/// `0.5 (w1^2 + w2^2 + b^2) + c * sum hinge`, the objective the solver
/// minimizes (bias regularized through augmentation).
pub fn svm_objective(points: &[(f64, f64, f64)], w1: f64, w2: f64, b: f64, c: f64) -> f64 {
    let hinge: f64 = points.iter().map(|&(x1, x2, y)| (1.0 - y * (w1 * x1 + w2 * x2 + b)).max(0.0)).sum();
    0.5 * (w1 * w1 + w2 * w2 + b * b) + c * hinge
}

/// Brute-force minimum: the grid `[-5, 5]^3` with step 0.05, then three
/// zoomed grids of ten times finer step around the incumbent.
pub fn svm_grid_min(points: &[(f64, f64, f64)], c: f64) -> f64 {
    let mut centre = (0.0, 0.0, 0.0);
    let mut best = f64::INFINITY;
    let (mut step, mut reach) = (0.05, 100);
    for _ in 0..4 {
        let c0 = centre;
        for i in -reach..=reach {
            for j in -reach..=reach {
                for k in -reach..=reach {
                    let w = (c0.0 + i as f64 * step, c0.1 + j as f64 * step, c0.2 + k as f64 * step);
                    let v = svm_objective(points, w.0, w.1, w.2, c);
                    if v < best {
                        best = v;
                        centre = w;
                    }
                }
            }
        }
        step /= 10.0;
        reach = 20;
    }
    best
}

/// All assemblies of one option per slot, best summed value first (ties by
/// lexicographic choice).
pub fn exhaustive_assemblies(values: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
    let mut out: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    for slot in values {
        out = out
            .into_iter()
            .flat_map(|(c, s)| {
                slot.iter().enumerate().map(move |(i, &v)| {
                    let mut c = c.clone();
                    c.push(i);
                    (c, s + v)
                })
            })
            .collect();
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Gaussian bumps (max-combined) on a `w x h` grid.
pub fn bump_grid(w: usize, h: usize, bumps: &[(f64, f64, f64)], sigma: f64) -> Vec<f64> {
    let mut g = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            for &(cx, cy, amp) in bumps {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = amp * (-d2 / (2.0 * sigma * sigma)).exp();
                g[y * w + x] = f64::max(g[y * w + x], v);
            }
        }
    }
    g
}
