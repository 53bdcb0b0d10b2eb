//! Small derivative-free maximisers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Coordinate pattern search inside a box: tries `±h` along each axis,
/// halves `h` when nothing improves, stops once `h < tol`.
pub fn compass_max_box(f: impl Fn(&[f64]) -> f64, x0: &[f64], lower: &[f64], upper: &[f64], h0: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut best = f(&x);
    let mut h = h0;
    while h >= tol {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * h).clamp(lower[i], upper[i]);
                if y[i] == x[i] {
                    continue;
                }
                let v = f(&y);
                if v > best {
                    x = y;
                    best = v;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, best)
}

/// Pattern search on the probability simplex: moves up to `h` of mass
/// between pairs of coordinates, halving `h` when no move improves.
pub fn compass_max_simplex(f: impl Fn(&[f64]) -> f64, x0: &[f64], h0: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut best = f(&x);
    let mut h = h0;
    let n = x.len();
    while h >= tol {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j || x[j] <= 0.0 {
                    continue;
                }
                let d = h.min(x[j]);
                let mut y = x.clone();
                y[i] += d;
                y[j] -= d;
                let v = f(&y);
                if v > best {
                    x = y;
                    best = v;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, best)
}

/// Multi-start simplex maximisation. The first start is `first` (uniform
/// when `None`); the rest are Dirichlet(1) draws from a fixed seed.
pub fn maximize_on_simplex(
    f: impl Fn(&[f64]) -> f64 + Copy,
    dim: usize,
    first: Option<&[f64]>,
    restarts: usize,
    seed: u64,
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = vec![1.0 / dim as f64; dim];
    let mut best = (uniform.clone(), f64::NEG_INFINITY);
    for r in 0..restarts.max(1) {
        let start = if r == 0 {
            first.map(<[f64]>::to_vec).unwrap_or_else(|| uniform.clone())
        } else {
            let e: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|v| v / total).collect()
        };
        let (x, v) = compass_max_simplex(f, &start, 0.1, tol);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}
