//! Monte-Carlo pattern densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BlockPermuton, Child, Compiled};
use crate::error::PermutonError;
use crate::perm::Permutation;

/// Samples per independently seeded chunk.
const CHUNK: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// binomial standard error of the estimate
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

impl McEstimate {
    /// `|estimate - value|` in units of the standard error.
    pub fn sigmas_from(&self, value: f64) -> f64 {
        let diff = (self.estimate - value).abs();
        if self.stderr == 0.0 {
            if diff < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / self.stderr
        }
    }
}

fn sample_point<R: Rng>(compiled: &Compiled, rng: &mut R) -> (f64, f64) {
    let (mut x0, mut y0, mut scale) = (0.0, 0.0, 1.0);
    let mut node = compiled.root;
    loop {
        match node {
            Child::Dec => {
                let t: f64 = rng.random();
                return (x0 + scale * t, y0 + scale * (1.0 - t));
            }
            Child::Inc => {
                let t: f64 = rng.random();
                return (x0 + scale * t, y0 + scale * t);
            }
            Child::Grid(g) => {
                let grid = &compiled.grids[g];
                let u: f64 = rng.random();
                let mut j = grid.weights.len() - 1;
                let mut acc = 0.0;
                for (i, &w) in grid.weights.iter().enumerate() {
                    acc += w;
                    if u < acc && w > 0.0 {
                        j = i;
                        break;
                    }
                }
                x0 += scale * grid.col_start[j];
                y0 += scale * grid.row_start[grid.row_of_col[j]];
                scale *= grid.weights[j];
                node = grid.children[j];
            }
        }
    }
}

fn sample_points<R: Rng>(compiled: &Compiled, n: usize, rng: &mut R, out: &mut Vec<(f64, f64)>) {
    out.clear();
    out.extend((0..n).map(|_| sample_point(compiled, rng)));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
}

fn matches(points: &[(f64, f64)], s: &[u8]) -> bool {
    // the point in position i must have exactly s[i]-1 smaller y values
    points.iter().enumerate().all(|(i, p)| {
        let below = points.iter().filter(|q| q.1 < p.1).count();
        below + 1 == s[i] as usize
    })
}

/// Draws a random permutation of length `n` from `mu`.
pub fn sample_permutation<R: Rng>(mu: &BlockPermuton, n: usize, rng: &mut R) -> Permutation {
    let mut points = Vec::with_capacity(n);
    sample_points(mu.compiled(), n, rng, &mut points);
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let keys: Vec<u64> = ys.iter().map(|y| y.to_bits()).collect();
    // y values are non-negative, so their bit patterns order like the values
    Permutation::standardize(&keys)
}

/// Estimates the density of `s` in `mu` from `samples` independent
/// `|s|`-point samples. Deterministic for a fixed seed regardless of the
/// number of threads.
pub fn density_mc(s: &Permutation, mu: &BlockPermuton, samples: u64, seed: u64) -> Result<McEstimate, PermutonError> {
    if samples == 0 {
        return Err(PermutonError::Domain("at least one sample is required".into()));
    }
    let m = s.len();
    let chunks = samples.div_ceil(CHUNK);
    let compiled = mu.compiled();
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut points = Vec::with_capacity(m);
            let mut hits = 0u64;
            for _ in 0..count {
                sample_points(compiled, m, &mut rng, &mut points);
                if matches(&points, s.values()) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let estimate = hits as f64 / samples as f64;
    let stderr = (estimate * (1.0 - estimate) / samples as f64).sqrt();
    Ok(McEstimate {
        estimate,
        stderr,
        hits,
        samples,
    })
}
