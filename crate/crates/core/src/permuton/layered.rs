//! Layered permutons and Price's layer-size optimisation.

use super::optim::maximize_on_simplex;
use crate::error::PermutonError;
use crate::perm::Permutation;

/// Density of the layered pattern with layer sizes `s_layers` in the layered
/// permuton with layer masses `x` (both bottom-left to top-right).
///
/// Each pattern layer must land inside one permuton layer and distinct
/// pattern layers in distinct permuton layers, in order, so the density is
/// `|s|! Σ_{j_1 < … < j_L} Π x_{j_i}^{s_i} / s_i!`.
pub fn layered_density(s_layers: &[usize], x: &[f64]) -> f64 {
    let total: usize = s_layers.iter().sum();
    let fact = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product() };
    // dp[j] = weight of placing the first i pattern layers among x[..j]
    let mut dp = vec![1.0; x.len() + 1];
    for &size in s_layers {
        let mut next = vec![0.0; x.len() + 1];
        for j in 1..=x.len() {
            next[j] = next[j - 1] + dp[j - 1] * x[j - 1].powi(size as i32) / fact(size);
        }
        dp = next;
    }
    fact(total) * dp[x.len()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceResult {
    pub value: f64,
    /// layer masses, bottom-left to top-right
    pub weights: Vec<f64>,
    pub layers_used: usize,
}

/// Maximises `layered_density` over layer counts `L(s) ..= max_layers`,
/// stopping as soon as one more layer improves the value by less than
/// `1e-9`.
pub fn price_optimize(s: &Permutation, max_layers: usize) -> Result<PriceResult, PermutonError> {
    let profile = s
        .layer_profile()
        .map_err(|_| PermutonError::Domain(format!("{s} is not layered")))?;
    let l = profile.len();
    if max_layers < l {
        return Err(PermutonError::Domain(format!("{s} has {l} layers but max_layers is {max_layers}")));
    }
    let f = |x: &[f64]| layered_density(&profile, x);
    let mut best: Option<PriceResult> = None;
    for m in l.max(1)..=max_layers {
        // seed each level with the previous optimum plus an empty layer on
        // either end, keeping whichever start is better
        let first = best.as_ref().map(|b| {
            let mut low = vec![0.0];
            low.extend_from_slice(&b.weights);
            let mut high = b.weights.clone();
            high.push(0.0);
            if f(&low) >= f(&high) {
                low
            } else {
                high
            }
        });
        let (weights, value) = maximize_on_simplex(f, m, first.as_deref(), 21, m as u64, 1e-12);
        let improvement = best.as_ref().map_or(f64::INFINITY, |b| value - b.value);
        if improvement <= 0.0 {
            break;
        }
        best = Some(PriceResult {
            value,
            weights,
            layers_used: m,
        });
        if improvement < 1e-9 {
            break;
        }
    }
    Ok(best.expect("at least one layer count is tried"))
}
