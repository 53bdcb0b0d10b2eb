//! The semidefinite program behind a flag-algebra bound.
//!
//! For every admissible target `P'` of length `N` the program asks
//! `p(S, P') + Σ_τ <Q_τ, C_τ(P')> <= b` with every `Q_τ` PSD, and minimises
//! `b`. `C_τ(P')` is the coefficient matrix of `P'` in the product table of
//! type `τ`.

mod sdpa;
mod solver;

use nalgebra::DMatrix;
use num_traits::Zero;

pub use sdpa::{emit_sdpa, read_block_structure, write_sdpa, BlockStructure};
pub use solver::{parse_csdp_output, parse_sdpa_output, run_solver, SolverStyle, DEFAULT_TIMEOUT_SECS};

use crate::error::SdpError;
use crate::flag::{admissible_pairs, build_for_targets, enumerate_types, Admissibility, FlagProductTable, TableCache};
use crate::perm::{density, Permutation};
use crate::Rational;

/// Everything needed to state, emit and later re-check one bound.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub density_pattern: Permutation,
    pub n: usize,
    pub class: Admissibility,
    /// admissible targets of length `n`, canonical order
    pub targets: Vec<Permutation>,
    /// `p(S, P')` per target
    pub objective_densities: Vec<Rational>,
    /// one PSD block per table; types without flags are dropped
    pub tables: Vec<FlagProductTable>,
}

impl SdpProblem {
    pub fn block_dims(&self) -> Vec<usize> {
        self.tables.iter().map(FlagProductTable::dim).collect()
    }

    pub fn constraint_count(&self) -> usize {
        self.targets.len()
    }
}

fn check_pattern(s: &Permutation, n: usize, class: &Admissibility) -> Result<(), SdpError> {
    if s.len() > n {
        return Err(SdpError::PatternTooLong {
            pattern: s.len(),
            n,
        });
    }
    if class.layered_only && !s.is_layered() {
        return Err(SdpError::PatternNotLayered(s.to_string()));
    }
    Ok(())
}

/// Builds the program for density pattern `s` over admissible targets of
/// length `n`.
pub fn assemble(s: &Permutation, n: usize, class: &Admissibility) -> Result<SdpProblem, SdpError> {
    assemble_with_cache(s, n, class, None)
}

pub fn assemble_with_cache(
    s: &Permutation,
    n: usize,
    class: &Admissibility,
    cache: Option<&TableCache>,
) -> Result<SdpProblem, SdpError> {
    check_pattern(s, n, class)?;
    let targets = class.enumerate(n);
    let objective_densities = targets.iter().map(|p| density(s, p)).collect();
    let mut tables = Vec::new();
    for (t, m) in admissible_pairs(n) {
        for ty in enumerate_types(t, class) {
            let table = match cache {
                Some(cache) => cache.get_or_build(n, &ty, m, class, &targets)?,
                None => build_for_targets(n, &ty, m, class, &targets)?,
            };
            if table.dim() > 0 {
                tables.push(table);
            }
        }
    }
    Ok(SdpProblem {
        density_pattern: s.clone(),
        n,
        class: class.clone(),
        targets,
        objective_densities,
        tables,
    })
}

/// `max_{P'} p(s, P')` over admissible targets of length `n`, exactly.
pub fn crude_bound(s: &Permutation, n: usize, class: &Admissibility) -> Result<Rational, SdpError> {
    check_pattern(s, n, class)?;
    Ok(class
        .enumerate(n)
        .iter()
        .map(|p| density(s, p))
        .max()
        .unwrap_or_else(Rational::zero))
}

/// Numeric output of an SDP solver, with the bound sign already normalised
/// to a positive packing-density value.
#[derive(Clone, Debug)]
pub struct NumericSolution {
    pub objective_value: f64,
    /// one symmetric matrix per PSD block, in block order
    pub q_matrices: Vec<DMatrix<f64>>,
    pub solver_log: String,
}

impl NumericSolution {
    /// Smallest eigenvalue of each Q matrix; reported, not enforced.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.q_matrices
            .iter()
            .map(|q| {
                if q.nrows() == 0 {
                    return 0.0;
                }
                let sym = (q + q.transpose()) * 0.5;
                sym.symmetric_eigenvalues().min()
            })
            .collect()
    }

    /// Largest `|Q_ij - Q_ji|` over all blocks.
    pub fn asymmetry(&self) -> f64 {
        self.q_matrices
            .iter()
            .map(|q| (q - q.transpose()).amax())
            .fold(0.0, f64::max)
    }
}
