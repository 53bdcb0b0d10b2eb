//! Block permutons: finite descriptions of permutation limits used for
//! lower-bound constructions.
//!
//! A [`Node`] is a decreasing or increasing segment, a named maximiser, a
//! grid of sub-blocks, or a pointer back to the nearest enclosing grid
//! (self-similar iteration). Grids here are inflations: every row and every
//! column holds exactly one cell, so a cell's mass is both its row mass and
//! its column mass.

mod constructions;
mod layered;
pub mod optim;
mod sample;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::PermutonError;
use crate::perm::{binomial, Permutation};

pub use constructions::{
    batkeyev, batkeyev_closed_forms, constants, eval_batkeyev, eval_gamma_1324, eval_pi_1342, gamma_1324,
    maximiser, optimize_gamma_1324, pi_1342, preset, table3_preset, Constants, GammaOptimum, Preset, PI_1342_WEIGHTS,
    PRESET_NAMES, TABLE3_NAMES,
};
pub use layered::{layered_density, price_optimize, PriceResult};
pub use sample::{density_mc, sample_permutation, McEstimate};

/// Tolerance on mass sums and row/column agreement.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Dec,
    Inc,
    /// stored self-similar maximiser of a pattern
    Max { pattern: Permutation },
    /// the nearest enclosing grid, drawn again at this cell's scale
    Recurse,
    Grid(Grid),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// masses of the horizontal bands, bottom to top
    pub rows: Vec<f64>,
    /// masses of the vertical bands, left to right
    pub cols: Vec<f64>,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub r: usize,
    pub c: usize,
    pub node: Node,
}

impl Node {
    /// Inflation of `pi` by `children`: the block in column `j` (left to
    /// right) has mass `weights[j]` and sits in row `pi(j)`.
    pub fn inflation(pi: &Permutation, weights: &[f64], children: Vec<Node>) -> Node {
        let k = pi.len();
        let mut rows = vec![0.0; k];
        let cells = pi
            .values()
            .iter()
            .zip(weights)
            .zip(children)
            .enumerate()
            .map(|(c, ((&v, &w), node))| {
                rows[v as usize - 1] = w;
                Cell {
                    r: v as usize - 1,
                    c,
                    node,
                }
            })
            .collect();
        Node::Grid(Grid {
            rows,
            cols: weights.to_vec(),
            cells,
        })
    }

    /// Layered permuton: decreasing layers with masses `x`, bottom-left to
    /// top-right.
    pub fn layered(x: &[f64]) -> Node {
        Node::inflation(&Permutation::identity(x.len()), x, vec![Node::Dec; x.len()])
    }
}

/// A validated permuton description.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPermuton {
    root: Node,
    compiled: Compiled,
}

impl BlockPermuton {
    pub fn new(root: Node) -> Result<Self, PermutonError> {
        validate(&root, false)?;
        let compiled = Compiled::build(&root)?;
        Ok(BlockPermuton { root, compiled })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn from_json(text: &str) -> Result<Self, PermutonError> {
        let root: Node = serde_json::from_str(text)?;
        BlockPermuton::new(root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.root).expect("permuton serialises")
    }

    /// Probability that `|s|` points drawn from the permuton are
    /// order-isomorphic to `s`, evaluated exactly up to floating point.
    pub fn density_exact(&self, s: &Permutation) -> f64 {
        let mut memo = HashMap::new();
        self.compiled.eval_node(self.compiled.root, s, &mut memo)
    }

    pub(crate) fn compiled(&self) -> &Compiled {
        &self.compiled
    }
}

/// Convenience wrapper over [`BlockPermuton::density_exact`].
pub fn density_exact(s: &Permutation, mu: &BlockPermuton) -> f64 {
    mu.density_exact(s)
}

fn invalid(msg: impl Into<String>) -> PermutonError {
    PermutonError::Invalid(msg.into())
}

fn validate(node: &Node, inside_grid: bool) -> Result<(), PermutonError> {
    match node {
        Node::Dec | Node::Inc => Ok(()),
        Node::Recurse if inside_grid => Ok(()),
        Node::Recurse => Err(invalid("recurse leaf outside any grid")),
        Node::Max { pattern } => constructions::maximiser(pattern).map(|_| ()),
        Node::Grid(g) => {
            let k = g.rows.len();
            if k == 0 || g.cols.len() != k {
                return Err(invalid(format!(
                    "grid needs equally many rows and columns, got {} and {}",
                    g.rows.len(),
                    g.cols.len()
                )));
            }
            for (name, masses) in [("row", &g.rows), ("column", &g.cols)] {
                if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
                    return Err(invalid(format!("{name} masses must be non-negative")));
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(invalid(format!("{name} masses sum to {total}, not 1")));
                }
            }
            if g.cells.len() != k {
                return Err(invalid(format!("grid of size {k} has {} cells", g.cells.len())));
            }
            let mut row_used = vec![false; k];
            let mut col_used = vec![false; k];
            let mut recursions = 0;
            for cell in &g.cells {
                if cell.r >= k || cell.c >= k {
                    return Err(invalid(format!("cell ({}, {}) outside a {k}x{k} grid", cell.r, cell.c)));
                }
                if std::mem::replace(&mut row_used[cell.r], true) || std::mem::replace(&mut col_used[cell.c], true) {
                    return Err(invalid(format!("row {} or column {} holds two cells", cell.r, cell.c)));
                }
                if (g.rows[cell.r] - g.cols[cell.c]).abs() > MASS_TOL {
                    return Err(invalid(format!(
                        "cell ({}, {}) has row mass {} but column mass {}",
                        cell.r, cell.c, g.rows[cell.r], g.cols[cell.c]
                    )));
                }
                if cell.node == Node::Recurse {
                    recursions += 1;
                    if g.cols[cell.c] >= 1.0 - MASS_TOL {
                        return Err(invalid("recursive cell must have mass below 1"));
                    }
                }
                validate(&cell.node, true)?;
            }
            if recursions > 1 {
                return Err(invalid("at most one recurse cell per grid"));
            }
            Ok(())
        }
    }
}

/// Leaf or grid reference inside the compiled arena.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Child {
    Dec,
    Inc,
    Grid(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CompiledGrid {
    pub weights: Vec<f64>,
    pub col_start: Vec<f64>,
    pub row_start: Vec<f64>,
    /// row index of the cell in each column
    pub row_of_col: Vec<usize>,
    pub children: Vec<Child>,
}

/// Arena form: named maximisers expanded, recursion resolved to indices.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Compiled {
    pub grids: Vec<CompiledGrid>,
    pub root: Child,
}

impl Compiled {
    fn build(root: &Node) -> Result<Self, PermutonError> {
        let mut compiled = Compiled {
            grids: Vec::new(),
            root: Child::Dec,
        };
        compiled.root = compiled.add(root, None)?;
        Ok(compiled)
    }

    fn add(&mut self, node: &Node, enclosing: Option<usize>) -> Result<Child, PermutonError> {
        match node {
            Node::Dec => Ok(Child::Dec),
            Node::Inc => Ok(Child::Inc),
            Node::Recurse => enclosing.map(Child::Grid).ok_or_else(|| invalid("recurse leaf outside any grid")),
            Node::Max { pattern } => {
                let expanded = constructions::maximiser(pattern)?;
                self.add(&expanded, None)
            }
            Node::Grid(g) => {
                let idx = self.grids.len();
                let k = g.cols.len();
                let mut cells: Vec<&Cell> = g.cells.iter().collect();
                cells.sort_by_key(|c| c.c);
                let prefix = |m: &[f64]| -> Vec<f64> {
                    m.iter()
                        .scan(0.0, |acc, &w| {
                            let start = *acc;
                            *acc += w;
                            Some(start)
                        })
                        .collect()
                };
                self.grids.push(CompiledGrid {
                    weights: g.cols.clone(),
                    col_start: prefix(&g.cols),
                    row_start: prefix(&g.rows),
                    row_of_col: cells.iter().map(|c| c.r).collect(),
                    children: Vec::with_capacity(k),
                });
                for cell in cells {
                    let child = self.add(&cell.node, Some(idx))?;
                    self.grids[idx].children.push(child);
                }
                Ok(Child::Grid(idx))
            }
        }
    }

    fn eval_node(&self, node: Child, s: &Permutation, memo: &mut HashMap<(usize, Permutation), f64>) -> f64 {
        let v = s.values();
        match node {
            Child::Dec => f64::from(u8::from(v.windows(2).all(|w| w[0] > w[1]))),
            Child::Inc => f64::from(u8::from(v.windows(2).all(|w| w[0] < w[1]))),
            Child::Grid(g) => self.eval_grid(g, s, memo),
        }
    }

    /// Sums over weakly increasing assignments of the pattern's positions to
    /// columns. A self-referencing cell that receives every point gives the
    /// term `w^m p`, so `p = rest / (1 - w^m)`.
    fn eval_grid(&self, g: usize, s: &Permutation, memo: &mut HashMap<(usize, Permutation), f64>) -> f64 {
        let m = s.len();
        if m <= 1 {
            return 1.0;
        }
        if let Some(&p) = memo.get(&(g, s.clone())) {
            return p;
        }
        let grid = &self.grids[g];
        let k = grid.weights.len();
        let fact_m: f64 = (1..=m).map(|i| i as f64).product();
        let mut rest = 0.0;
        let mut self_coef = 0.0;
        for (j, child) in grid.children.iter().enumerate() {
            if *child == Child::Grid(g) {
                self_coef = grid.weights[j].powi(m as i32);
            }
        }
        let mut sizes = vec![0usize; k];
        sizes[k - 1] = m;
        loop {
            if let Some(term) = self.assignment_term(g, s, &sizes, fact_m, memo) {
                rest += term;
            }
            // next composition of m into k non-negative parts
            if !next_composition(&mut sizes, m) {
                break;
            }
        }
        let p = if self_coef > 0.0 { rest / (1.0 - self_coef) } else { rest };
        memo.insert((g, s.clone()), p);
        p
    }

    fn assignment_term(
        &self,
        g: usize,
        s: &Permutation,
        sizes: &[usize],
        fact_m: f64,
        memo: &mut HashMap<(usize, Permutation), f64>,
    ) -> Option<f64> {
        let grid = &self.grids[g];
        let m = s.len();
        let v = s.values();
        // skip the all-in-one-recursive-cell assignment, handled by the caller
        if let Some(j) = sizes.iter().position(|&n| n == m) {
            if grid.children[j] == Child::Grid(g) {
                return None;
            }
        }
        let mut placed: Vec<(u8, u8, usize)> = Vec::new(); // (min, max, row) per non-empty block
        let mut start = 0;
        let mut weight = fact_m;
        let mut blocks = Vec::new();
        for (j, &n) in sizes.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let block = &v[start..start + n];
            let (lo, hi) = (*block.iter().min()?, *block.iter().max()?);
            let row = grid.row_of_col[j];
            for &(plo, phi, prow) in &placed {
                let ok = if prow < row { phi < lo } else { plo > hi };
                if !ok {
                    return None;
                }
            }
            placed.push((lo, hi, row));
            let w = grid.weights[j];
            let fact_n: f64 = (1..=n).map(|i| i as f64).product();
            weight *= w.powi(n as i32) / fact_n;
            blocks.push((j, start, n));
            start += n;
        }
        if weight == 0.0 {
            return Some(0.0);
        }
        for (j, start, n) in blocks {
            let sub = Permutation::standardize(&v[start..start + n]);
            let d = self.eval_node(grid.children[j], &sub, memo);
            if d == 0.0 {
                return Some(0.0);
            }
            weight *= d;
        }
        Some(weight)
    }
}

/// Advances `sizes` to the next composition of `total` in lexicographic
/// order of the suffix sums; returns false after the last one.
fn next_composition(sizes: &mut [usize], total: usize) -> bool {
    let k = sizes.len();
    if k <= 1 {
        return false;
    }
    // find the rightmost position i < k-1 that can give one unit to i+1
    // treating the last part as the remainder
    let mut i = k - 1;
    while i > 0 {
        i -= 1;
        let used: usize = sizes[..=i].iter().sum();
        if used < total {
            sizes[i] += 1;
            for x in sizes[i + 1..].iter_mut() {
                *x = 0;
            }
            let used: usize = sizes[..k - 1].iter().sum();
            sizes[k - 1] = total - used;
            return true;
        }
    }
    false
}

/// Number of ways to split `m` points among `k` columns; used by tests and
/// benches to size the work of one grid evaluation.
pub fn assignment_count(m: usize, k: usize) -> u64 {
    binomial(m + k - 1, k.saturating_sub(1))
}
