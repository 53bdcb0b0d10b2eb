//! Exact certificates for flag-algebra bounds.
//!
//! A numeric `Q` is factored as `L Lᵀ`, `L` is rounded to dyadic rationals
//! with a non-negative diagonal, and the bound is recomputed exactly from
//! `Q := L Lᵀ`. Such a `Q` is PSD by construction, so checking a certificate
//! needs no eigenvalue computation.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CertificateError, CertifyError};
use crate::flag::Admissibility;
use crate::perm::{binomial, count_occurrences, ForbiddenSet, Permutation};
use crate::sdp::{assemble, NumericSolution, SdpProblem};
use crate::{format_rational, parse_rational, Rational};

/// Rounding exponent used when none is given: entries of `L` become
/// multiples of `2^-40`.
pub const DEFAULT_K: u32 = 40;

/// Diagonal shift applied when a numeric `Q` is not PSD to within tolerance.
pub const EPSILON_SHIFT: f64 = 1e-8;

/// Dense square matrix of exact rationals, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    dim: usize,
    entries: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(dim: usize) -> Self {
        RationalMatrix {
            dim,
            entries: vec![Rational::zero(); dim * dim],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(RationalMatrix {
            dim,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Rational) {
        self.entries[i * self.dim + j] = value;
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.get(i, j).is_zero()))
    }

    pub fn has_nonnegative_diagonal(&self) -> bool {
        (0..self.dim).all(|i| !self.get(i, i).is_negative())
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `self · selfᵀ`, exactly.
    pub fn gram(&self) -> RationalMatrix {
        let (den, ints) = self.common_denominator();
        let q = gram_int(self.dim, &ints);
        let den2 = Rational::from_integer(den.clone() * den);
        let mut out = RationalMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, Rational::from_integer(q[i * self.dim + j].clone()) / den2.clone());
            }
        }
        out
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| crate::rational_to_f64(self.get(i, j)))
    }

    /// `(d, A)` with `self = A / d` and `A` integral.
    fn common_denominator(&self) -> (BigInt, Vec<BigInt>) {
        let den = self
            .entries
            .iter()
            .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let ints = self
            .entries
            .iter()
            .map(|r| r.numer() * (&den / r.denom()))
            .collect();
        (den, ints)
    }

    fn rows(&self) -> Vec<Vec<String>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| format_rational(self.get(i, j))).collect())
            .collect()
    }
}

fn gram_int(dim: usize, a: &[BigInt]) -> Vec<BigInt> {
    let mut q = vec![BigInt::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let kmax = j; // rows i and j of a lower-triangular factor overlap on 0..=j
            let mut s = BigInt::zero();
            for k in 0..dim {
                if k > kmax && a[i * dim + k].is_zero() && a[j * dim + k].is_zero() {
                    continue;
                }
                let x = &a[i * dim + k];
                let y = &a[j * dim + k];
                if !x.is_zero() && !y.is_zero() {
                    s += x * y;
                }
            }
            q[i * dim + j] = s.clone();
            q[j * dim + i] = s;
        }
    }
    q
}

/// Result of rounding a numeric solution.
#[derive(Clone, Debug)]
pub struct Rounding {
    pub factors: Vec<RationalMatrix>,
    /// the diagonal shift added before factoring, zero when none was needed
    pub epsilon_shift: Rational,
}

/// Lower-triangular `L` with `L Lᵀ = q` after eigenvalues in `[-neg_tol, 0)`
/// are clipped to zero. Factors the clipped eigendecomposition and
/// triangularises it by QR, which stays stable when `q` is singular. An
/// eigenvalue below `-neg_tol` is returned as the error.
fn psd_factor(q: &DMatrix<f64>, neg_tol: f64) -> Result<DMatrix<f64>, f64> {
    let n = q.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = ((q + q.transpose()) * 0.5).symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -neg_tol {
        return Err(min);
    }
    let mut half = eig.eigenvectors;
    for (k, &w) in eig.eigenvalues.iter().enumerate() {
        half.column_mut(k).scale_mut(w.max(0.0).sqrt());
    }
    // half = L Vᵀ with V orthogonal, so halfᵀ = V Lᵀ is a QR factorisation
    let mut l = half.transpose().qr().r().transpose();
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
    Ok(l)
}

fn round_dyadic(x: f64, k: u32) -> Rational {
    let scale = 2f64.powi(k as i32);
    let n = (x * scale).round();
    let n = BigInt::from(n as i128);
    Rational::new(n, BigInt::one() << k)
}

/// Factors every numeric `Q` as `L Lᵀ` and rounds `L` to multiples of
/// `2^-k` with a non-negative diagonal.
pub fn round_solution(sol: &NumericSolution, k: u32) -> Result<Rounding, CertifyError> {
    let mut shifted = false;
    let mut factors = Vec::with_capacity(sol.q_matrices.len());
    for (block, q) in sol.q_matrices.iter().enumerate() {
        let l = match psd_factor(q, EPSILON_SHIFT) {
            Ok(l) => l,
            Err(_) => {
                shifted = true;
                let bumped = q + DMatrix::<f64>::identity(q.nrows(), q.ncols()) * EPSILON_SHIFT;
                psd_factor(&bumped, EPSILON_SHIFT)
                    .map_err(|eigenvalue| CertifyError::NotCertifiable { block, eigenvalue })?
            }
        };
        let dim = l.nrows();
        let mut rounded = RationalMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let mut r = round_dyadic(l[(i, j)], k);
                if i == j && r.is_negative() {
                    r = Rational::zero();
                }
                rounded.set(i, j, r);
            }
        }
        factors.push(rounded);
    }
    let epsilon_shift = if shifted {
        Rational::new(BigInt::one(), BigInt::from(100_000_000u64))
    } else {
        Rational::zero()
    };
    Ok(Rounding {
        factors,
        epsilon_shift,
    })
}

/// Exact bound with its maximising target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactBound {
    pub bound: Rational,
    pub witness: Permutation,
    /// `p(S, P') + α(P')` per target
    pub values: Vec<Rational>,
}

/// `max_{P'} p(S, P') + α(P')` with `Q_τ = L_τ L_τᵀ` evaluated exactly.
pub fn exact_bound(problem: &SdpProblem, l_matrices: &[RationalMatrix]) -> Result<ExactBound, CertifyError> {
    if l_matrices.len() != problem.tables.len() {
        return Err(CertifyError::BlockCountMismatch {
            expected: problem.tables.len(),
            got: l_matrices.len(),
        });
    }
    for (block, (l, table)) in l_matrices.iter().zip(&problem.tables).enumerate() {
        if l.dim() != table.dim() {
            return Err(CertifyError::DimensionMismatch {
                block,
                expected: table.dim(),
                got: l.dim(),
            });
        }
    }
    // Q_τ = A Aᵀ / d², α(P') = Σ_τ Σ_cells w·count·(A Aᵀ)_ij / (d² D_τ)
    let blocks: Vec<(Vec<BigInt>, BigInt)> = l_matrices
        .par_iter()
        .zip(&problem.tables)
        .map(|(l, table)| {
            let (d, a) = l.common_denominator();
            let q = gram_int(l.dim(), &a);
            let scale = &d * &d * BigInt::from(table.denominator());
            (q, scale)
        })
        .collect();
    let common = blocks.iter().fold(BigInt::one(), |acc, (_, s)| acc.lcm(s));
    let multipliers: Vec<BigInt> = blocks.iter().map(|(_, s)| &common / s).collect();
    let values: Vec<Rational> = (0..problem.targets.len())
        .into_par_iter()
        .map(|target| {
            let mut acc = BigInt::zero();
            for ((table, (q, _)), mult) in problem.tables.iter().zip(&blocks).zip(&multipliers) {
                let dim = table.dim();
                let mut s = BigInt::zero();
                for &(i, j, count) in table.cells(target) {
                    let weight = if i == j { count as u64 } else { 2 * count as u64 };
                    s += &q[i as usize * dim + j as usize] * BigInt::from(weight);
                }
                acc += s * mult;
            }
            problem.objective_densities[target].clone() + Rational::new(acc, common.clone())
        })
        .collect();
    let (best, bound) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, v)| (i, v.clone()))
        .unwrap_or((0, Rational::zero()));
    Ok(ExactBound {
        bound,
        witness: problem.targets.get(best).cloned().unwrap_or_default(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertFlag {
    pub base: String,
    pub support: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertType {
    #[serde(rename = "type")]
    pub tau: String,
    pub m: usize,
    pub flags: Vec<CertFlag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertMeta {
    pub k: u32,
    pub epsilon_shift: String,
    pub tool_version: String,
}

/// Serialized proof object. Fields are kept as strings so that an untrusted
/// file can be loaded and then validated field by field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub pattern: String,
    pub forbidden: Vec<String>,
    pub n: usize,
    pub layered_only: bool,
    pub admissible: Vec<String>,
    pub types: Vec<CertType>,
    pub l_matrices: Vec<Vec<Vec<String>>>,
    pub bound: String,
    pub witness: String,
    pub meta: CertMeta,
}

const TOP_LEVEL_KEYS: [&str; 10] = [
    "pattern",
    "forbidden",
    "n",
    "layered_only",
    "admissible",
    "types",
    "l_matrices",
    "bound",
    "witness",
    "meta",
];
const META_KEYS: [&str; 3] = ["k", "epsilon_shift", "tool_version"];

impl Certificate {
    pub fn new(problem: &SdpProblem, factors: &[RationalMatrix], bound: &ExactBound, k: u32, epsilon_shift: &Rational) -> Self {
        Certificate {
            pattern: problem.density_pattern.to_string(),
            forbidden: problem.class.forbidden.patterns().iter().map(|p| p.to_string()).collect(),
            n: problem.n,
            layered_only: problem.class.layered_only,
            admissible: problem.targets.iter().map(|p| p.to_string()).collect(),
            types: problem
                .tables
                .iter()
                .map(|t| CertType {
                    tau: t.flag_type().to_string(),
                    m: t.m(),
                    flags: t
                        .flags()
                        .iter()
                        .map(|f| CertFlag {
                            base: f.base().to_string(),
                            support: f.support().iter().map(|&s| s as usize).collect(),
                        })
                        .collect(),
                })
                .collect(),
            l_matrices: factors.iter().map(RationalMatrix::rows).collect(),
            bound: format_rational(&bound.bound),
            witness: bound.witness.to_string(),
            meta: CertMeta {
                k,
                epsilon_shift: format_rational(epsilon_shift),
                tool_version: crate::TOOL_VERSION.to_string(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serialises");
        s.push('\n');
        s
    }

    pub fn bound_value(&self) -> Option<Rational> {
        parse_rational(&self.bound)
    }
}

/// Rounds a numeric solution and assembles the certificate for `problem`.
pub fn certify(problem: &SdpProblem, sol: &NumericSolution, k: u32) -> Result<(Certificate, ExactBound), CertifyError> {
    let rounding = round_solution(sol, k)?;
    let bound = exact_bound(problem, &rounding.factors)?;
    let cert = Certificate::new(problem, &rounding.factors, &bound, k, &rounding.epsilon_shift);
    Ok((cert, bound))
}

pub fn write_certificate(cert: &Certificate, path: &Path) -> Result<(), CertificateError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, cert.to_json())?;
    Ok(())
}

/// Parses certificate JSON. Unknown keys are tolerated and returned as
/// warnings.
pub fn parse_certificate(text: &str) -> Result<(Certificate, Vec<String>), CertificateError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cert: Certificate = serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        if inner.is_data() && field != "." {
            CertificateError::Field {
                field,
                reason: inner.to_string(),
            }
        } else {
            inner.into()
        }
    })?;
    let value: serde_json::Value = serde_json::from_str(text)?;
    let mut warnings = Vec::new();
    if let Some(obj) = value.as_object() {
        for key in obj.keys().filter(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            warnings.push(format!("ignoring unknown field `{key}`"));
        }
        if let Some(meta) = obj.get("meta").and_then(|m| m.as_object()) {
            for key in meta.keys().filter(|k| !META_KEYS.contains(&k.as_str())) {
                warnings.push(format!("ignoring unknown field `meta.{key}`"));
            }
        }
    }
    Ok((cert, warnings))
}

pub fn read_certificate(path: &Path) -> Result<Certificate, CertificateError> {
    let text = fs::read_to_string(path)?;
    let (cert, warnings) = parse_certificate(&text)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(cert)
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    /// exact bound recomputed from scratch, when the structure allowed it
    pub recomputed: Option<Rational>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        write!(f, "{}", if self.passed() { "certificate verified" } else { "certificate REJECTED" })
    }
}

fn field_err(field: impl Into<String>, reason: impl fmt::Display) -> CertificateError {
    CertificateError::Field {
        field: field.into(),
        reason: reason.to_string(),
    }
}

fn parse_perm(field: String, s: &str) -> Result<Permutation, CertificateError> {
    s.parse().map_err(|e| field_err(field, e))
}

/// Re-derives everything in `cert` from scratch and checks it. Unparseable
/// fields are errors naming the field; well-formed but wrong content shows
/// up as failed checks in the report.
pub fn verify(cert: &Certificate) -> Result<VerificationReport, CertificateError> {
    let pattern = parse_perm("pattern".into(), &cert.pattern)?;
    let forbidden = cert
        .forbidden
        .iter()
        .enumerate()
        .map(|(i, s)| parse_perm(format!("forbidden[{i}]"), s))
        .collect::<Result<Vec<_>, _>>()?;
    let bound = parse_rational(&cert.bound).ok_or_else(|| field_err("bound", "expected p/q"))?;
    let witness = parse_perm("witness".into(), &cert.witness)?;
    for (i, s) in cert.admissible.iter().enumerate() {
        parse_perm(format!("admissible[{i}]"), s)?;
    }
    let mut factors = Vec::with_capacity(cert.l_matrices.len());
    for (b, rows) in cert.l_matrices.iter().enumerate() {
        let parsed = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, s)| parse_rational(s).ok_or_else(|| field_err(format!("l_matrices[{b}][{i}][{j}]"), "expected p/q")))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = RationalMatrix::from_rows(parsed).ok_or_else(|| field_err(format!("l_matrices[{b}]"), "matrix is not square"))?;
        factors.push(matrix);
    }
    for (ti, ty) in cert.types.iter().enumerate() {
        parse_perm(format!("types[{ti}].type"), &ty.tau)?;
        for (fi, f) in ty.flags.iter().enumerate() {
            parse_perm(format!("types[{ti}].flags[{fi}].base"), &f.base)?;
        }
    }

    let mut report = VerificationReport::default();
    let class = Admissibility::new(ForbiddenSet::new(forbidden), cert.layered_only);
    let problem = match assemble(&pattern, cert.n, &class) {
        Ok(problem) => {
            report.push("pattern", true, format!("{pattern} with N = {}", cert.n));
            Some(problem)
        }
        Err(e) => {
            report.push("pattern", false, e.to_string());
            None
        }
    };
    let Some(problem) = problem else {
        return Ok(report);
    };

    let expected_admissible: Vec<String> = problem.targets.iter().map(|p| p.to_string()).collect();
    let admissible_ok = expected_admissible == cert.admissible;
    report.push(
        "admissible",
        admissible_ok,
        format!("{} listed, {} enumerated", cert.admissible.len(), expected_admissible.len()),
    );

    let expected_types: Vec<(String, usize)> = problem.tables.iter().map(|t| (t.flag_type().to_string(), t.m())).collect();
    let listed_types: Vec<(String, usize)> = cert.types.iter().map(|t| (t.tau.clone(), t.m)).collect();
    let types_ok = expected_types == listed_types;
    report.push(
        "types",
        types_ok,
        format!("{} listed, {} enumerated", listed_types.len(), expected_types.len()),
    );

    let flags_ok = types_ok
        && problem.tables.iter().zip(&cert.types).all(|(table, listed)| {
            table.flags().len() == listed.flags.len()
                && table.flags().iter().zip(&listed.flags).all(|(f, g)| {
                    f.base().to_string() == g.base && f.support().iter().map(|&s| s as usize).eq(g.support.iter().copied())
                })
        });
    report.push(
        "flags",
        flags_ok,
        if flags_ok { "all flag lists match enumeration".into() } else { "flag lists differ from enumeration".to_string() },
    );

    let dims_ok = factors.len() == problem.tables.len()
        && factors.iter().zip(&problem.tables).all(|(l, t)| l.dim() == t.dim());
    report.push(
        "dimensions",
        dims_ok,
        format!(
            "L dims {:?}, flag counts {:?}",
            factors.iter().map(RationalMatrix::dim).collect::<Vec<_>>(),
            problem.block_dims()
        ),
    );

    let lower_ok = factors.iter().all(RationalMatrix::is_lower_triangular);
    report.push("lower-triangular", lower_ok, "entries above the diagonal are zero");
    let diag_ok = factors.iter().all(RationalMatrix::has_nonnegative_diagonal);
    report.push("diagonal", diag_ok, "diagonal entries of every L are non-negative");

    if admissible_ok && types_ok && flags_ok && dims_ok {
        let exact = exact_bound(&problem, &factors).expect("dimensions checked above");
        let bound_ok = exact.bound <= bound;
        report.push(
            "bound",
            bound_ok,
            format!(
                "recomputed {} ≈ {:.12} vs stated ≈ {:.12}",
                format_rational(&exact.bound),
                crate::rational_to_f64(&exact.bound),
                crate::rational_to_f64(&bound)
            ),
        );
        let witness_ok = problem
            .targets
            .iter()
            .position(|p| *p == witness)
            .is_some_and(|i| exact.values[i] == exact.bound);
        report.push("witness", witness_ok, format!("{witness} attains the recomputed maximum"));
        report.recomputed = Some(exact.bound);
    } else {
        report.push("bound", false, "skipped: certificate structure does not match enumeration");
    }
    Ok(report)
}

/// Density of `s` in each permutation, used by callers that want to display
/// the crude bound next to a certificate.
pub fn crude_from_certificate(cert: &Certificate) -> Option<Rational> {
    let s: Permutation = cert.pattern.parse().ok()?;
    let m = s.len();
    cert.admissible
        .iter()
        .filter_map(|p| p.parse::<Permutation>().ok())
        .map(|p| Rational::new(BigInt::from(count_occurrences(&s, &p)), BigInt::from(binomial(p.len(), m))))
        .max()
}

/// Distinct denominators of a certificate's L entries; small sets indicate
/// dyadic rounding as expected.
pub fn l_denominators(cert: &Certificate) -> BTreeSet<BigInt> {
    cert.l_matrices
        .iter()
        .flatten()
        .flatten()
        .filter_map(|s| parse_rational(s))
        .map(|r| r.denom().clone())
        .collect()
}
