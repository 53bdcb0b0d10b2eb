//! Types, flags, flag densities and the exact flag-product tables that feed
//! the semidefinite program.
//!
//! A flag is a base permutation together with an increasing set of support
//! positions inducing its type. Flags are not quotiented by any symmetry: two
//! flags are equal exactly when their bases and supports coincide.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use itertools::Itertools;
use num_bigint::BigInt;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::FlagError;
use crate::perm::{binomial, enumerate_restricted, ForbiddenSet, Permutation};
use crate::Rational;

/// Which permutations count as admissible: avoiders of a forbidden set,
/// optionally restricted to layered permutations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Admissibility {
    pub forbidden: ForbiddenSet,
    pub layered_only: bool,
}

impl Admissibility {
    pub fn new(forbidden: ForbiddenSet, layered_only: bool) -> Self {
        Admissibility {
            forbidden,
            layered_only,
        }
    }

    pub fn enumerate(&self, n: usize) -> Vec<Permutation> {
        enumerate_restricted(n, &self.forbidden, self.layered_only)
    }

    pub fn admits(&self, p: &Permutation) -> bool {
        (!self.layered_only || p.is_layered()) && self.forbidden.admits(p)
    }
}

impl From<ForbiddenSet> for Admissibility {
    fn from(forbidden: ForbiddenSet) -> Self {
        Admissibility::new(forbidden, false)
    }
}

/// A labelled type. Its points are labelled by position, so the labelling is
/// fixed by the permutation itself.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct TypePerm {
    tau: Permutation,
}

impl TypePerm {
    pub fn new(tau: Permutation) -> Self {
        TypePerm { tau }
    }

    pub fn tau(&self) -> &Permutation {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

impl fmt::Display for TypePerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tau.fmt(f)
    }
}

/// A permutation with a distinguished, increasing set of 1-based support
/// positions inducing its type.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Flag {
    base: Permutation,
    support: Vec<u8>,
    ty: TypePerm,
}

impl Flag {
    /// Checks that `support` is increasing, in range and induces `ty`.
    pub fn new(base: Permutation, support: Vec<u8>, ty: TypePerm) -> Result<Self, FlagError> {
        let idx: Vec<usize> = support.iter().map(|&s| s as usize).collect();
        match base.subpattern(&idx) {
            Ok(induced) if induced == ty.tau => Ok(Flag { base, support, ty }),
            _ => Err(FlagError::BadSupport),
        }
    }

    pub fn base(&self) -> &Permutation {
        &self.base
    }

    /// 1-based support positions.
    pub fn support(&self) -> &[u8] {
        &self.support
    }

    pub fn flag_type(&self) -> &TypePerm {
        &self.ty
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    fn root(&self) -> Vec<usize> {
        self.support.iter().map(|&s| s as usize - 1).collect()
    }

    fn non_root(&self) -> Vec<usize> {
        let root = self.root();
        (0..self.len()).filter(|i| !root.contains(i)).collect()
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.base, self.support.iter().join(","))
    }
}

/// Base pattern and 1-based support of the flag induced on `root ∪ extra`
/// (0-based positions of `p`, each list increasing).
fn induced(p: &Permutation, root: &[usize], extra: &[usize]) -> (Permutation, Vec<u8>) {
    let merged: Vec<usize> = root.iter().chain(extra).copied().sorted_unstable().collect();
    let support = root
        .iter()
        .map(|r| (merged.binary_search(r).unwrap() + 1) as u8)
        .collect();
    (p.pattern_at(merged.iter().copied()), support)
}

fn same_type(a: &TypePerm, b: &TypePerm) -> Result<(), FlagError> {
    if a == b {
        Ok(())
    } else {
        Err(FlagError::TypeMismatch(a.to_string(), b.to_string()))
    }
}

/// Admissible permutations of length `t`, as types, in canonical order.
pub fn enumerate_types(t: usize, class: &Admissibility) -> Vec<TypePerm> {
    class.enumerate(t).into_iter().map(TypePerm::new).collect()
}

/// All admissible flags of length `m` over `ty`, ordered by (base, support).
pub fn enumerate_flags(m: usize, ty: &TypePerm, class: &Admissibility) -> Vec<Flag> {
    let t = ty.len();
    if m < t {
        return Vec::new();
    }
    let mut flags = Vec::new();
    for base in class.enumerate(m) {
        for support in (0..m).combinations(t) {
            if base.pattern_at(support.iter().copied()) == ty.tau {
                let support = support.iter().map(|&s| (s + 1) as u8).collect();
                flags.push(Flag {
                    base: base.clone(),
                    support,
                    ty: ty.clone(),
                });
            }
        }
    }
    flags
}

/// Probability that a random extension of `p`'s root by `|s| - t` further
/// points induces the flag `s`.
pub fn flag_density(s: &Flag, p: &Flag) -> Result<Rational, FlagError> {
    same_type(&s.ty, &p.ty)?;
    if s.len() > p.len() {
        return Err(FlagError::TooShort {
            needed: s.len(),
            got: p.len(),
        });
    }
    let t = s.ty.len();
    let root = p.root();
    let hits = p
        .non_root()
        .into_iter()
        .combinations(s.len() - t)
        .filter(|extra| {
            let (base, support) = induced(&p.base, &root, extra);
            base == s.base && support == s.support
        })
        .count();
    Ok(Rational::new(
        BigInt::from(hits),
        BigInt::from(binomial(p.len() - t, s.len() - t)),
    ))
}

/// Probability that two random extensions of `p`'s root, disjoint outside
/// the root and of sizes `|s1|` and `|s2|`, induce `s1` and `s2`.
pub fn joint_density(s1: &Flag, s2: &Flag, p: &Flag) -> Result<Rational, FlagError> {
    same_type(&s1.ty, &p.ty)?;
    same_type(&s2.ty, &p.ty)?;
    let t = p.ty.len();
    let (k1, k2) = (s1.len() - t, s2.len() - t);
    if s1.len() + s2.len() - t > p.len() {
        return Err(FlagError::TooShort {
            needed: s1.len() + s2.len() - t,
            got: p.len(),
        });
    }
    let root = p.root();
    let free = p.non_root();
    let mut hits = 0u64;
    for first in free.iter().copied().combinations(k1) {
        let (b1, sup1) = induced(&p.base, &root, &first);
        if b1 != s1.base || sup1 != s1.support {
            continue;
        }
        let rest: Vec<usize> = free.iter().copied().filter(|x| !first.contains(x)).collect();
        for second in rest.into_iter().combinations(k2) {
            let (b2, sup2) = induced(&p.base, &root, &second);
            if b2 == s2.base && sup2 == s2.support {
                hits += 1;
            }
        }
    }
    let n = p.len();
    let denom = binomial(n - t, k1) * binomial(n - s1.len(), k2);
    Ok(Rational::new(BigInt::from(hits), BigInt::from(denom)))
}

/// All `(t, m)` with `0 <= t < m` and `2m - t = n`.
pub fn admissible_pairs(n: usize) -> Vec<(usize, usize)> {
    (n % 2..n)
        .step_by(2)
        .map(|t| (t, (n + t) / 2))
        .filter(|&(t, m)| t < m && m >= 1)
        .collect()
}

/// Root-averaged joint densities of pairs of `m`-point flags over one type,
/// for every admissible target of length `n = 2m - t`.
///
/// The coefficient of the ordered pair `(i, j)` at target `P'` is
/// `count / denominator`, where `count` is the number of (root, split) choices
/// in `P'` realising that pair and `denominator = C(n, t) * C(n - t, m - t)`.
/// Root choices whose pattern differs from the type contribute zero but still
/// count toward the average.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagProductTable {
    n: usize,
    ty: TypePerm,
    m: usize,
    class: Admissibility,
    flags: Vec<Flag>,
    denominator: u64,
    /// per target: `(i, j, count)` with `i <= j`, sorted
    entries: Vec<Vec<(u32, u32, u32)>>,
}

impl FlagProductTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flag_type(&self) -> &TypePerm {
        &self.ty
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn class(&self) -> &Admissibility {
        &self.class
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    pub fn dim(&self) -> usize {
        self.flags.len()
    }

    pub fn target_count(&self) -> usize {
        self.entries.len()
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Nonzero `(i, j, count)` cells of a target, `i <= j`.
    pub fn cells(&self, target: usize) -> &[(u32, u32, u32)] {
        &self.entries[target]
    }

    pub fn coefficient(&self, target: usize, i: usize, j: usize) -> Rational {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let count = self.entries[target]
            .binary_search_by(|&(a, b, _)| (a as usize, b as usize).cmp(&(i, j)))
            .map(|k| self.entries[target][k].2)
            .unwrap_or(0);
        Rational::new(BigInt::from(count), BigInt::from(self.denominator))
    }

    /// Serialises the table in the line-oriented text format: a header, then
    /// one `p_index i j numerator/denominator` line per nonzero cell.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("permflag-table v1\n");
        out.push_str(&format!("N {}\n", self.n));
        out.push_str(&format!("type {}\n", self.ty));
        out.push_str(&format!("m {}\n", self.m));
        out.push_str(&format!("forbidden {}\n", self.class.forbidden.label()));
        out.push_str(&format!("layered {}\n", self.class.layered_only));
        out.push_str(&format!("flags {}\n", self.flags.len()));
        out.push_str(&format!("targets {}\n", self.entries.len()));
        for (p, cells) in self.entries.iter().enumerate() {
            for &(i, j, c) in cells {
                let r = Rational::new(BigInt::from(c), BigInt::from(self.denominator));
                out.push_str(&format!("{p} {i} {j} {}\n", crate::format_rational(&r)));
            }
        }
        out
    }

    /// Parses [`FlagProductTable::to_text`] output. Flags are re-enumerated
    /// from the header and must match the recorded count.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self, FlagError> {
        let bad = |reason: String| FlagError::TableFormat {
            path: origin.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some("permflag-table v1") {
            return Err(bad("missing header".into()));
        }
        let mut header = HashMap::new();
        for key in ["N", "type", "m", "forbidden", "layered", "flags", "targets"] {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(bad(format!("expected `{key}`, found `{k}`")));
            }
            header.insert(key, v.trim().to_string());
        }
        let num = |key: &str| -> Result<usize, FlagError> {
            header[key].parse().map_err(|_| bad(format!("bad `{key}` value")))
        };
        let n = num("N")?;
        let m = num("m")?;
        let flag_count = num("flags")?;
        let target_count = num("targets")?;
        let tau: Permutation = header["type"].parse().map_err(|e| bad(format!("{e}")))?;
        let forbidden = match header["forbidden"].as_str() {
            "-" => ForbiddenSet::none(),
            list => {
                let items: Vec<&str> = list.split('+').collect();
                ForbiddenSet::parse(&items).map_err(|e| bad(format!("{e}")))?
            }
        };
        let layered_only = header["layered"] == "true";
        let ty = TypePerm::new(tau);
        let class = Admissibility::new(forbidden, layered_only);
        let flags = enumerate_flags(m, &ty, &class);
        if flags.len() != flag_count {
            return Err(bad(format!(
                "header declares {flag_count} flags, enumeration gives {}",
                flags.len()
            )));
        }
        let t = ty.len();
        let denominator = binomial(n, t) * binomial(n - t, m - t);
        let mut entries = vec![Vec::new(); target_count];
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = (|| {
                if fields.len() != 4 {
                    return None;
                }
                let p: usize = fields[0].parse().ok()?;
                let i: u32 = fields[1].parse().ok()?;
                let j: u32 = fields[2].parse().ok()?;
                let r = crate::parse_rational(fields[3])?;
                let scaled = r * Rational::from_integer(BigInt::from(denominator));
                if !scaled.is_integer() {
                    return None;
                }
                let c: u32 = num_traits::ToPrimitive::to_u32(&scaled.to_integer())?;
                (p < target_count && i <= j && (j as usize) < flag_count).then_some((p, i, j, c))
            })();
            let (p, i, j, c) = parsed.ok_or_else(|| bad(format!("bad entry on data line {}", lineno + 1)))?;
            entries[p].push((i, j, c));
        }
        for cells in &mut entries {
            cells.sort_unstable();
        }
        Ok(FlagProductTable {
            n,
            ty,
            m,
            class,
            flags,
            denominator,
            entries,
        })
    }
}

/// Builds the product table of `ty` with `m`-point flags over targets of
/// length `n`, which must equal `2m - t`.
pub fn build_product_table(
    n: usize,
    ty: &TypePerm,
    m: usize,
    class: &Admissibility,
) -> Result<FlagProductTable, FlagError> {
    let targets = class.enumerate(n);
    build_for_targets(n, ty, m, class, &targets)
}

pub(crate) fn build_for_targets(
    n: usize,
    ty: &TypePerm,
    m: usize,
    class: &Admissibility,
    targets: &[Permutation],
) -> Result<FlagProductTable, FlagError> {
    let t = ty.len();
    if m < t || 2 * m != n + t {
        return Err(FlagError::BadComplexity { n, m, t });
    }
    let flags = enumerate_flags(m, ty, class);
    let index: HashMap<(Permutation, Vec<u8>), u32> = flags
        .iter()
        .enumerate()
        .map(|(k, f)| ((f.base.clone(), f.support.clone()), k as u32))
        .collect();
    let k = m - t;
    let entries = targets
        .par_iter()
        .map(|target| {
            let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
            for root in (0..n).combinations(t) {
                if target.pattern_at(root.iter().copied()) != ty.tau {
                    continue;
                }
                let free: Vec<usize> = (0..n).filter(|x| !root.contains(x)).collect();
                for first in free.iter().copied().combinations(k) {
                    let second: Vec<usize> = free.iter().copied().filter(|x| !first.contains(x)).collect();
                    let i = index.get(&induced(target, &root, &first));
                    let j = index.get(&induced(target, &root, &second));
                    // both halves of an admissible target are admissible
                    let (Some(&i), Some(&j)) = (i, j) else {
                        continue;
                    };
                    // the mirrored split yields (j, i); counting only the
                    // ordered pair with i <= j keeps the ordered count
                    if i <= j {
                        *counts.entry((i, j)).or_insert(0) += 1;
                    }
                }
            }
            let mut cells: Vec<(u32, u32, u32)> = counts.into_iter().map(|((i, j), c)| (i, j, c)).collect();
            cells.sort_unstable();
            cells
        })
        .collect();
    Ok(FlagProductTable {
        n,
        ty: ty.clone(),
        m,
        class: class.clone(),
        flags,
        denominator: binomial(n, t) * binomial(n - t, k),
        entries,
    })
}

/// On-disk cache of product tables keyed by a content hash of their inputs.
#[derive(Clone, Debug)]
pub struct TableCache {
    dir: PathBuf,
}

impl TableCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TableCache { dir: dir.into() }
    }

    pub fn path_for(&self, n: usize, ty: &TypePerm, m: usize, class: &Admissibility) -> PathBuf {
        let key = format!(
            "permflag-table v1|N={n}|type={ty}|m={m}|forbidden={}|layered={}",
            class.forbidden.label(),
            class.layered_only
        );
        let digest = Sha256::digest(key.as_bytes());
        self.dir.join(format!("{}.tbl", hex::encode(&digest[..16])))
    }

    /// Returns the cached table, building and storing it on a miss. A cache
    /// file that fails to parse is rebuilt.
    pub fn get_or_build(
        &self,
        n: usize,
        ty: &TypePerm,
        m: usize,
        class: &Admissibility,
        targets: &[Permutation],
    ) -> Result<FlagProductTable, FlagError> {
        let path = self.path_for(n, ty, m, class);
        if let Ok(text) = fs::read_to_string(&path) {
            match FlagProductTable::from_text(&text, &path) {
                Ok(table) if table.n == n && table.m == m && table.ty == *ty && table.class == *class => {
                    return Ok(table)
                }
                Ok(_) => log::warn!("cache file {} does not match its key; rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable cache file: {e}"),
            }
        }
        let table = build_for_targets(n, ty, m, class, targets)?;
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp)?;
        file.write_all(table.to_text().as_bytes())?;
        drop(file);
        fs::rename(&tmp, &path)?;
        Ok(table)
    }
}
