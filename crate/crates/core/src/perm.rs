//! Permutations in one-line notation, classical pattern containment, and
//! enumeration of pattern-avoiding permutations.
//!
//! Every list of permutations produced here is in lexicographic order of the
//! one-line notation. Product tables and certificates index into that order.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PermError;
use crate::Rational;

/// Largest permutation length this crate handles.
pub const MAX_LEN: usize = u8::MAX as usize;

/// A bijection on `{1..n}` written in one-line notation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Permutation(Vec<u8>);

impl Permutation {
    /// Builds a permutation from its one-line values, checking that they form
    /// a bijection on `{1..n}`.
    pub fn new(values: Vec<u8>) -> Result<Self, PermError> {
        let n = values.len();
        let mut seen = vec![false; n + 1];
        for &v in &values {
            let v = v as usize;
            if v == 0 || v > n || seen[v] {
                return Err(PermError::Parse {
                    input: format!("{values:?}"),
                    reason: format!("values must be a bijection on 1..={n}"),
                });
            }
            seen[v] = true;
        }
        Ok(Permutation(values))
    }

    pub fn empty() -> Self {
        Permutation(Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Permutation((1..=n as u8).collect())
    }

    pub fn decreasing(n: usize) -> Self {
        Permutation((1..=n as u8).rev().collect())
    }

    /// Order-isomorphic standardisation of an arbitrary sequence of distinct
    /// values.
    pub fn standardize<T: Ord>(seq: &[T]) -> Self {
        let mut order: Vec<usize> = (0..seq.len()).collect();
        order.sort_by(|&a, &b| seq[a].cmp(&seq[b]));
        let mut values = vec![0u8; seq.len()];
        for (rank, &pos) in order.iter().enumerate() {
            values[pos] = (rank + 1) as u8;
        }
        Permutation(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn reverse(&self) -> Self {
        Permutation(self.0.iter().rev().copied().collect())
    }

    pub fn complement(&self) -> Self {
        let n = self.len() as u8 + 1;
        Permutation(self.0.iter().map(|&v| n - v).collect())
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u8; self.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v as usize - 1] = (i + 1) as u8;
        }
        Permutation(inv)
    }

    /// Standardisation of the entries at the given 1-based, strictly
    /// increasing positions.
    pub fn subpattern(&self, indices: &[usize]) -> Result<Self, PermError> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(PermError::UnsortedIndices);
            }
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > self.len()) {
            return Err(PermError::IndexOutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        Ok(self.pattern_at(indices.iter().map(|&i| i - 1)))
    }

    /// Pattern induced by 0-based positions, assumed increasing and in range.
    pub(crate) fn pattern_at(&self, positions: impl IntoIterator<Item = usize>) -> Self {
        let picked: Vec<u8> = positions.into_iter().map(|p| self.0[p]).collect();
        Permutation::standardize(&picked)
    }

    pub fn contains(&self, pattern: &Permutation) -> bool {
        let mut found = false;
        occurrences(pattern, self, &mut |_| {
            found = true;
            false
        });
        found
    }

    pub fn is_layered(&self) -> bool {
        self.layers().is_some()
    }

    /// Layer sizes from left to right, or an error if the permutation is not
    /// layered.
    pub fn layer_profile(&self) -> Result<Vec<usize>, PermError> {
        self.layers()
            .ok_or_else(|| PermError::NotLayered(self.to_string()))
    }

    fn layers(&self) -> Option<Vec<usize>> {
        let mut sizes = Vec::new();
        let mut start = 0;
        while start < self.len() {
            // the layer starting at `start` holds values start+1..=top, in
            // decreasing order
            let top = self.0[start] as usize;
            if top <= start {
                return None;
            }
            let size = top - start;
            if start + size > self.len() {
                return None;
            }
            let expected = (start + 1..=top).rev();
            if !self.0[start..start + size]
                .iter()
                .map(|&v| v as usize)
                .eq(expected)
            {
                return None;
            }
            sizes.push(size);
            start += size;
        }
        Some(sizes)
    }

    /// Layered permutation with the given layer sizes.
    pub fn from_layers(sizes: &[usize]) -> Self {
        let mut values = Vec::with_capacity(sizes.iter().sum());
        let mut base = 0;
        for &s in sizes {
            values.extend((base + 1..=base + s).rev().map(|v| v as u8));
            base += s;
        }
        Permutation(values)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 9 {
            for v in &self.0 {
                write!(f, "{v}")?;
            }
            Ok(())
        } else {
            write!(f, "{}", self.0.iter().join(","))
        }
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

impl FromStr for Permutation {
    type Err = PermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = |reason: &str| PermError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let values: Vec<usize> = if s.is_empty() {
            Vec::new()
        } else if s.contains(',') {
            s.split(',')
                .map(|tok| tok.trim().parse::<usize>().map_err(|_| err("bad integer")))
                .collect::<Result<_, _>>()?
        } else {
            if s.len() > 9 {
                return Err(err("permutations longer than 9 must be comma separated"));
            }
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| err("expected digits"))
                })
                .collect::<Result<_, _>>()?
        };
        if values.len() > MAX_LEN || values.iter().any(|&v| v > MAX_LEN) {
            return Err(err("permutation too long"));
        }
        Permutation::new(values.into_iter().map(|v| v as u8).collect()).map_err(|_| {
            err("values must be a bijection on 1..n")
        })
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Walks all occurrences of `pattern` in `text`, calling `visit` with the
/// 0-based positions of each. Stops early when `visit` returns false.
fn occurrences(pattern: &Permutation, text: &Permutation, visit: &mut dyn FnMut(&[usize]) -> bool) {
    let m = pattern.len();
    if m > text.len() {
        return;
    }
    let mut chosen = Vec::with_capacity(m);
    extend(pattern.values(), text.values(), 0, &mut chosen, visit);
}

fn extend(
    pattern: &[u8],
    text: &[u8],
    from: usize,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    let k = chosen.len();
    if k == pattern.len() {
        return visit(chosen);
    }
    let remaining = pattern.len() - k;
    for pos in from..=text.len() - remaining {
        let v = text[pos];
        let consistent = chosen
            .iter()
            .zip(pattern)
            .all(|(&c, &pv)| (text[c] < v) == (pv < pattern[k]));
        if consistent {
            chosen.push(pos);
            let go_on = extend(pattern, text, pos + 1, chosen, visit);
            chosen.pop();
            if !go_on {
                return false;
            }
        }
    }
    true
}

/// Number of position sets of `p` inducing a pattern order-isomorphic to `s`.
pub fn count_occurrences(s: &Permutation, p: &Permutation) -> u64 {
    let mut count = 0u64;
    occurrences(s, p, &mut |_| {
        count += 1;
        true
    });
    count
}

/// `count_occurrences(s, p) / C(|p|, |s|)`, or zero when `p` is shorter.
pub fn density(s: &Permutation, p: &Permutation) -> Rational {
    if s.len() > p.len() {
        return Rational::zero();
    }
    Rational::new(
        BigInt::from(count_occurrences(s, p)),
        BigInt::from(binomial(p.len(), s.len())),
    )
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// A set of forbidden patterns, kept free of patterns made redundant by a
/// smaller member they contain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ForbiddenSet {
    patterns: Vec<Permutation>,
}

impl ForbiddenSet {
    pub fn new(patterns: impl IntoIterator<Item = Permutation>) -> Self {
        let mut all: Vec<Permutation> = patterns.into_iter().collect();
        all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        all.dedup();
        let mut kept: Vec<Permutation> = Vec::new();
        for p in all {
            if !kept.iter().any(|k| p.contains(k)) {
                kept.push(p);
            }
        }
        kept.sort();
        ForbiddenSet { patterns: kept }
    }

    pub fn none() -> Self {
        ForbiddenSet::default()
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, PermError> {
        let patterns = items
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ForbiddenSet::new(patterns))
    }

    pub fn patterns(&self) -> &[Permutation] {
        &self.patterns
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn admits(&self, p: &Permutation) -> bool {
        self.patterns.iter().all(|f| !p.contains(f))
    }

    /// Compact textual form: patterns joined by `+`, or `-` when empty.
    pub fn label(&self) -> String {
        if self.patterns.is_empty() {
            "-".to_string()
        } else {
            self.patterns.iter().join("+")
        }
    }
}

/// All permutations of length `n` in lexicographic order.
pub fn all_permutations(n: usize) -> impl Iterator<Item = Permutation> {
    let mut next = Some((1..=n as u8).collect::<Vec<u8>>());
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            next = Some(succ);
        }
        Some(Permutation(current))
    })
}

fn next_permutation(v: &mut [u8]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Admissible permutations of length `n` in canonical order.
pub fn enumerate(n: usize, forbidden: &ForbiddenSet) -> Vec<Permutation> {
    all_permutations(n).filter(|p| forbidden.admits(p)).collect()
}

/// Like [`enumerate`], optionally restricted to layered permutations.
pub fn enumerate_restricted(n: usize, forbidden: &ForbiddenSet, layered_only: bool) -> Vec<Permutation> {
    if layered_only {
        // compositions of n, ordered to match the lexicographic order of the
        // resulting one-line notation
        let mut out: Vec<Permutation> = compositions(n)
            .into_iter()
            .map(|c| Permutation::from_layers(&c))
            .filter(|p| forbidden.admits(p))
            .collect();
        out.sort();
        out
    } else {
        enumerate(n, forbidden)
    }
}

fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Permutation {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(p("1324").values(), &[1, 3, 2, 4]);
        assert_eq!(p("1324").to_string(), "1324");
        let long = p("10,1,2,3,4,5,6,7,8,9");
        assert_eq!(long.len(), 10);
        assert_eq!(long.to_string(), "10,1,2,3,4,5,6,7,8,9");
        assert_eq!(p("").len(), 0);
        assert!("1224".parse::<Permutation>().is_err());
        assert!("13".parse::<Permutation>().is_err());
        assert!("1a".parse::<Permutation>().is_err());
    }

    #[test]
    fn occurrence_examples() {
        assert_eq!(count_occurrences(&p("12"), &p("132")), 2);
        assert_eq!(count_occurrences(&p("123"), &p("123")), 1);
        assert_eq!(count_occurrences(&p("132"), &p("1324")), 1);
        assert_eq!(count_occurrences(&p("1234"), &p("123")), 0);
        assert_eq!(count_occurrences(&p(""), &p("123")), 1);
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&p("12"), &p("132")), Rational::new(2.into(), 3.into()));
        assert_eq!(density(&p("1"), &p("54321")), Rational::from_integer(1.into()));
        assert_eq!(density(&p("21"), &p("2413")), Rational::new(1.into(), 2.into()));
        assert!(density(&p("123"), &p("12")).is_zero());
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(enumerate(3, &ForbiddenSet::none()).len(), 6);
        let zero = enumerate(0, &ForbiddenSet::none());
        assert_eq!(zero, vec![Permutation::empty()]);
        let av = enumerate(3, &ForbiddenSet::new([p("123")]));
        assert_eq!(av.len(), 5);
        assert!(!av.contains(&p("123")));
        let listed: Vec<String> = enumerate(3, &ForbiddenSet::none()).iter().map(|x| x.to_string()).collect();
        assert_eq!(listed, ["123", "132", "213", "231", "312", "321"]);
    }

    #[test]
    fn factorial_counts() {
        let mut fact = 1usize;
        for n in 0..=7 {
            if n > 0 {
                fact *= n;
            }
            assert_eq!(all_permutations(n).count(), fact);
        }
    }

    #[test]
    fn avoidance_counts_match_catalan_and_known_sequences() {
        // |Av_n(132)| is Catalan, |Av_n(1342)| = 1, 2, 6, 23, 103, 512
        let catalan = [1, 1, 2, 5, 14, 42, 132];
        for (n, &c) in catalan.iter().enumerate() {
            assert_eq!(enumerate(n, &ForbiddenSet::new([p("132")])).len(), c);
        }
        let bona = [1, 2, 6, 23, 103, 512];
        for (i, &c) in bona.iter().enumerate() {
            assert_eq!(enumerate(i + 1, &ForbiddenSet::new([p("2431")])).len(), c);
        }
    }

    #[test]
    fn subpattern_examples() {
        assert_eq!(p("1324").subpattern(&[1, 2, 3]).unwrap(), p("132"));
        assert_eq!(p("2413").subpattern(&[1, 2, 3, 4]).unwrap(), p("2413"));
        assert_eq!(p("321465987").subpattern(&[1, 2, 3, 4]).unwrap(), p("3214"));
        assert!(matches!(
            p("123").subpattern(&[1, 4]),
            Err(PermError::IndexOutOfRange { index: 4, .. })
        ));
        assert!(matches!(p("123").subpattern(&[2, 1]), Err(PermError::UnsortedIndices)));
    }

    #[test]
    fn layered_examples() {
        assert!(p("321465987").is_layered());
        assert!(!p("2413").is_layered());
        assert!(p("1").is_layered());
        assert!(p("").is_layered());
        assert_eq!(p("321465987").layer_profile().unwrap(), vec![3, 1, 2, 3]);
        assert_eq!(p("123").layer_profile().unwrap(), vec![1, 1, 1]);
        assert_eq!(p("4321").layer_profile().unwrap(), vec![4]);
        assert!(p("2413").layer_profile().is_err());
        assert_eq!(Permutation::from_layers(&[3, 1, 2, 3]), p("321465987"));
    }

    #[test]
    fn layered_enumeration_matches_filter() {
        for n in 0..=6 {
            let f = ForbiddenSet::new([p("2413")]);
            let direct: Vec<_> = enumerate(n, &f).into_iter().filter(|q| q.is_layered()).collect();
            assert_eq!(enumerate_restricted(n, &f, true), direct);
        }
    }

    #[test]
    fn forbidden_set_drops_redundant_patterns() {
        let f = ForbiddenSet::new([p("1234"), p("123"), p("321"), p("123")]);
        assert_eq!(f.patterns(), &[p("123"), p("321")]);
        assert_eq!(f.label(), "123+321");
        assert_eq!(ForbiddenSet::none().label(), "-");
    }

    #[test]
    fn partition_identity() {
        for n in 2..=6 {
            for q in all_permutations(n) {
                for m in 0..=n.min(3) {
                    let total: Rational = all_permutations(m).map(|s| density(&s, &q)).sum();
                    assert_eq!(total, Rational::from_integer(1.into()));
                }
            }
        }
    }

    #[test]
    fn max_density_is_non_increasing() {
        for s in all_permutations(3) {
            let mut prev: Option<Rational> = None;
            for n in 3..=6 {
                let best = all_permutations(n).map(|q| density(&s, &q)).max().unwrap();
                if let Some(prev) = prev {
                    assert!(best <= prev, "{s}: {best} > {prev} at n = {n}");
                }
                prev = Some(best);
            }
        }
    }

    #[test]
    fn counts_are_symmetric_under_reverse_and_complement() {
        for n in 0..=6 {
            for q in all_permutations(n) {
                for s in all_permutations(3) {
                    let c = count_occurrences(&s, &q);
                    assert_eq!(c, count_occurrences(&s.reverse(), &q.reverse()));
                    assert_eq!(c, count_occurrences(&s.complement(), &q.complement()));
                }
            }
        }
    }

    fn arb_perm(max: usize) -> impl Strategy<Value = Permutation> {
        (0..=max).prop_flat_map(|n| Just((1..=n as u8).collect::<Vec<u8>>()).prop_shuffle())
            .prop_map(|v| Permutation::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn subpatterns_of_avoiders_avoid(q in arb_perm(8), mask in any::<u8>()) {
            let f = ForbiddenSet::new(["231".parse().unwrap()]);
            prop_assume!(f.admits(&q));
            let idx: Vec<usize> = (1..=q.len()).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            prop_assert!(f.admits(&q.subpattern(&idx).unwrap()));
        }

        #[test]
        fn display_round_trips(q in arb_perm(14)) {
            prop_assert_eq!(q.to_string().parse::<Permutation>().unwrap(), q);
        }

        #[test]
        fn counting_matches_brute_force(q in arb_perm(8), s in arb_perm(4)) {
            let brute = (0..q.len()).combinations(s.len())
                .filter(|c| q.pattern_at(c.iter().copied()) == s)
                .count() as u64;
            prop_assert_eq!(count_occurrences(&s, &q), brute);
        }
    }
}
