//! Sparse SDPA (`.dat-s`) emission.
//!
//! Orientation: the solver's primal is `max tr(C X)` subject to
//! `tr(A_i X) = a_i`, `X ⪰ 0`. `X` holds one PSD block per type (the `Q`
//! matrices) and a final diagonal block of slacks `s_{P'}` followed by the
//! bound `b`. Constraint `i` reads `<Q, C(P'_i)> + s_i - b = -p(S, P'_i)`
//! and `C` selects `-b`, so the primal objective is `-b`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use num_bigint::BigInt;

use super::SdpProblem;
use crate::rational_to_f64;
use crate::Rational;

/// Block sizes as written on line 3: positive for dense PSD blocks, negative
/// for diagonal blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStructure {
    pub constraints: usize,
    pub blocks: Vec<i64>,
}

fn render(value: f64) -> String {
    if value == 0.0 {
        "0".to_string()
    } else {
        format!("{value}")
    }
}

pub fn write_sdpa<W: Write>(problem: &SdpProblem, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    let m = problem.constraint_count();
    let psd = problem.tables.len();
    let diag_block = psd + 1;
    let diag_size = m + 1;

    writeln!(w, "{m}")?;
    writeln!(w, "{}", psd + 1)?;
    let sizes: Vec<String> = problem
        .tables
        .iter()
        .map(|t| t.dim().to_string())
        .chain(std::iter::once(format!("-{diag_size}")))
        .collect();
    writeln!(w, "{}", sizes.join(" "))?;
    let rhs: Vec<String> = problem
        .objective_densities
        .iter()
        .map(|d| render(-rational_to_f64(d)))
        .collect();
    writeln!(w, "{}", rhs.join(" "))?;

    writeln!(w, "0 {diag_block} {diag_size} {diag_size} -1")?;
    for constraint in 0..m {
        let c = constraint + 1;
        for (b, table) in problem.tables.iter().enumerate() {
            let den = BigInt::from(table.denominator());
            for &(i, j, count) in table.cells(constraint) {
                let value = rational_to_f64(&Rational::new(BigInt::from(count), den.clone()));
                writeln!(w, "{c} {} {} {} {}", b + 1, i + 1, j + 1, render(value))?;
            }
        }
        writeln!(w, "{c} {diag_block} {c} {c} 1")?;
        writeln!(w, "{c} {diag_block} {diag_size} {diag_size} -1")?;
    }
    w.flush()
}

/// Writes the problem to `path` in sparse SDPA format.
pub fn emit_sdpa(problem: &SdpProblem, path: &Path) -> io::Result<()> {
    let file = fs::File::create(path)?;
    write_sdpa(problem, file)
}

/// Reads the constraint count and block sizes from the head of an SDPA
/// sparse file, skipping leading comment lines.
pub fn read_block_structure(text: &str) -> Option<BlockStructure> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let first_int = |line: &str| -> Option<i64> {
        line.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}')
            .find(|t| !t.is_empty())?
            .parse()
            .ok()
    };
    let constraints = first_int(lines.next()?)? as usize;
    let count = first_int(lines.next()?)? as usize;
    let blocks: Vec<i64> = lines
        .next()?
        .split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}' || c == '(' || c == ')')
        .filter(|t| !t.is_empty())
        .take(count)
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    (blocks.len() == count).then_some(BlockStructure { constraints, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag::Admissibility;
    use crate::sdp::assemble;

    fn emit(pattern: &str, n: usize) -> String {
        let problem = assemble(&pattern.parse().unwrap(), n, &Admissibility::default()).unwrap();
        let mut buf = Vec::new();
        write_sdpa(&problem, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_for_132() {
        let text = emit("132", 3);
        let head: Vec<&str> = text.lines().take(5).collect();
        assert_eq!(head, ["6", "2", "4 -7", "0 -1 0 0 0 0", "0 2 7 7 -1"]);
        assert_eq!(
            read_block_structure(&text),
            Some(BlockStructure {
                constraints: 6,
                blocks: vec![4, -7]
            })
        );
    }

    #[test]
    fn trivial_problem_has_two_constraints() {
        let text = emit("12", 2);
        assert_eq!(text.lines().next(), Some("2"));
        assert_eq!(text.lines().nth(2), Some("1 -3"));
    }

    #[test]
    fn emission_is_byte_identical() {
        assert_eq!(emit("2413", 5), emit("2413", 5));
    }

    #[test]
    fn entries_are_upper_triangular_and_nonzero() {
        for line in emit("132", 5).lines().skip(4) {
            let f: Vec<&str> = line.split(' ').collect();
            let (i, j): (usize, usize) = (f[2].parse().unwrap(), f[3].parse().unwrap());
            assert!(i <= j);
            assert_ne!(f[4].parse::<f64>().unwrap(), 0.0);
            assert!(!f[4].contains('e'));
        }
    }

    #[test]
    fn block_structure_tolerates_comments_and_braces() {
        let text = "\"comment\n* more\n3 = mDIM\n2 = nBLOCK\n{4, -5}\n";
        assert_eq!(
            read_block_structure(text),
            Some(BlockStructure {
                constraints: 3,
                blocks: vec![4, -5]
            })
        );
    }
}
