//! Running an external SDP solver and reading its answer.
//!
//! The solver is invoked as `solver <problem.dat-s> <solution-file>`, which
//! is the calling convention of both `csdp` and `sdpa`. Output is parsed as
//! CSDP first (objective on stdout, `matno block i j value` lines in the
//! solution file), then as SDPA (`objValDual` and `yMat` in the output file).

use std::fs;
use std::io::{self, Read};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::sdpa::{read_block_structure, BlockStructure};
use super::NumericSolution;
use crate::error::SolverError;

pub const DEFAULT_TIMEOUT_SECS: u64 = 3600;

/// CSDP exit code for "solved to partial accuracy".
const CSDP_PARTIAL_SUCCESS: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStyle {
    Csdp,
    Sdpa,
}

fn drain<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Solves the SDPA file at `problem` with `solver`, killing it after
/// `timeout`. The solution file is written next to the problem file.
pub fn run_solver(problem: &Path, solver: &str, timeout: Duration) -> Result<NumericSolution, SolverError> {
    let text = fs::read_to_string(problem)?;
    let structure = read_block_structure(&text).ok_or_else(|| SolverError::Unparseable {
        reason: format!("{} is not a sparse SDPA file", problem.display()),
        log: String::new(),
    })?;
    let solution_path = problem.with_extension("sol");
    let _ = fs::remove_file(&solution_path);

    let mut child = Command::new(solver)
        .arg(problem)
        .arg(&solution_path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => SolverError::NotFound(solver.to_string()),
            _ => SolverError::Io(e),
        })?;
    let stdout = drain(child.stdout.take().expect("piped stdout"));
    let stderr = drain(child.stderr.take().expect("piped stderr"));

    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if started.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(20));
    };
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    let mut log = format!("$ {solver} {} {}\n{out}", problem.display(), solution_path.display());
    if !err.is_empty() {
        log.push_str("\n[stderr]\n");
        log.push_str(&err);
    }

    let status = match status {
        Some(status) => status,
        None => {
            return Err(SolverError::Timeout {
                seconds: timeout.as_secs(),
                log,
            })
        }
    };
    match status.code() {
        Some(0) => {}
        Some(CSDP_PARTIAL_SUCCESS) => log.push_str("\n[note] solver reported partial success\n"),
        code => return Err(SolverError::NonZeroExit { code, log }),
    }

    let solution = fs::read_to_string(&solution_path).unwrap_or_default();
    let parsed = parse_csdp_output(&out, &solution, &structure)
        .map(|s| (SolverStyle::Csdp, s))
        .or_else(|csdp_reason| {
            let sdpa_text = if solution.contains("yMat") { &solution } else { &out };
            parse_sdpa_output(sdpa_text, &structure)
                .map(|s| (SolverStyle::Sdpa, s))
                .map_err(|sdpa_reason| format!("as csdp: {csdp_reason}; as sdpa: {sdpa_reason}"))
        });
    match parsed {
        Ok((style, (objective, q_matrices))) => {
            log.push_str(&format!("\n[parsed as {style:?} output]\n"));
            Ok(NumericSolution {
                objective_value: objective,
                q_matrices,
                solver_log: log,
            })
        }
        Err(reason) => Err(SolverError::Unparseable { reason, log }),
    }
}

type Parsed = (f64, Vec<DMatrix<f64>>);

fn psd_blocks(structure: &BlockStructure) -> Vec<DMatrix<f64>> {
    structure
        .blocks
        .iter()
        .filter(|&&b| b > 0)
        .map(|&b| DMatrix::zeros(b as usize, b as usize))
        .collect()
}

/// Maps 1-based block numbers to indices among the PSD blocks.
fn psd_index(structure: &BlockStructure) -> Vec<Option<usize>> {
    let mut next = 0;
    structure
        .blocks
        .iter()
        .map(|&b| {
            (b > 0).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// CSDP layout: the primal objective `tr(CX) = -b` on stdout, and the primal
/// matrix `X` as `2 block i j value` lines in the solution file.
pub fn parse_csdp_output(stdout: &str, solution: &str, structure: &BlockStructure) -> Result<Parsed, String> {
    let objective = stdout
        .lines()
        .find_map(|l| l.trim().strip_prefix("Primal objective value:"))
        .ok_or("no `Primal objective value:` line")?
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad objective: {e}"))?;
    let mut lines = solution.lines().filter(|l| !l.trim().is_empty());
    let y_line = lines.next().ok_or("empty solution file")?;
    let y_count = y_line.split_whitespace().count();
    if y_count != structure.constraints {
        return Err(format!("expected {} dual values, found {y_count}", structure.constraints));
    }
    let mut blocks = psd_blocks(structure);
    let index = psd_index(structure);
    let mut seen_x = false;
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(format!("malformed solution line {line:?}"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| format!("bad index in {line:?}"));
        let (matno, block, i, j) = (parse_usize(f[0])?, parse_usize(f[1])?, parse_usize(f[2])?, parse_usize(f[3])?);
        let value: f64 = f[4].parse().map_err(|_| format!("bad value in {line:?}"))?;
        if matno != 2 {
            continue;
        }
        seen_x = true;
        let Some(Some(b)) = index.get(block.wrapping_sub(1)) else {
            continue;
        };
        let q = &mut blocks[*b];
        if i == 0 || j == 0 || i > q.nrows() || j > q.nrows() {
            return Err(format!("index out of range in {line:?}"));
        }
        q[(i - 1, j - 1)] = value;
        q[(j - 1, i - 1)] = value;
    }
    if !seen_x {
        return Err("solution file has no primal matrix entries".into());
    }
    Ok((-objective, blocks))
}

fn numbers_after(text: &str, key: &str) -> Option<Vec<f64>> {
    let start = text.find(key)? + key.len();
    let rest = &text[start..];
    let rest = rest.trim_start().strip_prefix('=').unwrap_or(rest);
    Some(
        rest.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}')
            .map_while(|t| if t.is_empty() { Some(None) } else { t.parse::<f64>().ok().map(Some) })
            .flatten()
            .collect(),
    )
}

/// SDPA layout: in SDPA's naming our `Q` blocks are the dual matrix `yMat`
/// and `objValDual = tr(F0 Y) = -b`.
pub fn parse_sdpa_output(text: &str, structure: &BlockStructure) -> Result<Parsed, String> {
    let objective = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("objValDual"))
        .and_then(|rest| rest.trim().trim_start_matches('=').trim().parse::<f64>().ok())
        .ok_or("no `objValDual` line")?;
    let values = numbers_after(text, "yMat").ok_or("no `yMat` section")?;
    let mut blocks = Vec::new();
    let mut pos = 0;
    for &b in &structure.blocks {
        let size = b.unsigned_abs() as usize;
        let needed = if b > 0 { size * size } else { size };
        if pos + needed > values.len() {
            return Err(format!("yMat ends early: need {} values, found {}", pos + needed, values.len()));
        }
        if b > 0 {
            blocks.push(DMatrix::from_row_slice(size, size, &values[pos..pos + needed]));
        }
        pos += needed;
    }
    Ok((-objective, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structure() -> BlockStructure {
        BlockStructure {
            constraints: 2,
            blocks: vec![2, -3],
        }
    }

    #[test]
    fn csdp_layout() {
        let stdout = "Iter: 10\nSuccess: SDP solved\nPrimal objective value: -4.6410162e-01\nDual objective value: -4.6410162e-01\n";
        let solution = "0.1 0.2\n1 1 1 1 0.5\n2 1 1 1 0.25\n2 1 1 2 -0.5\n2 1 2 2 1.0\n2 2 1 1 0.3\n";
        let (obj, q) = parse_csdp_output(stdout, solution, &structure()).unwrap();
        assert!((obj - 0.46410162).abs() < 1e-12);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0][(0, 1)], -0.5);
        assert_eq!(q[0][(1, 0)], -0.5);
        assert_eq!(q[0][(1, 1)], 1.0);
    }

    #[test]
    fn csdp_layout_rejects_garbage() {
        assert!(parse_csdp_output("nothing here", "", &structure()).is_err());
        assert!(parse_csdp_output("Primal objective value: 1", "0.1 0.2\n2 1 1\n", &structure()).is_err());
        assert!(parse_csdp_output("Primal objective value: 1", "0.1\n2 1 1 1 1\n", &structure()).is_err());
    }

    #[test]
    fn sdpa_layout() {
        let text = "objValPrimal = -4.6e-01\nobjValDual   = -4.6410162e-01\nxVec = \n{1,2}\nxMat = \n{\n{ {1, 0}, {0, 1} }\n{0, 0, 0}\n}\nyMat = \n{\n{ {+2.5e-01,-5.0e-01 }, {-5.0e-01,+1.0e+00 } }\n{+1.0e-01,+2.0e-01,+3.0e-01 }\n}\n    main loop time = 0.01\n";
        let (obj, q) = parse_sdpa_output(text, &structure()).unwrap();
        assert!((obj - 0.46410162).abs() < 1e-12);
        assert_eq!(q[0][(0, 0)], 0.25);
        assert_eq!(q[0][(1, 0)], -0.5);
        assert_eq!(q[0][(1, 1)], 1.0);
    }

    #[test]
    fn sdpa_layout_reports_truncation() {
        let text = "objValDual = -1\nyMat = \n{ { {1, 2}, {2} } }\n";
        assert!(parse_sdpa_output(text, &structure()).is_err());
    }

    #[test]
    fn missing_executable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dat-s");
        fs::write(&path, "1\n1\n-2\n0\n0 1 2 2 -1\n1 1 1 1 1\n").unwrap();
        let err = run_solver(&path, "/nonexistent/permflag-solver", Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, SolverError::NotFound(_)));
    }

    #[cfg(unix)]
    fn script(dir: &Path, body: &str) -> String {
        use std::os::unix::fs::PermissionsExt;
        let path = dir.join("fake-solver");
        fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_failures_are_distinguished() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dat-s");
        fs::write(&path, "1\n2\n1 -2\n0\n0 2 2 2 -1\n1 1 1 1 1\n").unwrap();

        let failing = script(dir.path(), "echo infeasible; exit 1");
        match run_solver(&path, &failing, Duration::from_secs(5)) {
            Err(SolverError::NonZeroExit { code: Some(1), log }) => assert!(log.contains("infeasible")),
            other => panic!("unexpected {other:?}"),
        }

        let slow = script(dir.path(), "sleep 5");
        assert!(matches!(
            run_solver(&path, &slow, Duration::from_millis(200)),
            Err(SolverError::Timeout { .. })
        ));

        let chatty = script(dir.path(), "echo hello");
        assert!(matches!(
            run_solver(&path, &chatty, Duration::from_secs(5)),
            Err(SolverError::Unparseable { .. })
        ));

        let good = script(
            dir.path(),
            "echo 'Primal objective value: -1.0e+00'; printf '0.5\\n2 1 1 1 0.75\\n2 2 1 1 0\\n' > \"$2\"",
        );
        let sol = run_solver(&path, &good, Duration::from_secs(5)).unwrap();
        assert_eq!(sol.objective_value, 1.0);
        assert_eq!(sol.q_matrices[0][(0, 0)], 0.75);
        assert!(sol.solver_log.contains("Csdp"));
    }
}
