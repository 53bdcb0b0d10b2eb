//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria that need an SDP solver are skipped when none is available.
//! The N = 7 runs take hours and only execute with `PERMFLAG_EXTENDED=1`.

use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use itertools::Itertools;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use permflag_core::certify::{self, read_certificate, Certificate};
use permflag_core::flag::{enumerate_flags, enumerate_types, flag_density, joint_density};
use permflag_core::perm::{all_permutations, density};
use permflag_core::permuton::{self, PI_1342_WEIGHTS, TABLE3_NAMES};
use permflag_core::sdp::{assemble, crude_bound, write_sdpa, NumericSolution};
use permflag_core::{
    format_rational, parse_rational, rational_to_f64, Admissibility, Flag, ForbiddenSet, Permutation, Rational,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn p(s: &str) -> Permutation {
    s.parse().unwrap()
}

fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

fn permflag(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permflag"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("permflag runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn solver_available() -> bool {
    if std::env::var_os("PERMFLAG_SOLVER").is_some() {
        return true;
    }
    let on_path = std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join("csdp").is_file()))
        .unwrap_or(false);
    on_path
        || Command::new("python3")
            .args(["-c", "import clarabel, numpy, scipy"])
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
}

fn extended() -> bool {
    std::env::var("PERMFLAG_EXTENDED").is_ok_and(|v| v == "1")
}

/// Runs `upper-bound`, then re-verifies the written certificate from disk.
struct BoundRun {
    objective: f64,
    bound: Rational,
    elapsed: Duration,
}

fn upper_bound(dir: &Path, pattern: &str, n: usize, forbid: &[&str]) -> Result<BoundRun, String> {
    let name = format!("{pattern}_n{n}{}.json", forbid.join("_"));
    let n_arg = n.to_string();
    let mut args = vec!["upper-bound", pattern, "--n", &n_arg, "-o", &name];
    for f in forbid {
        args.extend(["--forbid", f]);
    }
    let started = Instant::now();
    let out = permflag(&args, dir);
    let elapsed = started.elapsed();
    if !out.status.success() {
        return Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("")
        ));
    }
    let text = stdout(&out);
    let objective = text
        .lines()
        .find_map(|l| l.strip_prefix("solver objective: "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or("no solver objective in output")?;
    let certificate = dir.join(&name);
    let cert = read_certificate(&certificate).map_err(|e| e.to_string())?;
    let report = certify::verify(&cert).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(format!("certificate rejected\n{report}"));
    }
    let bound = cert.bound_value().ok_or("unparseable bound")?;
    Ok(BoundRun {
        objective,
        bound,
        elapsed,
    })
}

fn criterion_1(dir: &Path) -> Outcome {
    if !solver_available() {
        return Skip("no SDP solver available".into());
    }
    let run = match upper_bound(dir, "132", 3, &[]) {
        Ok(run) => run,
        Err(e) => return Fail(e),
    };
    let lambda = 2.0 * 3f64.sqrt() - 3.0;
    // bound > 2√3 - 3  ⟺  (bound + 3)² > 12
    let shifted = run.bound.clone() + ratio(3, 1);
    let above = shifted.clone() * shifted > ratio(12, 1);
    let b = rational_to_f64(&run.bound);
    let ok = (run.objective - 0.4641016).abs() < 1e-5
        && above
        && b <= lambda + 1e-6
        && run.elapsed < Duration::from_secs(10);
    check(
        ok,
        format!(
            "objective {:.10}, verified bound {:.12} - (2√3-3) = {:.2e}, {:.2?}",
            run.objective,
            b,
            b - lambda,
            run.elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let class = Admissibility::from(ForbiddenSet::new([p("123")]));
    let bound = crude_bound(&p("12"), 3, &class).unwrap();
    check(bound == ratio(2, 3), format!("crude_bound(12, 3, {{123}}) = {}", format_rational(&bound)))
}

fn criterion_3(dir: &Path) -> Outcome {
    if !solver_available() {
        return Skip("no SDP solver available".into());
    }
    let run = match upper_bound(dir, "1342", 6, &["2431"]) {
        Ok(run) => run,
        Err(e) => return Fail(e),
    };
    let target = ratio(19_658_178, 100_000_000);
    check(
        run.bound <= target && run.elapsed < Duration::from_secs(15 * 60),
        format!(
            "objective {:.10}, verified bound {:.10} (target ≤ 0.19658178), {:.1?}",
            run.objective,
            rational_to_f64(&run.bound),
            run.elapsed
        ),
    )
}

fn criterion_4(dir: &Path) -> Outcome {
    if !solver_available() {
        return Skip("no SDP solver available".into());
    }
    let run = match upper_bound(dir, "2413", 6, &[]) {
        Ok(run) => run,
        Err(e) => return Fail(e),
    };
    let ok6 = run.bound >= ratio(104_724, 1_000_000) && run.bound <= ratio(2, 9);
    let mut detail = format!(
        "N=6 verified bound {:.10} in [0.104724, 2/9] ({:.1?})",
        rational_to_f64(&run.bound),
        run.elapsed
    );
    if !extended() {
        detail.push_str("; N=7 not run (PERMFLAG_EXTENDED=1)");
        return check(ok6, detail);
    }
    match upper_bound(dir, "2413", 7, &[]) {
        Ok(run7) => {
            let ok7 = run7.bound <= ratio(10_478_047, 100_000_000);
            detail.push_str(&format!("; N=7 bound {:.10} (≤ 0.10478047)", rational_to_f64(&run7.bound)));
            check(ok6 && ok7, detail)
        }
        Err(e) => Fail(format!("{detail}; N=7: {e}")),
    }
}

fn criterion_5(dir: &Path) -> Outcome {
    if !extended() {
        return Skip("extended N=7 runs (set PERMFLAG_EXTENDED=1)".into());
    }
    if !solver_available() {
        return Skip("no SDP solver available".into());
    }
    let mut details = Vec::new();
    let mut ok = true;
    for (pattern, target) in [("1342", 19_883_729), ("1324", 24_405_455)] {
        match upper_bound(dir, pattern, 7, &[]) {
            Ok(run) => {
                ok &= run.bound <= ratio(target, 100_000_000);
                details.push(format!("{pattern}: {:.10}", rational_to_f64(&run.bound)));
            }
            Err(e) => {
                ok = false;
                details.push(format!("{pattern}: {e}"));
            }
        }
    }
    check(ok, details.join("; "))
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let opt = permuton::optimize_gamma_1324();
    let elapsed = started.elapsed();
    check(
        opt.value > 0.244054321 && elapsed < Duration::from_secs(60),
        format!("Γ optimum {:.12} at a = {:.6}, c = {:.6} ({elapsed:.2?})", opt.value, opt.a, opt.c),
    )
}

fn criterion_7() -> Outcome {
    let started = Instant::now();
    let value = permuton::eval_pi_1342(&PI_1342_WEIGHTS).unwrap();
    let elapsed = started.elapsed();
    check(
        value > 0.198836597 && elapsed < Duration::from_secs(60),
        format!("Π at the stated weights {value:.12} ({elapsed:.2?})"),
    )
}

fn criterion_8() -> Outcome {
    let value = permuton::eval_batkeyev();
    let (first, second) = permuton::batkeyev_closed_forms();
    check(
        (value - 0.1965796).abs() <= 1e-6 && (first - second).abs() <= 1e-12,
        format!("{value:.10}; closed forms differ by {:.1e}", (first - second).abs()),
    )
}

fn criterion_9() -> Outcome {
    let closed: [(&str, f64); 5] = [
        ("23154", 0.160394),
        ("231654", 0.1450317),
        ("231564", 0.0673094),
        ("231645", 0.0673094),
        ("215634", 0.12345679),
    ];
    let truncated: [(&str, f64); 2] = [("14523", 0.15364), ("21354", 0.16515)];
    let mut ok = true;
    let mut worst_sigma = 0.0f64;
    let mut notes = Vec::new();
    for (name, expected) in closed {
        let preset = permuton::preset(name).unwrap();
        let value = preset.closed_form.expect("closed form");
        if (value - expected).abs() > 1e-6 || (value - preset.exact_value()).abs() > 1e-6 {
            ok = false;
            notes.push(format!("{name} = {value:.9}"));
        }
    }
    for (name, expected) in truncated {
        let value = permuton::preset(name).unwrap().exact_value();
        if ((value - expected) * 1e5).floor() != 0.0 {
            ok = false;
            notes.push(format!("{name} = {value:.9}"));
        }
    }
    for (i, name) in TABLE3_NAMES.iter().enumerate() {
        let preset = permuton::preset(name).unwrap();
        let exact = preset.exact_value();
        let est = permuton::density_mc(&preset.pattern, &preset.permuton, 1_000_000, 2024 + i as u64).unwrap();
        let sigmas = est.sigmas_from(exact);
        worst_sigma = worst_sigma.max(sigmas);
        if sigmas > 4.0 {
            ok = false;
            notes.push(format!("{name}: MC {:.6} vs exact {exact:.6}", est.estimate));
        }
    }
    let mut detail = format!("7 presets match; Monte-Carlo worst {worst_sigma:.2}σ at 10⁶ samples");
    if !notes.is_empty() {
        detail = notes.join("; ");
    }
    check(ok, detail)
}

fn criterion_10() -> Outcome {
    let started = Instant::now();
    let r1432 = permuton::price_optimize(&p("1432"), 40).unwrap();
    let r2143 = permuton::price_optimize(&p("2143"), 2).unwrap();
    let elapsed = started.elapsed();
    check(
        r1432.value >= 0.423569 && (r2143.value - 0.375).abs() <= 1e-9 && elapsed < Duration::from_secs(120),
        format!(
            "1432: {:.9} with {} layers; 2143: {:.12} ({elapsed:.1?})",
            r1432.value, r1432.layers_used, r2143.value
        ),
    )
}

/// Σ_s density(s, P) = 1 over all s of each length m ≤ |P|, for |P| ≤ 6.
fn density_partition() -> bool {
    (0..=6).all(|n| {
        all_permutations(n).all(|big| {
            (0..=n).all(|m| all_permutations(m).map(|s| density(&s, &big)).sum::<Rational>() == Rational::one())
        })
    })
}

/// Joint densities against direct enumeration of disjoint position-set pairs.
fn joint_density_brute_force() -> bool {
    let all = Admissibility::default();
    for n in 1..=5usize {
        for t in 0..=2usize.min(n) {
            for ty in enumerate_types(t, &all) {
                for target in all_permutations(n) {
                    for root in (0..n).combinations(t) {
                        let induced: Vec<u8> = root.iter().map(|&i| target.values()[i]).collect();
                        if Permutation::standardize(&induced) != *ty.tau() {
                            continue;
                        }
                        let support: Vec<u8> = root.iter().map(|&i| i as u8 + 1).collect();
                        let pf = Flag::new(target.clone(), support, ty.clone()).unwrap();
                        for m1 in t.max(1)..=n {
                            for m2 in t.max(1)..=n {
                                if m1 + m2 - t > n {
                                    continue;
                                }
                                for s1 in enumerate_flags(m1, &ty, &all) {
                                    for s2 in enumerate_flags(m2, &ty, &all) {
                                        if joint_density(&s1, &s2, &pf).unwrap() != brute_joint(&s1, &s2, &target, &root) {
                                            return false;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    true
}

fn induced_flag(target: &Permutation, set: &[usize], root: &[usize], ty: &permflag_core::TypePerm) -> Flag {
    let one_based: Vec<usize> = set.iter().map(|&i| i + 1).collect();
    let base = target.subpattern(&one_based).unwrap();
    let support: Vec<u8> = root
        .iter()
        .map(|r| set.iter().position(|x| x == r).unwrap() as u8 + 1)
        .collect();
    Flag::new(base, support, ty.clone()).unwrap()
}

fn brute_joint(s1: &Flag, s2: &Flag, target: &Permutation, root: &[usize]) -> Rational {
    let n = target.len();
    let t = root.len();
    let rest: Vec<usize> = (0..n).filter(|i| !root.contains(i)).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    for extra1 in rest.iter().copied().combinations(s1.len() - t) {
        let left: Vec<usize> = rest.iter().copied().filter(|i| !extra1.contains(i)).collect();
        for extra2 in left.into_iter().combinations(s2.len() - t) {
            total += 1;
            let set1: Vec<usize> = root.iter().chain(&extra1).copied().sorted().collect();
            let set2: Vec<usize> = root.iter().chain(&extra2).copied().sorted().collect();
            let ty = s1.flag_type();
            if induced_flag(target, &set1, root, ty) == *s1 && induced_flag(target, &set2, root, ty) == *s2 {
                hits += 1;
            }
        }
    }
    Rational::new(BigInt::from(hits), BigInt::from(total))
}

/// Mean of max |p(s1)p(s2) - p(s1, s2)| over random rooted targets, for n = 3..=9.
fn product_gaps() -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let one = permflag_core::TypePerm::new(p("1"));
    let flags = enumerate_flags(2, &one, &Admissibility::default());
    (3..=9)
        .map(|n| {
            let trials = 40;
            let mut sum = 0.0;
            for _ in 0..trials {
                let mut v: Vec<u8> = (1..=n as u8).collect();
                v.shuffle(&mut rng);
                let root = rand::Rng::random_range(&mut rng, 1..=n as u8);
                let target = Flag::new(Permutation::new(v).unwrap(), vec![root], one.clone()).unwrap();
                let mut worst = 0.0f64;
                for a in &flags {
                    for b in &flags {
                        let prod = flag_density(a, &target).unwrap() * flag_density(b, &target).unwrap();
                        let gap = prod - joint_density(a, b, &target).unwrap();
                        worst = worst.max(rational_to_f64(&gap).abs());
                    }
                }
                sum += worst;
            }
            (n, sum / trials as f64)
        })
        .collect()
}

/// The optimal 132 matrix in closed form, in the tool's flag order.
fn certificate_132() -> Certificate {
    let l = 2.0 * 3f64.sqrt() - 3.0;
    let h = 1.5 * (l - 1.0);
    let hand = [[0.0, 0.0, 0.0, 0.0], [0.0, l, l, h], [0.0, l, l, h], [0.0, h, h, 3.0 * l]];
    let order = [0usize, 2, 3, 1];
    let q = DMatrix::from_fn(4, 4, |i, j| {
        let a = order.iter().position(|&o| o == i).unwrap();
        let b = order.iter().position(|&o| o == j).unwrap();
        hand[a][b]
    });
    let problem = assemble(&p("132"), 3, &Admissibility::default()).unwrap();
    let sol = NumericSolution {
        objective_value: l,
        q_matrices: vec![q],
        solver_log: String::new(),
    };
    certify::certify(&problem, &sol, 30).unwrap().0
}

fn tamperings_rejected() -> Result<(), String> {
    let base = certificate_132();
    if !certify::verify(&base).unwrap().passed() {
        return Err("untampered certificate rejected".into());
    }
    let mut cases: Vec<(&str, Certificate)> = Vec::new();
    let mut c = base.clone();
    c.bound = "1/3".into();
    cases.push(("bound", c));
    let mut c = base.clone();
    let (i, _) = c.l_matrices[0]
        .iter()
        .enumerate()
        .find(|(i, row)| !parse_rational(&row[*i]).unwrap().is_zero())
        .unwrap();
    let d = parse_rational(&c.l_matrices[0][i][i]).unwrap();
    c.l_matrices[0][i][i] = format_rational(&-d);
    cases.push(("diagonal", c));
    let mut c = base.clone();
    c.l_matrices[0][0][3] = "1/2".into();
    cases.push(("upper entry", c));
    let mut c = base.clone();
    c.admissible.pop();
    cases.push(("admissible list", c));
    let mut c = base.clone();
    c.types[0].flags[0].support = vec![2];
    cases.push(("flag support", c));
    for (name, cert) in cases {
        if certify::verify(&cert).map(|r| r.passed()).unwrap_or(false) {
            return Err(format!("tampered {name} accepted"));
        }
    }
    Ok(())
}

fn byte_identical(dir: &Path) -> Result<(), String> {
    if certificate_132().to_json() != certificate_132().to_json() {
        return Err("certificates differ".into());
    }
    let problem = assemble(&p("1342"), 6, &Admissibility::from(ForbiddenSet::new([p("2431")]))).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_sdpa(&problem, &mut a).unwrap();
    write_sdpa(&problem, &mut b).unwrap();
    if a != b {
        return Err("SDPA emissions differ".into());
    }
    let args = ["lower-bound", "--preset", "23154", "--mc", "--samples", "200000", "--seed", "5"];
    let (x, y) = (permflag(&args, dir), permflag(&args, dir));
    if !x.status.success() || x.stdout != y.stdout {
        return Err("lower-bound outputs differ".into());
    }
    let args = ["sample", "--preset", "pi1342", "--n", "12", "--count", "20", "--seed", "9"];
    if permflag(&args, dir).stdout != permflag(&args, dir).stdout {
        return Err("samples differ".into());
    }
    Ok(())
}

fn criterion_11(dir: &Path) -> Outcome {
    let mut failures = Vec::new();
    if !density_partition() {
        failures.push("density partition".to_string());
    }
    if !joint_density_brute_force() {
        failures.push("joint density brute force".to_string());
    }
    let gaps = product_gaps();
    let scaled = gaps.iter().map(|&(n, g)| n as f64 * g).fold(0.0, f64::max);
    let (first, last) = (gaps[0].1, gaps[gaps.len() - 1].1);
    if scaled > 1.0 || last >= first {
        failures.push(format!("product gap {gaps:?}"));
    }
    if let Err(e) = tamperings_rejected() {
        failures.push(e);
    }
    if let Err(e) = byte_identical(dir) {
        failures.push(e);
    }
    if failures.is_empty() {
        Pass(format!(
            "partition, joint brute force, n·gap ≤ {scaled:.3} (gap {first:.3} at n=3 → {last:.3} at n=9), 5 tamperings rejected, re-runs identical"
        ))
    } else {
        Fail(failures.join("; "))
    }
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path();
    type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("132 pipeline", Box::new(|| criterion_1(path))),
        ("crude bound", Box::new(criterion_2)),
        ("restricted 1342 bound", Box::new(|| criterion_3(path))),
        ("2413 bound", Box::new(|| criterion_4(path))),
        ("N=7 bounds for 1342 and 1324", Box::new(|| criterion_5(path))),
        ("Γ lower bound", Box::new(criterion_6)),
        ("Π lower bound", Box::new(criterion_7)),
        ("Batkeyev construction", Box::new(criterion_8)),
        ("longer-pattern constructions", Box::new(criterion_9)),
        ("layered optimisation", Box::new(criterion_10)),
        ("property suites", Box::new(|| criterion_11(path))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
