use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use permflag_core::certify::{self, read_certificate, write_certificate, DEFAULT_K};
use permflag_core::flag::{enumerate_flags, enumerate_types, TableCache};
use permflag_core::permuton::{self, optim, BlockPermuton, Preset};
use permflag_core::sdp::{assemble_with_cache, crude_bound, emit_sdpa, run_solver, DEFAULT_TIMEOUT_SECS};
use permflag_core::{
    format_rational, rational_to_f64, Admissibility, CertificateError, ForbiddenSet, Permutation, TypePerm,
};

#[derive(Parser)]
#[command(name = "permflag", version, about = "Packing densities of permutation patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List admissible permutations, or the flags of a type
    Enumerate(EnumerateArgs),
    /// Flag-algebra upper bound with an exact certificate
    UpperBound(UpperBoundArgs),
    /// Check a certificate from scratch
    Verify(VerifyArgs),
    /// Evaluate a lower-bound construction
    LowerBound(LowerBoundArgs),
    /// Draw random permutations from a construction
    Sample(SampleArgs),
}

#[derive(Args)]
struct ClassArgs {
    /// Forbidden pattern (repeatable)
    #[arg(long = "forbid", value_name = "PATTERN")]
    forbid: Vec<String>,
    /// Restrict to layered permutations
    #[arg(long)]
    layered_only: bool,
}

impl ClassArgs {
    fn class(&self) -> anyhow::Result<Admissibility> {
        let forbidden = ForbiddenSet::parse(&self.forbid).context("--forbid")?;
        Ok(Admissibility::new(forbidden, self.layered_only))
    }
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    n: usize,
    /// List the flags of this type instead of permutations
    #[arg(long = "type", value_name = "TAU")]
    ty: Option<String>,
    /// List the types of this size instead of permutations
    #[arg(long, conflicts_with = "ty")]
    types: Option<usize>,
    #[command(flatten)]
    class: ClassArgs,
}

#[derive(Args)]
struct UpperBoundArgs {
    /// Density pattern S
    pattern: String,
    /// Length of the admissible permutations
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    class: ClassArgs,
    /// SDP solver executable (CSDP or SDPA calling convention)
    #[arg(long, env = "PERMFLAG_SOLVER")]
    solver: Option<String>,
    /// Round the factors of Q to multiples of 2^-k
    #[arg(long, default_value_t = DEFAULT_K)]
    k: u32,
    /// Solver time limit in seconds
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
    timeout: u64,
    /// Certificate path [default: certs/<pattern>_n<N>[_forb...].json]
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print the bound max p(S, P') without solving
    #[arg(long)]
    crude: bool,
    /// Directory for cached product tables
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Skip re-verifying the written certificate
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct VerifyArgs {
    certificate: PathBuf,
}

#[derive(Args)]
struct SourceArgs {
    /// Named construction
    #[arg(long, conflicts_with = "permuton")]
    preset: Option<String>,
    /// Permuton JSON file
    #[arg(long)]
    permuton: Option<PathBuf>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Pattern to evaluate (defaults to the preset's own pattern)
    #[arg(long)]
    pattern: Option<String>,
    /// Optimise the construction's free parameters before evaluating
    #[arg(long)]
    optimize: bool,
    /// Price's layered optimisation for this layered pattern
    #[arg(long, value_name = "PATTERN", conflicts_with_all = ["preset", "permuton"])]
    price: Option<String>,
    #[arg(long, default_value_t = 40)]
    max_layers: usize,
    /// Also estimate the density by Monte-Carlo sampling
    #[arg(long)]
    mc: bool,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Length of each sampled permutation
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Error with the exit code it should produce.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn compute(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn parse_perm(s: &str, what: &str) -> Result<Permutation, Failure> {
    s.parse::<Permutation>().with_context(|| format!("{what} {s:?}")).map_err(usage)
}

fn cmd_enumerate(args: EnumerateArgs) -> CmdResult {
    let class = args.class.class().map_err(usage)?;
    if let Some(t) = args.types {
        let types = enumerate_types(t, &class);
        for ty in &types {
            println!("{ty}");
        }
        eprintln!("{} types", types.len());
    } else if let Some(tau) = &args.ty {
        let ty = TypePerm::new(parse_perm(tau, "type")?);
        if ty.len() > args.n {
            return Err(usage(anyhow!("type {ty} is longer than n = {}", args.n)));
        }
        let flags = enumerate_flags(args.n, &ty, &class);
        for f in &flags {
            println!("{f}");
        }
        eprintln!("{} flags", flags.len());
    } else {
        let perms = class.enumerate(args.n);
        for p in &perms {
            println!("{p}");
        }
        eprintln!("{} permutations", perms.len());
    }
    Ok(())
}

fn default_output(pattern: &Permutation, n: usize, class: &Admissibility) -> PathBuf {
    let mut name = format!("{pattern}_n{n}");
    if !class.forbidden.is_empty() {
        name.push_str("_forb");
        name.push_str(&class.forbidden.label());
    }
    if class.layered_only {
        name.push_str("_layered");
    }
    PathBuf::from("certs").join(format!("{name}.json"))
}

/// Explicit flag or env var, then `csdp` on PATH, then the bundled adapter.
fn resolve_solver(explicit: Option<String>) -> String {
    if let Some(s) = explicit {
        return s;
    }
    let on_path = std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join("csdp").is_file()))
        .unwrap_or(false);
    if on_path {
        return "csdp".into();
    }
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tools/csdp-clarabel");
    if bundled.is_file() {
        return bundled.to_string_lossy().into_owned();
    }
    "csdp".into()
}

fn cmd_upper_bound(args: UpperBoundArgs) -> CmdResult {
    let pattern = parse_perm(&args.pattern, "pattern")?;
    let class = args.class.class().map_err(usage)?;
    if pattern.len() > args.n {
        return Err(usage(anyhow!("pattern {pattern} is longer than n = {}", args.n)));
    }
    if args.crude {
        let bound = crude_bound(&pattern, args.n, &class).map_err(usage)?;
        println!("crude bound: {} ≈ {:.10}", format_rational(&bound), rational_to_f64(&bound));
        return Ok(());
    }
    let started = Instant::now();
    let cache = args.cache_dir.map(TableCache::new);
    let problem = assemble_with_cache(&pattern, args.n, &class, cache.as_ref())
        .context("assemble")
        .map_err(usage)?;
    println!(
        "pattern {pattern}, N = {}, {} admissible permutations, blocks {:?}",
        args.n,
        problem.constraint_count(),
        problem.block_dims()
    );
    let output = args.output.unwrap_or_else(|| default_output(&pattern, args.n, &class));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(compute)?;
    }
    let sdpa_path = output.with_extension("dat-s");
    emit_sdpa(&problem, &sdpa_path)
        .with_context(|| format!("emit: writing {}", sdpa_path.display()))
        .map_err(compute)?;

    let solver = resolve_solver(args.solver);
    log::info!("solving {} with {solver}", sdpa_path.display());
    let solution = run_solver(&sdpa_path, &solver, Duration::from_secs(args.timeout))
        .context("solve")
        .map_err(compute)?;
    println!("solver objective: {:.10}", solution.objective_value);
    let min_eig = solution.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    println!("smallest Q eigenvalue: {min_eig:.3e}");

    let (cert, exact) = certify::certify(&problem, &solution, args.k)
        .context("round")
        .map_err(compute)?;
    write_certificate(&cert, &output)
        .with_context(|| format!("certify: writing {}", output.display()))
        .map_err(compute)?;
    println!(
        "certified bound: {} ≈ {:.12}",
        format_rational(&exact.bound),
        rational_to_f64(&exact.bound)
    );
    println!("witness: {}", exact.witness);
    println!("certificate: {}", output.display());
    if !args.no_verify {
        let report = certify::verify(&cert).context("verify").map_err(compute)?;
        if !report.passed() {
            println!("{report}");
            return Err(compute(anyhow!("verify: the written certificate does not check")));
        }
        println!("verification: passed");
    }
    log::info!("upper-bound finished in {:.1?}", started.elapsed());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let cert = read_certificate(&args.certificate).map_err(|e| match e {
        CertificateError::Io(_) => usage(anyhow!(e).context(format!("reading {}", args.certificate.display()))),
        other => usage(other),
    })?;
    let report = certify::verify(&cert).map_err(usage)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(compute(anyhow!("certificate {} rejected", args.certificate.display())))
    }
}

fn load_source(source: &SourceArgs) -> Result<(Option<Preset>, BlockPermuton), Failure> {
    match (&source.preset, &source.permuton) {
        (Some(name), _) => {
            let preset = permuton::preset(name).map_err(usage)?;
            let mu = preset.permuton.clone();
            Ok((Some(preset), mu))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?;
            let mu = BlockPermuton::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(usage)?;
            Ok((None, mu))
        }
        (None, None) => Err(usage(anyhow!("give --preset NAME or --permuton FILE"))),
    }
}

fn report_mc(s: &Permutation, mu: &BlockPermuton, value: f64, samples: u64, seed: u64) -> CmdResult {
    let est = permuton::density_mc(s, mu, samples, seed).map_err(usage)?;
    println!(
        "monte-carlo: {:.8} ± {:.2e} ({samples} samples, seed {seed}, {:.2} sigma from exact)",
        est.estimate,
        est.stderr,
        est.sigmas_from(value)
    );
    Ok(())
}

fn cmd_lower_bound(args: LowerBoundArgs) -> CmdResult {
    if let Some(pattern) = &args.price {
        let s = parse_perm(pattern, "pattern")?;
        let r = permuton::price_optimize(&s, args.max_layers).map_err(usage)?;
        println!("pattern {s}: layered lower bound {:.12} with {} layers", r.value, r.layers_used);
        let weights: Vec<String> = r.weights.iter().map(|w| format!("{w:.8}")).collect();
        println!("layer masses (bottom to top): {}", weights.join(" "));
        if args.mc {
            let mu = BlockPermuton::new(permuton::Node::layered(&r.weights)).map_err(compute)?;
            report_mc(&s, &mu, r.value, args.samples, args.seed)?;
        }
        return Ok(());
    }
    let (preset, mut mu) = load_source(&args.source)?;
    let s = match (&args.pattern, &preset) {
        (Some(p), _) => parse_perm(p, "pattern")?,
        (None, Some(preset)) => preset.pattern.clone(),
        (None, None) => return Err(usage(anyhow!("--pattern is required with --permuton"))),
    };
    if args.optimize {
        match preset.as_ref().map(|p| p.name.as_str()) {
            Some("gamma1324") => {
                let opt = permuton::optimize_gamma_1324();
                println!("optimised Γ: a = {:.12}, c = {:.12}", opt.a, opt.c);
                mu = BlockPermuton::new(permuton::gamma_1324(opt.a, opt.c).map_err(compute)?).map_err(compute)?;
            }
            Some("pi1342") => {
                let f = |w: &[f64]| {
                    let w: [f64; 7] = w.try_into().expect("seven weights");
                    permuton::eval_pi_1342(&w).unwrap_or(f64::NEG_INFINITY)
                };
                let (w, _) = optim::compass_max_simplex(f, &permuton::PI_1342_WEIGHTS, 1e-3, 1e-12);
                let w: [f64; 7] = w.try_into().expect("seven weights");
                let weights: Vec<String> = w.iter().map(|x| format!("{x:.10}")).collect();
                println!("optimised Π weights: {}", weights.join(" "));
                mu = BlockPermuton::new(permuton::pi_1342(&w).map_err(compute)?).map_err(compute)?;
            }
            _ => return Err(usage(anyhow!("--optimize applies to the gamma1324 and pi1342 presets"))),
        }
    }
    let value = mu.density_exact(&s);
    match &preset {
        Some(p) => println!("{} ({s}): {value:.12}", p.name),
        None => println!("density of {s}: {value:.12}"),
    }
    if let Some(closed) = preset.as_ref().and_then(|p| p.closed_form).filter(|_| !args.optimize) {
        if args.pattern.is_none() {
            println!("closed form: {closed:.12}");
        }
    }
    if args.mc {
        report_mc(&s, &mu, value, args.samples, args.seed)?;
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> CmdResult {
    let (_, mu) = load_source(&args.source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    for _ in 0..args.count {
        println!("{}", permuton::sample_permutation(&mu, args.n, &mut rng));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::UpperBound(a) => cmd_upper_bound(a),
        Command::Verify(a) => cmd_verify(a),
        Command::LowerBound(a) => cmd_lower_bound(a),
        Command::Sample(a) => cmd_sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
