use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlsd_core::bench::{generate, BenchSpec, Family, TruthFile};
use rlsd_core::diagnostics::{
    certify, check_trace_consistency, compute_reference, select_regimes, CertifyOptions,
    ReferenceSolution, Regime,
};
use rlsd_core::gamma::{admissible_gamma_range, GammaRangeParams};
use rlsd_core::io::{self, Summary, TRUTH_FILE};
use rlsd_core::{Admm, Error, RlsdProblem, SolverConfig, Status, Trace, F3};
use serde::Serialize;

mod manifest;

use manifest::{reference_cache, Outputs, ReferencePolicy, RunConfig, RunManifest};

const EXIT_INPUT: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;
const EXIT_UNCERTIFIED: u8 = 5;

/// Three-block ADMM for regularized least squares decomposition.
#[derive(Parser)]
#[command(name = "rlsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write the trace and summary.
    Solve(SolveArgs),
    /// Check a recorded trace against the convergence certificates for its gamma.
    Certify(CertifyArgs),
    /// Print the admissible penalty range for a quadratic f3.
    GammaRange(GammaArgs),
    /// Generate a synthetic problem bundle.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest (JSON); replaces the flags below.
    #[arg(long, conflicts_with_all = ["problem", "gamma"])]
    manifest: Option<PathBuf>,
    /// Problem bundle (problem.json).
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 3.0)]
    eta1: f64,
    #[arg(long, default_value_t = 4.0)]
    eta2: f64,
    /// Compute the reference solution (or reuse the cached one beside the problem).
    #[arg(long, conflicts_with = "reference")]
    compute_reference: bool,
    /// Reference solution JSON.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Certificate JSON; defaults to the trace path with a .certificate.json extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GammaArgs {
    sigma: f64,
    lipschitz: f64,
    eta1: f64,
    eta2: f64,
    /// Also write the range as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Spcp,
    Background,
    Cpcp,
    Lasso,
}

#[derive(Args)]
struct BenchArgs {
    family: FamilyArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    /// Use the raw Gaussian design (scaled by 1/sqrt(n)) instead of orthonormal columns.
    #[arg(long)]
    raw_design: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

struct Fail {
    code: u8,
    msg: String,
}

impl Fail {
    fn input(msg: impl Into<String>) -> Self {
        Fail {
            code: EXIT_INPUT,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::input(e.to_string())
    }
}

type CmdResult = Result<u8, Fail>;

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which would read as MaxIterations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Certify(a) => cmd_certify(a),
        Command::GammaRange(a) => cmd_gamma_range(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn load_manifest(args: &RunArgs) -> Result<RunManifest, Fail> {
    let m = match &args.manifest {
        Some(path) => {
            let m: RunManifest = io::read_json(path)?;
            m.resolve(path.parent().unwrap_or(Path::new(".")))
        }
        None => RunManifest {
            problem: args.problem.clone().ok_or_else(|| Fail::input("--problem is required"))?,
            config: RunConfig {
                gamma: args.gamma.ok_or_else(|| Fail::input("--gamma is required"))?,
                tol: args.tol,
                max_iter: args.max_iter,
            },
            outputs: Outputs {
                trace: args.trace.clone(),
                ..Outputs::default()
            },
            reference: ReferencePolicy::None,
        },
    };
    m.validate().map_err(Fail::input)?;
    Ok(m)
}

fn solver_config(c: &RunConfig) -> SolverConfig {
    let mut cfg = SolverConfig::new(c.gamma);
    cfg.tol_kkt = c.tol;
    cfg.max_iter = c.max_iter;
    cfg
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let mut m = load_manifest(&args.run)?;
    if args.summary.is_some() {
        m.outputs.summary = args.summary;
        m.validate().map_err(Fail::input)?;
    }
    let p = io::read_problem(&m.problem)?;
    let mut cfg = solver_config(&m.config);
    cfg.record_trace = m.outputs.trace.is_some();
    let res = Admm::new(&p, cfg)?.solve()?;
    if let (Some(path), Some(trace)) = (&m.outputs.trace, &res.trace) {
        io::write_trace_csv(path, &trace.records)?;
    }
    if let Some(path) = &m.outputs.summary {
        io::write_json(path, &Summary::new(&res, m.config.gamma))?;
    }
    println!(
        "{:?} after {} iterations: objective {:e}, kkt {:e}",
        res.status, res.iterations, res.objective, res.kkt.max
    );
    match res.status {
        Status::Converged => Ok(0),
        Status::MaxIterations => Ok(EXIT_MAX_ITER),
        Status::NumericalFailure => {
            eprintln!("error: {}", res.failure.as_deref().unwrap_or("numerical failure"));
            Ok(EXIT_NUMERICAL)
        }
    }
}

fn needs_reference(p: &RlsdProblem, regimes: &[Regime]) -> bool {
    match p.f3() {
        F3::Canonical => regimes.iter().any(|r| matches!(r, Regime::Mid | Regime::Low)),
        F3::Quadratic(_) => regimes.contains(&Regime::ExtendedRange),
    }
}

fn cached_reference(problem_path: &Path, p: &RlsdProblem) -> Result<ReferenceSolution, Fail> {
    let cache = reference_cache(problem_path);
    if cache.exists() {
        let r: ReferenceSolution = io::read_json(&cache)?;
        if r.validate(p).is_ok() {
            return Ok(r);
        }
    }
    let r = compute_reference(p).map_err(|e| Fail::input(format!("reference solve failed: {e}")))?;
    io::write_json(&cache, &r)?;
    Ok(r)
}

fn cmd_certify(args: CertifyArgs) -> CmdResult {
    let mut m = load_manifest(&args.run)?;
    if args.compute_reference {
        m.reference = ReferencePolicy::Compute;
    } else if let Some(path) = args.reference {
        m.reference = ReferencePolicy::Load { path };
    }
    if args.out.is_some() {
        m.outputs.certificate = args.out;
    }
    let trace_path = m
        .outputs
        .trace
        .clone()
        .ok_or_else(|| Fail::input("--trace is required"))?;
    let out = m
        .outputs
        .certificate
        .clone()
        .unwrap_or_else(|| trace_path.with_extension("certificate.json"));
    m.outputs.certificate = Some(out.clone());
    m.validate().map_err(Fail::input)?;

    let p = io::read_problem(&m.problem)?;
    let recorded = io::read_trace_csv(&trace_path)?;
    let opts = CertifyOptions {
        eta1: args.eta1,
        eta2: args.eta2,
        epsilon: None,
    };
    let regimes = select_regimes(&p, m.config.gamma, &opts)?;
    let reference = if needs_reference(&p, &regimes) {
        match &m.reference {
            ReferencePolicy::Compute => Some(cached_reference(&m.problem, &p)?),
            ReferencePolicy::Load { path } => Some(io::read_json::<ReferenceSolution>(path)?),
            ReferencePolicy::None => {
                return Err(Fail::input(format!(
                    "the {} certificate needs a reference solution; pass --compute-reference or --reference",
                    rlsd_core::diagnostics::regime_label(&regimes)
                )))
            }
        }
    } else {
        None
    };

    let cfg = solver_config(&m.config).with_trace(true);
    let replay = Admm::new(&p, cfg.clone())?.run_for(recorded.len() - 1)?;
    let replay = replay.trace.expect("replay records a trace");
    let replay_check = check_trace_consistency(&recorded, &replay.records);
    let common = recorded.len().min(replay.records.len());
    let trace = Trace {
        records: recorded[..common].to_vec(),
        iterates: replay.iterates[..common].to_vec(),
    };
    let mut report = certify(&trace, &p, &cfg, reference.as_ref(), &opts)?;
    report.checks.push(replay_check);
    io::write_json(&out, &report)?;

    println!("regime {} at gamma = {}", report.regime_label(), report.gamma);
    for c in &report.checks {
        println!(
            "  {} {}: worst violation {:e}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.worst_violation
        );
    }
    if !report.all_pass() {
        let failed: Vec<String> = report
            .failed()
            .map(|c| match c.at_iteration {
                Some(k) => format!("{} at iteration {k}", c.name),
                None => c.name.clone(),
            })
            .collect();
        eprintln!("error: failed checks: {}", failed.join(", "));
        return Ok(EXIT_CHECK_FAILED);
    }
    if !report.is_certified() {
        if let Some(note) = &report.note {
            eprintln!("uncertified: {note}");
        }
        return Ok(EXIT_UNCERTIFIED);
    }
    Ok(0)
}

#[derive(Serialize)]
struct GammaRangeOutput<'a> {
    params: GammaRangeParams,
    range: &'a rlsd_core::gamma::IntervalUnion,
    display: String,
}

fn cmd_gamma_range(args: GammaArgs) -> CmdResult {
    let params = GammaRangeParams::new(args.sigma, args.lipschitz, args.eta1, args.eta2)?;
    let range = admissible_gamma_range(&params)?;
    let display = range.display();
    println!("{display}");
    if let Some(path) = &args.json {
        io::write_json(
            path,
            &GammaRangeOutput {
                params,
                range: &range,
                display,
            },
        )?;
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let mut spec = match args.family {
        FamilyArg::Spcp => BenchSpec::spcp(30, 30, args.seed),
        FamilyArg::Background => BenchSpec::background(30, 30, args.seed),
        FamilyArg::Cpcp => BenchSpec::new(Family::CompressivePcp),
        FamilyArg::Lasso => BenchSpec::lasso(50, 20, args.seed),
    };
    spec.seed = args.seed;
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { spec.$field = v; })*
        };
    }
    set!(m, n, p, rank, sparsity, noise, density);
    spec.beta1 = args.beta1.or(spec.beta1);
    spec.beta2 = args.beta2.or(spec.beta2);
    spec.beta = args.beta.or(spec.beta);
    spec.orthonormal = !args.raw_design;

    let generated = generate(&spec)?;
    let path = io::write_problem(&args.out_dir, &generated.problem)?;
    io::write_json(
        &args.out_dir.join(TRUTH_FILE),
        &TruthFile {
            spec,
            truth: generated.truth,
        },
    )?;
    println!("{}", path.display());
    Ok(0)
}
