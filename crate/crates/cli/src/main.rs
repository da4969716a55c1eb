//! `rivkit` command-line tool.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage error |
//! | 3 | I/O error |
//! | 4 | malformed input file or value |
//! | 5 | `NEGATIVE_REAL_POLE` |
//! | 6 | other model-domain error |
//! | 7 | `NON_UNIFORM_SAMPLING` |
//! | 8 | `NOT_CONVERGED` |
//! | 9 | `SINGULAR_NORMAL_MATRIX` |
//! | 10 | `PEM_DIVERGED` |
//! | 11 | `NOT_EQUIVALENT` |
//! | 12 | any other failure |

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rivkit::estimators::{
    check_equivalence, dt_numerator_degree, least_squares_init, linked_init, run_estimator,
    EstimationReport, EstimatorConfig, EstimatorKind, Init, TimeDomain,
};
use rivkit::filtering::{SampledSignal, SystemModel};
use rivkit::sampling::{inverse_zoh, zoh_discretize};
use rivkit::simulation::{monte_carlo, run_log_csv, ExperimentSpec, RNG_ALGORITHM};
use rivkit::{CtModel, DtModel, NoiseModel};

use crate::config::Config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    NonUniformSampling(String),
    NotConverged(String),
    NotEquivalent(String),
    Core(rivkit::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::NonUniformSampling(_) => 7,
            CliError::NotConverged(_) => 8,
            CliError::NotEquivalent(_) => 11,
            CliError::Core(e) => match e {
                rivkit::Error::NegativeRealPole => 5,
                rivkit::Error::NotConverged => 8,
                rivkit::Error::SingularNormalMatrix(_) => 9,
                rivkit::Error::PemDiverged => 10,
                rivkit::Error::InvalidInput(_) | rivkit::Error::InsufficientData(_) => 4,
                rivkit::Error::TooManyFailures { .. } => 12,
                _ => 6,
            },
        }
    }

    fn token(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "USAGE",
            CliError::Io(_) => "IO_ERROR",
            CliError::Parse(_) => "PARSE_ERROR",
            CliError::NonUniformSampling(_) => "NON_UNIFORM_SAMPLING",
            CliError::NotConverged(_) => "NOT_CONVERGED",
            CliError::NotEquivalent(_) => "NOT_EQUIVALENT",
            CliError::Core(e) => e.token(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m)
            | CliError::Io(m)
            | CliError::Parse(m)
            | CliError::NonUniformSampling(m)
            | CliError::NotConverged(m)
            | CliError::NotEquivalent(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<rivkit::Error> for CliError {
    fn from(e: rivkit::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "rivkit", version, about = "Refined instrumental-variable identification of sampled systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ZOH-discretize a CT parameter vector [a_1..a_n, b_0..b_m].
    C2d(TransformArgs),
    /// Map a DT parameter vector [alpha_1..alpha_n, beta_0..] to CT.
    D2c(TransformArgs),
    /// Generate a t,u,y data file from an experiment config.
    Simulate(SimulateArgs),
    /// Estimate a model from a t,u,y data file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment described by a config file.
    Montecarlo(MonteCarloArgs),
    /// Run a built-in Monte Carlo benchmark.
    Benchmark(BenchmarkArgs),
    /// Check that a DT and a CT estimator reach linked limiting points.
    Equivalence(EquivalenceArgs),
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Model order.
    #[arg(long)]
    n: usize,
    /// Sampling period in seconds.
    #[arg(long)]
    h: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config; the built-in fourth-order benchmark when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Noise realization index.
    #[arg(long, default_value_t = 0)]
    run: usize,
    #[arg(long)]
    noise_free: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// sriv, riv, srivc, rivc, asriv or ariv.
    #[arg(long)]
    method: String,
    #[arg(long)]
    n: usize,
    /// Numerator degree (in q for sriv/riv, in p otherwise).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    nd: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    n_skip: usize,
    /// `ls` or a parameter vector file.
    #[arg(long, default_value = "ls")]
    init: String,
    #[arg(long)]
    no_stabilize: bool,
    #[arg(long)]
    output: PathBuf,
    /// Diagnostics JSON; defaults to the output path with a `.json` extension.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Per-run log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    RaoGarnier,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(value_enum)]
    name: Benchmark,
    #[arg(long, default_value_t = 500)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated estimators; Table-style default sriv,asriv,riv,ariv.
    #[arg(long)]
    methods: Option<String>,
    /// MSE table CSV; written to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[arg(long)]
    data: PathBuf,
    /// riv, sriv, ariv or asriv.
    #[arg(long)]
    dt_method: String,
    /// rivc or srivc.
    #[arg(long)]
    ct_method: String,
    #[arg(long)]
    n: usize,
    /// CT numerator degree.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    nd: usize,
    /// Shared CT initialization: `ls` or a CT parameter vector file.
    #[arg(long, default_value = "ls")]
    init: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
}

fn ct_labels(n: usize, nb: usize) -> Vec<String> {
    (1..=n)
        .map(|i| format!("a_{i}"))
        .chain((0..nb).map(|i| format!("b_{i}")))
        .collect()
}

fn dt_labels(n: usize, nb: usize, numerator: &str) -> Vec<String> {
    (1..=n)
        .map(|i| format!("alpha_{i}"))
        .chain((0..nb).map(|i| format!("{numerator}_{i}")))
        .collect()
}

fn model_labels(model: &SystemModel) -> Vec<String> {
    let (n, nb) = (model.n(), model.numerator_len());
    match model {
        SystemModel::Continuous(_) => ct_labels(n, nb),
        SystemModel::Discrete(_) => dt_labels(n, nb, "beta"),
        SystemModel::Adapted(_) => dt_labels(n, nb, "gamma"),
    }
}

fn cmd_c2d(args: &TransformArgs) -> Result<(), CliError> {
    let theta = io::read_vector(&args.input)?;
    let ct = CtModel::from_params(&theta, args.n)?;
    let dt = zoh_discretize(&ct, args.h)?;
    io::write_vector(&args.output, &dt_labels(dt.n(), dt.beta().len(), "beta"), &dt.params())
}

fn cmd_d2c(args: &TransformArgs) -> Result<(), CliError> {
    let theta = io::read_vector(&args.input)?;
    let dt = DtModel::from_params(&theta, args.n, args.h)?;
    let ct = inverse_zoh(&dt)?;
    io::write_vector(&args.output, &ct_labels(ct.n(), ct.b().len()), &ct.params())
}

const SPEC_KEYS: &[&str] = &[
    "system_a",
    "system_b",
    "noise_c",
    "noise_d",
    "h",
    "samples",
    "freqs",
    "amps",
    "phases",
    "noise_variance",
    "runs",
    "seed",
    "methods",
    "max_iter",
    "tol",
];

/// Experiment from a config file; unspecified keys keep the built-in
/// benchmark values.
fn spec_from_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = io::read_text(path)?;
    let perr = |m: String| CliError::Parse(format!("{}: {m}", path.display()));
    let cfg = Config::parse(&text).map_err(perr)?;
    cfg.check_keys(SPEC_KEYS).map_err(perr)?;
    let mut spec = ExperimentSpec::rao_garnier(1, 0);
    let a = cfg.array::<f64>("system_a").map_err(perr)?;
    let b = cfg.array::<f64>("system_b").map_err(perr)?;
    if a.is_some() || b.is_some() {
        spec.system = CtModel::new(
            a.unwrap_or_else(|| spec.system.a().to_vec()),
            b.unwrap_or_else(|| spec.system.b().to_vec()),
        )?;
    }
    let c = cfg.array::<f64>("noise_c").map_err(perr)?;
    let d = cfg.array::<f64>("noise_d").map_err(perr)?;
    if c.is_some() || d.is_some() {
        spec.noise = NoiseModel::new(
            c.unwrap_or_else(|| spec.noise.c().to_vec()),
            d.unwrap_or_else(|| spec.noise.d().to_vec()),
        )?;
    }
    if let Some(v) = cfg.scalar("h").map_err(perr)? {
        spec.h = v;
    }
    if let Some(v) = cfg.scalar("samples").map_err(perr)? {
        spec.n_samples = v;
    }
    if let Some(v) = cfg.array("freqs").map_err(perr)? {
        spec.freqs = v;
    }
    if let Some(v) = cfg.array("amps").map_err(perr)? {
        spec.amps = v;
    }
    if let Some(v) = cfg.array("phases").map_err(perr)? {
        spec.phases = v;
    }
    if let Some(v) = cfg.scalar("noise_variance").map_err(perr)? {
        spec.noise_variance = v;
    }
    if let Some(v) = cfg.scalar("runs").map_err(perr)? {
        spec.runs = v;
    }
    if let Some(v) = cfg.scalar("seed").map_err(perr)? {
        spec.seed = v;
    }
    if let Some(v) = cfg.array::<String>("methods").map_err(perr)? {
        spec.methods = parse_methods(&v)?;
    }
    if let Some(v) = cfg.scalar("max_iter").map_err(perr)? {
        spec.max_iter = v;
    }
    if let Some(v) = cfg.scalar("tol").map_err(perr)? {
        spec.tol = v;
    }
    spec.validate().map_err(|e| perr(e.to_string()))?;
    Ok(spec)
}

fn parse_method(s: &str) -> Result<EstimatorKind, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("unknown method '{s}'")))
}

fn parse_methods<S: AsRef<str>>(items: &[S]) -> Result<Vec<EstimatorKind>, CliError> {
    items.iter().map(|s| parse_method(s.as_ref())).collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(p) => spec_from_config(p)?,
        None => ExperimentSpec::rao_garnier(1, 0),
    };
    let u = spec.input()?;
    let clean = SystemModel::Continuous(spec.system.clone()).simulate(&u)?;
    let noise = if args.noise_free {
        SampledSignal::zeros(u.len(), spec.h)
    } else {
        spec.noise_realization(args.run)?
    };
    let y: Vec<f64> = clean.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
    let t: Vec<f64> = (1..=u.len()).map(|k| k as f64 * spec.h).collect();
    io::write_data(&args.output, &t, u.values(), &y)?;
    println!("snr_db={}", rivkit::simulation::snr(&clean, &noise)?);
    Ok(())
}

fn signals(path: &Path) -> Result<(SampledSignal, SampledSignal), CliError> {
    let data = io::read_data(path)?;
    let h = io::uniform_period(&data.t)?;
    Ok((SampledSignal::new(data.u, h)?, SampledSignal::new(data.y, h)?))
}

fn diagnostics(report: &EstimationReport) -> serde_json::Value {
    json!({
        "method": report.kind.name(),
        "iterations": report.iterations,
        "converged": report.converged,
        "condition_numbers": report.condition_numbers(),
        "residual_norms": report.trace.iter().map(|r| r.residual_norm).collect::<Vec<_>>(),
        "noise": { "c": report.eta_final.c(), "d": report.eta_final.d() },
        "dt_numerator": report.dt_numerator,
        "warnings": report.warnings,
        "failure": report.failure.as_ref().map(|e| e.token()),
    })
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let kind = parse_method(&args.method)?;
    let (u, y) = signals(&args.data)?;
    let init = if args.init == "ls" {
        Init::LeastSquares
    } else {
        Init::Given(io::read_vector(Path::new(&args.init))?)
    };
    let mut cfg = EstimatorConfig::new(args.n, args.m)
        .with_noise_orders(args.mc, args.nd)
        .with_init(init);
    cfg.tol = args.tol;
    cfg.max_iter = args.max_iter;
    cfg.n_skip = args.n_skip;
    cfg.stabilize = !args.no_stabilize;
    let report = run_estimator(kind, &cfg, &u, &y)?;
    io::write_vector(&args.output, &model_labels(&report.model), &report.theta_final)?;
    let sidecar = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| args.output.with_extension("json"));
    let text = serde_json::to_string_pretty(&diagnostics(&report))
        .map_err(|e| CliError::Io(e.to_string()))?;
    io::write_text(&sidecar, &text)?;
    if let Some(e) = report.failure {
        return Err(CliError::Core(e));
    }
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "no convergence after {} iterations",
            report.iterations
        )));
    }
    Ok(())
}

/// Run `f` on a rayon pool sized by `RIVKIT_THREADS` (0 or unset: automatic).
fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let threads = match std::env::var("RIVKIT_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Parse(format!("RIVKIT_THREADS='{s}' is not a count")))?,
        _ => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(f))
}

fn run_experiment(spec: &ExperimentSpec, output: Option<&Path>, log: Option<&Path>) -> Result<(), CliError> {
    let (table, runs) = with_pool(|| monte_carlo(spec))??;
    match output {
        Some(p) => {
            io::write_text(p, &table.to_csv())?;
            println!("rng={RNG_ALGORITHM}");
            println!("seed={}", spec.seed);
            println!("runs={}", spec.runs);
        }
        None => print!("{}", table.to_csv()),
    }
    if let Some(p) = log {
        io::write_text(p, &run_log_csv(&runs))?;
    }
    Ok(())
}

fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<(), CliError> {
    let spec = spec_from_config(&args.spec)?;
    run_experiment(&spec, Some(&args.output), args.log.as_deref())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), CliError> {
    let mut spec = match args.name {
        Benchmark::RaoGarnier => ExperimentSpec::rao_garnier(args.runs, args.seed),
    };
    if let Some(m) = &args.methods {
        let items: Vec<&str> = m.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        spec.methods = parse_methods(&items)?;
    }
    spec.validate()?;
    if args.output.is_some() {
        println!("snr_db={}", spec.snr()?);
    }
    run_experiment(&spec, args.output.as_deref(), args.log.as_deref())
}

fn cmd_equivalence(args: &EquivalenceArgs) -> Result<(), CliError> {
    let dt_kind = parse_method(&args.dt_method)?;
    let ct_kind = parse_method(&args.ct_method)?;
    if dt_kind.domain != TimeDomain::Discrete || ct_kind.domain != TimeDomain::Continuous {
        return Err(CliError::Usage("need a DT method and a CT method".into()));
    }
    let (u, y) = signals(&args.data)?;
    let ct0 = if args.init == "ls" {
        match least_squares_init(&u, &y, args.n, args.m, TimeDomain::Continuous)? {
            SystemModel::Continuous(ct) => ct,
            _ => unreachable!("CT initialization returns a CT model"),
        }
    } else {
        CtModel::from_params(&io::read_vector(Path::new(&args.init))?, args.n)?
    };
    let config = |kind: EstimatorKind, m: usize, init: Vec<f64>| {
        let mut cfg = EstimatorConfig::new(args.n, m).with_init(Init::Given(init));
        if kind.noise_modeled {
            cfg = cfg.with_noise_orders(args.mc, args.nd);
        }
        cfg.tol = args.tol;
        cfg.max_iter = args.max_iter;
        cfg
    };
    let dt_m = dt_numerator_degree(dt_kind, args.n, args.m);
    let dt_cfg = config(dt_kind, dt_m, linked_init(dt_kind, &ct0, u.h())?);
    let ct_cfg = config(ct_kind, args.m, ct0.params());
    let dt = run_estimator(dt_kind, &dt_cfg, &u, &y)?;
    let ct = run_estimator(ct_kind, &ct_cfg, &u, &y)?;
    let verdict = check_equivalence(&dt, &ct, args.threshold)?;
    println!("deviation={}", io::fmt_num(verdict.deviation));
    println!("numerator_deviation={}", io::fmt_num(verdict.numerator_deviation));
    println!("equivalent={}", verdict.equivalent);
    if verdict.equivalent {
        Ok(())
    } else {
        Err(CliError::NotEquivalent(format!(
            "deviation {:e} exceeds {:e}",
            verdict.deviation, args.threshold
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::C2d(a) => cmd_c2d(a),
        Command::D2c(a) => cmd_d2c(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Equivalence(a) => cmd_equivalence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.token(), e.message());
            ExitCode::from(e.code())
        }
    }
}
