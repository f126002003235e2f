//! Command-line driver: `fit`, `compare`, `scan` and `check`.
//!
//! A run is described by one JSON document with the sections `data`, `model`,
//! `metric`, `solver`, `eval`, `output` and `check`. Relative paths inside it
//! resolve against the directory of the config file. Exit codes: 0 success,
//! 1 numeric failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, MinimaxOptions};
use crate::bilevel::{self, BadrConfig, Stepsizes, Variant};
use crate::check::{run_checks, CheckOptions};
use crate::data::{load_csv, standardize, synth_biased_with_task, train_test_split, Dataset, Task};
use crate::error::Error;
use crate::eval::{self, EvalReport, ScanOptions, StrategyFailure, StrategyResult, DEFAULT_SLACK};
use crate::metrics::{FairnessMetric, MetricKind, DEFAULT_SMOOTH};
use crate::models::{LossKind, LossModel};
use crate::problem::Problem;
use crate::simplex::GroupWeights;
use crate::trajectory::Trajectory;
use crate::twoloop::{self, LowerOptions, OuterOptions};

#[derive(Debug, Parser)]
#[command(name = "badr", version, about = "Group-fair Pareto-efficient linear models by bilevel rescalarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model with the configured solver.
    Fit(CommonArgs),
    /// Train the configured solver and the four baselines and compare them.
    Compare(CommonArgs),
    /// Tabulate group losses and unfairness over a grid of group weights.
    Scan(CommonArgs),
    /// Run the derivative and projection self-checks.
    Check(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.seed` and `check.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub check: CheckOptions,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub csv: Option<CsvSource>,
    pub synthetic: Option<SyntheticSource>,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Share of rows in the train split; `1.0` disables the split.
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn yes() -> bool {
    true
}

fn default_train_frac() -> f64 {
    0.7
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub target: String,
    pub sensitive: Vec<String>,
    pub task: Task,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n_per_group: Vec<usize>,
    pub d: usize,
    pub shift: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "classification")]
    pub task: Task,
}

fn classification() -> Task {
    Task::Classification
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub loss: LossKind,
    pub reg: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { loss: LossKind::Logistic, reg: 1e-2 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub name: String,
    #[serde(default = "default_smooth")]
    pub smooth: f64,
}

fn default_smooth() -> f64 {
    DEFAULT_SMOOTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    BadrGd,
    BadrSgd,
    FrankWolfe,
    ProjectedGradient,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::BadrGd => "badr-gd",
            SolverKind::BadrSgd => "badr-sgd",
            SolverKind::FrankWolfe => "frank-wolfe",
            SolverKind::ProjectedGradient => "projected-gradient",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub name: SolverKind,
    /// BADR iterations.
    pub iters: usize,
    pub batch: usize,
    pub tau: Option<f64>,
    pub rho_dual: Option<f64>,
    pub gamma: Option<f64>,
    /// Candidates for the gamma probe when `gamma` is unset.
    pub gamma_grid: Option<Vec<f64>>,
    pub clip_threshold: f64,
    pub seed: u64,
    pub record_every: usize,
    /// Outer iterations of the two-loop solvers.
    pub max_iter: usize,
    pub gap_tol: f64,
    pub f_tol: f64,
    /// Gradient tolerance of lower-level solves.
    pub lower_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let outer = OuterOptions::default();
        Self {
            name: SolverKind::BadrGd,
            iters: 1000,
            batch: 32,
            tau: None,
            rho_dual: None,
            gamma: None,
            gamma_grid: None,
            clip_threshold: 1.0,
            seed: 0,
            record_every: 10,
            max_iter: outer.max_iter,
            gap_tol: outer.gap_tol,
            f_tol: outer.f_tol,
            lower_tol: outer.lower.tol,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub scan_resolution: usize,
    pub parallel_scan: bool,
    pub dominance_slack: f64,
    pub minimax: MinimaxOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scan_resolution: 101,
            parallel_scan: false,
            dominance_slack: DEFAULT_SLACK,
            minimax: MinimaxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write `timings.csv` (wall-clock, so not byte-stable).
    pub timings: bool,
}

/// A failure carrying its exit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } | Error::LowerNotConverged { .. } | Error::CgNotConverged { .. } => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses a config document, reporting the field path of any error.
pub fn parse_config(text: &str) -> CliResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::usage(format!("config error at `{path}`: {}", e.into_inner()))
    })
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("BADR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

struct Context {
    config: Config,
    base: PathBuf,
    out: PathBuf,
}

fn load_context(args: CommonArgs) -> CliResult<Context> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.solver.seed = seed;
        config.check.seed = seed;
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (args.out, &config.output.dir) {
        (Some(o), _) => o,
        (None, Some(d)) => base.join(d),
        (None, None) => PathBuf::from("badr-out"),
    };
    Ok(Context { config, base, out })
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(&load_context(a)?),
        Command::Compare(a) => cmd_compare(&load_context(a)?),
        Command::Scan(a) => cmd_scan(&load_context(a)?),
        Command::Check(a) => cmd_check(&load_context(a)?),
    }
}

/// Train problem and optional test split described by the config.
pub struct Loaded {
    pub train: Problem,
    pub test: Option<Dataset>,
}

fn load_problem(ctx: &Context) -> CliResult<Loaded> {
    load_problem_from(&ctx.config, &ctx.base)
}

/// Builds the train problem and test split of `cfg`, resolving relative data
/// paths against `base`.
pub fn load_problem_from(cfg: &Config, base: &Path) -> CliResult<Loaded> {
    let data = cfg.data.as_ref().ok_or_else(|| CliError::usage("config section `data` is required"))?;
    let ds = match (&data.csv, &data.synthetic) {
        (Some(c), None) => load_csv(base.join(&c.path), &c.target, &c.sensitive, c.task)?,
        (None, Some(s)) => synth_biased_with_task(s.task, &s.n_per_group, s.d, s.shift, s.seed)?,
        _ => return Err(CliError::usage("`data` needs exactly one of `csv` or `synthetic`")),
    };
    let ds = if data.standardize { standardize(&ds) } else { ds };
    let (train, test) = if data.train_frac == 1.0 {
        (ds, None)
    } else if data.train_frac > 0.0 && data.train_frac < 1.0 {
        let (tr, te) = train_test_split(&ds, data.train_frac, data.split_seed)?;
        (tr, Some(te))
    } else {
        return Err(CliError::usage(format!("data.train_frac must lie in (0, 1], got {}", data.train_frac)));
    };
    let metric_cfg = cfg.metric.as_ref().ok_or_else(|| CliError::usage("config section `metric` is required"))?;
    let kind: MetricKind = metric_cfg.name.parse()?;
    let metric = FairnessMetric::new(kind, metric_cfg.smooth)?;
    let model = LossModel::new(cfg.model.loss, cfg.model.reg)?;
    Ok(Loaded { train: Problem::new(train, model, metric)?, test })
}

fn lower_options(cfg: &SolverConfig) -> LowerOptions {
    LowerOptions::with_tol(cfg.lower_tol)
}

fn resolve_stepsizes(problem: &Problem, cfg: &SolverConfig) -> crate::error::Result<Stepsizes> {
    if !(problem.model.reg > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let lipschitz = problem.lipschitz_estimate()?;
    let tau = cfg.tau.unwrap_or(1.0 / lipschitz);
    let rho_dual = cfg.rho_dual.unwrap_or(tau);
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let grid = cfg.gamma_grid.clone().unwrap_or_else(bilevel::default_gamma_grid);
            bilevel::select_gamma(problem, tau, rho_dual, &grid)?
        }
    };
    Ok(Stepsizes { tau, rho_dual, gamma, lipschitz })
}

/// Outcome of the configured solver.
struct SolverRun {
    lambda: GroupWeights,
    w: ndarray::Array1<f64>,
    trajectory: Trajectory,
    iterations: usize,
    converged: Option<bool>,
    stepsizes: Option<Stepsizes>,
}

enum SolverFailure {
    Setup(Error),
    Aborted(bilevel::RunFailure),
}

impl From<Error> for SolverFailure {
    fn from(e: Error) -> Self {
        SolverFailure::Setup(e)
    }
}

impl SolverFailure {
    fn error(&self) -> &Error {
        match self {
            SolverFailure::Setup(e) => e,
            SolverFailure::Aborted(f) => &f.error,
        }
    }
}

fn run_solver(problem: &Problem, cfg: &SolverConfig) -> std::result::Result<SolverRun, SolverFailure> {
    match cfg.name {
        SolverKind::BadrGd | SolverKind::BadrSgd => {
            let steps = resolve_stepsizes(problem, cfg)?;
            let badr = BadrConfig {
                tau: steps.tau,
                rho_dual: steps.rho_dual,
                gamma: steps.gamma,
                clip_threshold: cfg.clip_threshold,
                iters: cfg.iters,
                batch: cfg.batch,
                seed: cfg.seed,
                record_every: cfg.record_every,
                variant: if cfg.name == SolverKind::BadrGd { Variant::Deterministic } else { Variant::Stochastic },
            };
            let fit = bilevel::fit(problem, &badr, lower_options(cfg)).map_err(SolverFailure::Aborted)?;
            Ok(SolverRun {
                lambda: fit.lambda,
                w: fit.w,
                trajectory: fit.trajectory,
                iterations: cfg.iters,
                converged: None,
                stepsizes: Some(steps),
            })
        }
        SolverKind::FrankWolfe | SolverKind::ProjectedGradient => {
            let opts = OuterOptions {
                max_iter: cfg.max_iter,
                gap_tol: cfg.gap_tol,
                f_tol: cfg.f_tol,
                lower: lower_options(cfg),
            };
            let res = if cfg.name == SolverKind::FrankWolfe {
                twoloop::frank_wolfe(problem, opts)?
            } else {
                twoloop::projected_gradient(problem, opts)?
            };
            Ok(SolverRun {
                lambda: res.lambda,
                w: res.w,
                trajectory: res.trajectory,
                iterations: res.iterations,
                converged: Some(res.converged),
                stepsizes: None,
            })
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub solver: String,
    pub stepsizes: Option<Stepsizes>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub eval: EvalReport,
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::numeric(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::numeric(format!("cannot write {}: {e}", path.display()));
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn write_weights(path: &Path, rows: &[(Option<&str>, &[f64], &[f64])]) -> CliResult<()> {
    let with_strategy = rows.iter().any(|r| r.0.is_some());
    write_file(path, |w| {
        if with_strategy {
            writeln!(w, "strategy,kind,index,value")?;
        } else {
            writeln!(w, "kind,index,value")?;
        }
        for (name, lambda, params) in rows {
            let prefix = name.map(|n| format!("{n},")).unwrap_or_default();
            for (k, v) in lambda.iter().enumerate() {
                writeln!(w, "{prefix}lambda,{k},{v}")?;
            }
            for (k, v) in params.iter().enumerate() {
                writeln!(w, "{prefix}w,{k},{v}")?;
            }
        }
        Ok(())
    })
}

fn write_timings(path: &Path, rows: &[(String, f64)]) -> CliResult<()> {
    write_file(path, |w| {
        writeln!(w, "strategy,seconds")?;
        for (name, secs) in rows {
            writeln!(w, "{name},{secs}")?;
        }
        Ok(())
    })
}

fn cmd_fit(ctx: &Context) -> CliResult<()> {
    let loaded = load_problem(ctx)?;
    let cfg = &ctx.config.solver;
    create_out(&ctx.out)?;
    let start = Instant::now();
    let run = match run_solver(&loaded.train, cfg) {
        Ok(run) => run,
        Err(SolverFailure::Aborted(f)) => {
            write_file(&ctx.out.join("trajectory.csv"), |w| f.trajectory.write_csv(w))?;
            return Err(CliError::numeric(format!(
                "{} (partial trajectory written to {})",
                f.error,
                ctx.out.join("trajectory.csv").display()
            )));
        }
        Err(SolverFailure::Setup(e)) => return Err(e.into()),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let result = StrategyResult { name: cfg.name.name().into(), lambda: Some(run.lambda.clone()), w: run.w.clone() };
    let report = eval::report(
        &loaded.train,
        &[result],
        Vec::new(),
        loaded.test.as_ref(),
        ctx.config.eval.dominance_slack,
    )?;
    let fairness = report.strategies[0].train.fairness;
    write_json(
        &ctx.out.join("report.json"),
        &RunReport {
            command: "fit".into(),
            solver: cfg.name.name().into(),
            stepsizes: run.stepsizes,
            iterations: Some(run.iterations),
            converged: run.converged,
            eval: report,
        },
    )?;
    write_file(&ctx.out.join("trajectory.csv"), |w| run.trajectory.write_csv(w))?;
    write_weights(&ctx.out.join("weights.csv"), &[(None, &run.lambda, run.w.as_slice().unwrap())])?;
    if ctx.config.output.timings {
        write_timings(&ctx.out.join("timings.csv"), &[(cfg.name.name().into(), elapsed)])?;
    }
    println!("fit: solver={} train fairness={fairness:.6e} -> {}", cfg.name.name(), ctx.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Strategy {
    Solver,
    Uniform,
    Balanced,
    OneGroup,
    Minimax,
}

fn cmd_compare(ctx: &Context) -> CliResult<()> {
    let loaded = load_problem(ctx)?;
    let problem = &loaded.train;
    let cfg = &ctx.config.solver;
    let lower = lower_options(cfg);
    let strategies = [Strategy::Solver, Strategy::Uniform, Strategy::Balanced, Strategy::OneGroup, Strategy::Minimax];
    let outcomes: Vec<(String, std::result::Result<(StrategyResult, Option<Trajectory>), String>, f64)> = strategies
        .par_iter()
        .map(|s| {
            let start = Instant::now();
            let (name, out) = match s {
                Strategy::Solver => (
                    cfg.name.name().to_string(),
                    run_solver(problem, cfg)
                        .map(|r| (Some(r.lambda), r.w, Some(r.trajectory)))
                        .map_err(|f| f.error().to_string()),
                ),
                other => {
                    let (name, fit) = match other {
                        Strategy::Uniform => ("uniform", baselines::uniform_fit(problem, lower)),
                        Strategy::Balanced => ("balanced", baselines::balanced_fit(problem, lower)),
                        Strategy::OneGroup => ("one-group", baselines::one_group_fit(problem, lower)),
                        _ => ("minimax", baselines::minimax_fit(problem, ctx.config.eval.minimax, lower)),
                    };
                    (name.to_string(), fit.map(|f| (Some(f.lambda), f.w, None)).map_err(|e| e.to_string()))
                }
            };
            let out = out.map(|(lambda, w, traj)| (StrategyResult { name: name.clone(), lambda, w }, traj));
            (name, out, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut trajectory = None;
    let mut timings = Vec::new();
    for (name, out, secs) in outcomes {
        timings.push((name.clone(), secs));
        match out {
            Ok((r, traj)) => {
                if traj.is_some() {
                    trajectory = traj;
                }
                results.push(r);
            }
            Err(error) => {
                eprintln!("warning: strategy {name} failed: {error}");
                failures.push(StrategyFailure { name, error });
            }
        }
    }
    let report = eval::report(problem, &results, failures, loaded.test.as_ref(), ctx.config.eval.dominance_slack)?;
    create_out(&ctx.out)?;
    write_json(
        &ctx.out.join("report.json"),
        &RunReport {
            command: "compare".into(),
            solver: cfg.name.name().into(),
            stepsizes: None,
            iterations: None,
            converged: None,
            eval: report.clone(),
        },
    )?;
    if let Some(t) = &trajectory {
        write_file(&ctx.out.join("trajectory.csv"), |w| t.write_csv(w))?;
    }
    let rows: Vec<(Option<&str>, &[f64], &[f64])> = results
        .iter()
        .map(|r| {
            (
                Some(r.name.as_str()),
                r.lambda.as_ref().map_or(&[][..], |l| l.as_slice()),
                r.w.as_slice().unwrap(),
            )
        })
        .collect();
    write_weights(&ctx.out.join("weights.csv"), &rows)?;
    if ctx.config.output.timings {
        write_timings(&ctx.out.join("timings.csv"), &timings)?;
    }
    println!("{:<20} {:>14} {:>10} {:>9}", "strategy", "train fairness", report.score_name, "dominated");
    for row in &report.strategies {
        let score = row.test.as_ref().unwrap_or(&row.train).score;
        println!("{:<20} {:>14.6e} {:>10.4} {:>9}", row.name, row.train.fairness, score, row.dominated);
    }
    if !report.failures.is_empty() {
        return Err(CliError::numeric(format!("{} strategies failed", report.failures.len())));
    }
    Ok(())
}

fn cmd_scan(ctx: &Context) -> CliResult<()> {
    let loaded = load_problem(ctx)?;
    let opts = ScanOptions {
        resolution: ctx.config.eval.scan_resolution,
        parallel: ctx.config.eval.parallel_scan,
        lower: LowerOptions::with_tol(eval::SCAN_TOL),
    };
    let table = eval::pareto_scan(&loaded.train, opts)?;
    create_out(&ctx.out)?;
    let path = ctx.out.join("scan.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::numeric(format!("cannot write {}: {e}", path.display())))?;
    table.write_csv(BufWriter::new(file))?;
    let missing = table.rows.iter().filter(|r| r.fairness.is_none()).count();
    println!("scan: {} rows ({missing} unsolved) -> {}", table.rows.len(), path.display());
    Ok(())
}

fn cmd_check(ctx: &Context) -> CliResult<()> {
    let rows = run_checks(&ctx.config.check)?;
    println!("{:<24} {:>12} {:>10}  result", "check", "worst", "tol");
    for r in &rows {
        println!("{:<24} {:>12.3e} {:>10.1e}  {}", r.name, r.worst, r.tol, if r.passed { "pass" } else { "FAIL" });
    }
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let worst = failed.iter().map(|r| r.worst).fold(0.0, f64::max);
    let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
    Err(CliError::numeric(format!("failed checks: {} (worst relative error {worst:.3e})", names.join(", "))))
}
