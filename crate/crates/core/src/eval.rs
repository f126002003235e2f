//! Predictive and fairness evaluation, Pareto dominance, and scans of the
//! implicit fairness function over the simplex.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::simplex::GroupWeights;
use crate::sum::exact_sum;
use crate::twoloop::{solve_lower, LowerOptions};

pub const DEFAULT_SLACK: f64 = 1e-6;

/// Gradient tolerance of the lower-level solves behind a scan.
pub const SCAN_TOL: f64 = 1e-8;

fn require(ds: &Dataset, task: Task) -> Result<()> {
    if ds.task() != task {
        return Err(Error::InvalidArgument(format!("expected a {task} dataset, got {}", ds.task())));
    }
    Ok(())
}

/// Fraction of rows with `sign(<w,x>) = y`, where `sign(0) = +1`.
pub fn accuracy(w: ArrayView1<f64>, ds: &Dataset) -> Result<f64> {
    require(ds, Task::Classification)?;
    let y = ds.y();
    let hits = (0..ds.n_samples())
        .filter(|&i| {
            let pred = if ds.row(i).dot(&w) >= 0.0 { 1.0 } else { -1.0 };
            pred == y[i]
        })
        .count();
    Ok(hits as f64 / ds.n_samples() as f64)
}

pub fn rmse(w: ArrayView1<f64>, ds: &Dataset) -> Result<f64> {
    require(ds, Task::Regression)?;
    let y = ds.y();
    let sq = exact_sum((0..ds.n_samples()).map(|i| (y[i] - ds.row(i).dot(&w)).powi(2)));
    Ok((sq / ds.n_samples() as f64).sqrt())
}

/// Accuracy for classification, RMSE for regression.
pub fn score(w: ArrayView1<f64>, ds: &Dataset) -> Result<f64> {
    match ds.task() {
        Task::Classification => accuracy(w, ds),
        Task::Regression => rmse(w, ds),
    }
}

pub fn group_losses(problem: &Problem, w: ArrayView1<f64>) -> Result<Vec<f64>> {
    problem.group_losses(w)
}

/// `true` at `i` when some other point is no worse on every group (up to
/// `slack`) and strictly better by more than `slack` on at least one.
pub fn dominance_flags(points: &[Vec<f64>], slack: f64) -> Vec<bool> {
    points
        .iter()
        .map(|p| points.iter().any(|q| dominates(q, p, slack)))
        .collect()
}

/// Whether `q` dominates `p`.
pub fn dominates(q: &[f64], p: &[f64], slack: f64) -> bool {
    debug_assert_eq!(q.len(), p.len());
    q.iter().zip(p).all(|(a, b)| *a <= b + slack) && q.iter().zip(p).any(|(a, b)| *a < b - slack)
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(k);
    let mut c = 2u64;
    while primes.len() < k {
        if primes.iter().all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = inv;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Scan points in grid order.
///
/// * `S = 1`: the single point `(1)`.
/// * `S = 2`: `(k/(r-1), 1 - k/(r-1))` for `k = 0..r`.
/// * `S = 3`: the barycentric grid with `r` points per edge, row-major in the
///   first two coordinates.
/// * `S >= 4`: `r` Halton points mapped to the simplex by sorted spacings.
pub fn scan_grid(groups: usize, resolution: usize) -> Result<Vec<GroupWeights>> {
    if groups == 0 {
        return Err(Error::InvalidArgument("scan needs at least one group".into()));
    }
    if groups == 1 {
        return Ok(vec![GroupWeights::uniform(1)]);
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("scan resolution must be at least 2".into()));
    }
    let m = (resolution - 1) as f64;
    let out = match groups {
        2 => (0..resolution)
            .map(|k| {
                let a = k as f64 / m;
                GroupWeights::new(vec![a, 1.0 - a])
            })
            .collect::<Result<Vec<_>>>()?,
        3 => {
            let mut pts = Vec::new();
            for i in 0..resolution {
                for j in 0..resolution - i {
                    let (a, b) = (i as f64 / m, j as f64 / m);
                    let c = ((resolution - 1 - i - j) as f64 / m).max(0.0);
                    pts.push(GroupWeights::normalized(&[a, b, c])?);
                }
            }
            pts
        }
        s => {
            let bases = first_primes(s - 1);
            (1..=resolution as u64)
                .map(|i| {
                    let mut cuts: Vec<f64> = bases.iter().map(|&b| radical_inverse(i, b)).collect();
                    cuts.sort_by(f64::total_cmp);
                    cuts.insert(0, 0.0);
                    cuts.push(1.0);
                    let gaps: Vec<f64> = cuts.windows(2).map(|p| p[1] - p[0]).collect();
                    GroupWeights::normalized(&gaps)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(out)
}

/// One scan row; `group_losses` and `fairness` are `None` when the
/// lower-level solve failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: Vec<f64>,
    pub group_losses: Option<Vec<f64>>,
    pub fairness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// Rows that were solved successfully.
    pub fn solved(&self) -> impl Iterator<Item = (&[f64], &[f64], f64)> {
        self.rows.iter().filter_map(|r| match (&r.group_losses, r.fairness) {
            (Some(g), Some(f)) => Some((r.lambda.as_slice(), g.as_slice(), f)),
            _ => None,
        })
    }

    /// Lowest fairness over solved rows.
    pub fn min_fairness(&self) -> Option<f64> {
        self.solved().map(|(_, _, f)| f).min_by(f64::total_cmp)
    }

    /// Columns `lambda_*, F_*, fairness`; failed rows leave the last columns
    /// empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let s = self.rows.first().map_or(0, |r| r.lambda.len());
        let mut wtr = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..s)
            .map(|a| format!("lambda_{a}"))
            .chain((0..s).map(|a| format!("F_{a}")))
            .chain(std::iter::once("fairness".to_string()))
            .collect();
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.lambda.iter().map(|v| v.to_string()).collect();
            match &r.group_losses {
                Some(g) => rec.extend(g.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), s)),
            }
            rec.push(r.fairness.map(|v| v.to_string()).unwrap_or_default());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub resolution: usize,
    /// Solve grid points independently in parallel (no warm start).
    pub parallel: bool,
    pub lower: LowerOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { resolution: 101, parallel: false, lower: LowerOptions::with_tol(SCAN_TOL) }
    }
}

fn scan_point(problem: &Problem, lambda: &GroupWeights, lower: LowerOptions, warm: Option<ArrayView1<f64>>) -> Result<(Array1<f64>, ScanRow)> {
    let w = solve_lower(problem, lambda, lower, warm)?.w;
    let row = ScanRow {
        lambda: lambda.to_vec(),
        group_losses: Some(problem.group_losses(w.view())?),
        fairness: Some(problem.fairness(w.view())?),
    };
    Ok((w, row))
}

fn missing(lambda: &GroupWeights) -> ScanRow {
    ScanRow { lambda: lambda.to_vec(), group_losses: None, fairness: None }
}

/// Solves the lower level at every grid point and records group losses and
/// unfairness. Sequential scans warm-start each point from the last
/// successful one.
pub fn pareto_scan(problem: &Problem, opts: ScanOptions) -> Result<ScanTable> {
    let grid = scan_grid(problem.n_groups(), opts.resolution)?;
    let rows = if opts.parallel {
        grid.par_iter()
            .map(|l| scan_point(problem, l, opts.lower, None).map_or_else(|_| missing(l), |(_, r)| r))
            .collect()
    } else {
        let mut warm: Option<Array1<f64>> = None;
        grid.iter()
            .map(|l| match scan_point(problem, l, opts.lower, warm.as_ref().map(|w| w.view())) {
                Ok((w, r)) => {
                    warm = Some(w);
                    r
                }
                Err(_) => missing(l),
            })
            .collect()
    };
    Ok(ScanTable { rows })
}

/// A model produced by one strategy.
#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub name: String,
    pub lambda: Option<GroupWeights>,
    pub w: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub fairness: f64,
    /// Accuracy for classification, RMSE for regression.
    pub score: f64,
    pub group_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub name: String,
    pub lambda: Option<Vec<f64>>,
    pub train: SplitEval,
    pub test: Option<SplitEval>,
    /// Dominated on train group losses by another strategy of the report.
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub task: Task,
    pub score_name: String,
    pub dominance_slack: f64,
    pub strategies: Vec<StrategyRow>,
    pub failures: Vec<StrategyFailure>,
}

fn split_eval(problem: &Problem, w: ArrayView1<f64>) -> Result<SplitEval> {
    Ok(SplitEval {
        fairness: problem.fairness(w)?,
        score: score(w, &problem.data)?,
        group_losses: problem.group_losses(w)?,
    })
}

/// Evaluates every strategy on the train problem and, when given, on the test
/// split; dominance is judged on train group losses within the strategy set.
pub fn report(
    problem: &Problem,
    results: &[StrategyResult],
    failures: Vec<StrategyFailure>,
    test: Option<&Dataset>,
    slack: f64,
) -> Result<EvalReport> {
    let test_problem = test.map(|ds| problem.with_data(ds.clone())).transpose()?;
    let mut strategies = Vec::with_capacity(results.len());
    for r in results {
        strategies.push(StrategyRow {
            name: r.name.clone(),
            lambda: r.lambda.as_ref().map(|l| l.to_vec()),
            train: split_eval(problem, r.w.view())?,
            test: test_problem.as_ref().map(|p| split_eval(p, r.w.view())).transpose()?,
            dominated: false,
        });
    }
    let losses: Vec<Vec<f64>> = strategies.iter().map(|s| s.train.group_losses.clone()).collect();
    for (row, flag) in strategies.iter_mut().zip(dominance_flags(&losses, slack)) {
        row.dominated = flag;
    }
    Ok(EvalReport {
        metric: problem.metric.kind.name().to_string(),
        task: problem.data.task(),
        score_name: match problem.data.task() {
            Task::Classification => "accuracy".into(),
            Task::Regression => "rmse".into(),
        },
        dominance_slack: slack,
        strategies,
        failures,
    })
}
