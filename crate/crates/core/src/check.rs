//! Self-check suite: analytic derivatives against central finite differences,
//! the implicit gradient against differences of the implicit function, and the
//! simplex projection against active-set enumeration.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bilevel::{badr_gd_step, BadrConfig, BadrState, Stepsizes};
use crate::data::{standardize, synth_biased, Dataset, Task};
use crate::error::Result;
use crate::metrics::{FairnessMetric, MetricKind};
use crate::models::{LossKind, LossModel};
use crate::problem::Problem;
use crate::simplex::{project_simplex, GroupWeights};
use crate::sum::{exact_dot, norm};
use crate::twoloop::{implicit_gradient, solve_lower, LowerOptions};

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
pub const IMPLICIT_TOL: f64 = 1e-3;
pub const SIGN_TOL: f64 = 1e-6;
pub const PROJECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    pub instances: usize,
    pub seed: u64,
    pub projection_points: usize,
    /// Test hook: scales this metric's analytic gradient so its check fails.
    pub corrupt_metric: Option<MetricKind>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { instances: 20, seed: 0, projection_points: 1000, corrupt_metric: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckRow {
    fn new(name: impl Into<String>, worst: f64, tol: f64) -> Self {
        Self { name: name.into(), worst, tol, passed: worst <= tol }
    }
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let scale = norm(a.view()).max(norm(b.view()));
    if scale == 0.0 {
        return 0.0;
    }
    norm((a - b).view()) / scale
}

/// Central differences of a scalar function, one coordinate at a time.
pub fn fd_gradient<F>(mut f: F, w: &Array1<f64>, h: f64) -> Result<Array1<f64>>
where
    F: FnMut(&Array1<f64>) -> Result<f64>,
{
    let mut g = Array1::zeros(w.len());
    for k in 0..w.len() {
        let mut plus = w.clone();
        plus[k] += h;
        let mut minus = w.clone();
        minus[k] -= h;
        g[k] = (f(&plus)? - f(&minus)?) / (2.0 * h);
    }
    Ok(g)
}

/// Random instance with `2..=3` groups, every group holding both labels.
pub fn random_instance(rng: &mut ChaCha8Rng, task: Task) -> Result<(Dataset, Array1<f64>)> {
    let s = rng.random_range(2..=3);
    let d = rng.random_range(2..=20);
    let n = rng.random_range(10 * s..=200);
    let mut x = Array2::zeros((n, d));
    for v in x.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let groups: Vec<usize> = (0..n).map(|i| if i < 2 * s { i % s } else { rng.random_range(0..s) }).collect();
    let y: Array1<f64> = (0..n)
        .map(|i| match task {
            Task::Classification if i < 2 * s => if i < s { 1.0 } else { -1.0 },
            Task::Classification => if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            Task::Regression => rng.sample(StandardNormal),
        })
        .collect();
    let w: Array1<f64> = (0..d).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok((Dataset::new(x, y, groups, s, task)?, w))
}

fn loss_rows(opts: &CheckOptions, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for kind in [LossKind::Ridge, LossKind::Logistic, LossKind::Svm2] {
        let task = if kind == LossKind::Ridge { Task::Regression } else { Task::Classification };
        let (mut worst_grad, mut worst_hvp) = (0.0f64, 0.0f64);
        for _ in 0..opts.instances {
            let (ds, w) = random_instance(rng, task)?;
            let model = LossModel::new(kind, 0.1)?;
            let lambda = project_simplex(&(0..ds.n_groups()).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
            for a in 0..ds.n_groups() {
                let g = model.group_grad(w.view(), &ds, a)?;
                let fd = fd_gradient(|v| model.group_loss(v.view(), &ds, a), &w, FD_STEP)?;
                worst_grad = worst_grad.max(relative_error(&g, &fd));
            }
            let v: Array1<f64> = (0..w.len()).map(|_| rng.sample(StandardNormal)).collect();
            let hv = model.scalarized_hvp(w.view(), &ds, &lambda, v.view())?;
            let gp = model.scalarized_grad(( &w + &(&v * FD_STEP)).view(), &ds, &lambda)?;
            let gm = model.scalarized_grad((&w - &(&v * FD_STEP)).view(), &ds, &lambda)?;
            worst_hvp = worst_hvp.max(relative_error(&hv, &((gp - gm) / (2.0 * FD_STEP))));
        }
        let name = format!("{kind:?}").to_lowercase();
        rows.push(CheckRow::new(format!("grad/{name}"), worst_grad, GRAD_TOL));
        rows.push(CheckRow::new(format!("hvp/{name}"), worst_hvp, GRAD_TOL));
    }
    Ok(rows)
}

fn metric_rows(opts: &CheckOptions, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for kind in MetricKind::ALL {
        let task = if kind.supports(Task::Classification) { Task::Classification } else { Task::Regression };
        let model = match task {
            Task::Classification => LossModel::logistic(0.1),
            Task::Regression => LossModel::ridge(0.1),
        };
        let metric = FairnessMetric::of(kind);
        let mut worst = 0.0f64;
        for _ in 0..opts.instances {
            let (ds, w) = random_instance(rng, task)?;
            let mut g = metric.grad(&model, w.view(), &ds)?;
            if opts.corrupt_metric == Some(kind) {
                g *= 1.01;
            }
            let fd = fd_gradient(|v| metric.value(&model, v.view(), &ds), &w, FD_STEP)?;
            worst = worst.max(relative_error(&g, &fd));
        }
        rows.push(CheckRow::new(format!("metric/{}", kind.name()), worst, GRAD_TOL));
    }
    Ok(rows)
}

/// The two-group logistic toy used by the implicit-gradient checks.
pub fn implicit_toy() -> Result<Problem> {
    let ds = standardize(&synth_biased(&[100, 100], 4, 0.8, 7)?);
    Problem::new(ds, LossModel::logistic(1e-2), FairnessMetric::of(MetricKind::IndividualFairness))
}

fn implicit_rows(problem: &Problem) -> Result<Vec<CheckRow>> {
    let tight = LowerOptions::with_tol(1e-12);
    let phi = |l: &[f64]| -> Result<f64> {
        let w = solve_lower(problem, &GroupWeights::new(l.to_vec())?, tight, None)?.w;
        problem.fairness(w.view())
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for base in [0.2, 0.5, 0.7] {
        let lambda = GroupWeights::new(vec![base, 1.0 - base])?;
        let ig = implicit_gradient(problem, &lambda, 1e-12)?;
        let analytic = ig.grad[0] - ig.grad[1];
        let fd = (phi(&[base + h, 1.0 - base - h])? - phi(&[base - h, 1.0 - base + h])?) / (2.0 * h);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
    }
    let mut rows = vec![CheckRow::new("implicit/fd", worst, IMPLICIT_TOL)];
    let lambda = GroupWeights::new(vec![0.3, 0.7])?;
    let sign_err = dual_direction_error(problem, &lambda, 1e-10, 200_000)?;
    rows.push(CheckRow::new("implicit/badr-sign", sign_err, SIGN_TOL));
    Ok(rows)
}

/// Runs BADR-GD with frozen `lambda` until the `w` gradient and the dual
/// residual fall below `tol`, then returns the largest deviation between the
/// BADR lambda direction and the implicit gradient.
pub fn dual_direction_error(problem: &Problem, lambda: &GroupWeights, tol: f64, max_steps: usize) -> Result<f64> {
    let lip = problem.lipschitz_estimate()?;
    let cfg = BadrConfig::deterministic(Stepsizes { tau: 1.0 / lip, rho_dual: 1.0 / lip, gamma: 0.0, lipschitz: lip }, 1);
    let mut state = BadrState { lambda: lambda.clone(), ..BadrState::initial(problem) };
    for _ in 0..max_steps {
        let gw = problem.model.scalarized_grad(state.w.view(), &problem.data, lambda)?;
        let residual = problem.fairness_grad(state.w.view())?
            + problem.model.scalarized_hvp(state.w.view(), &problem.data, lambda, state.v.view())?;
        if norm(gw.view()) <= tol && norm(residual.view()) <= tol {
            break;
        }
        state = badr_gd_step(&state, problem, &cfg)?;
    }
    let cross = problem.model.cross_derivative(state.w.view(), &problem.data)?;
    let ig = implicit_gradient(problem, lambda, 1e-12)?;
    Ok(cross
        .rows()
        .into_iter()
        .zip(ig.grad.iter())
        .map(|(row, g)| (exact_dot(row, state.v.view()) - g).abs())
        .fold(0.0, f64::max))
}

/// Simplex projection by enumerating every candidate support.
pub fn brute_force_projection(x: &[f64]) -> Vec<f64> {
    let s = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << s) {
        let support: Vec<usize> = (0..s).filter(|&i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| x[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut p = vec![0.0; s];
        for &i in &support {
            p[i] = x[i] - shift;
        }
        if p.iter().any(|&v| v < -1e-15) {
            continue;
        }
        let dist: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, p));
        }
    }
    best.expect("the full support with clamping always has a feasible candidate").1
}

fn projection_rows(opts: &CheckOptions, rng: &mut ChaCha8Rng) -> Vec<CheckRow> {
    let mut worst = 0.0f64;
    for k in 0..opts.projection_points {
        let s = 1 + k % 4;
        let x: Vec<f64> = (0..s).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let p = project_simplex(&x);
        let q = brute_force_projection(&x);
        let diff: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(diff);
    }
    vec![CheckRow::new("projection/active-set", worst, PROJECTION_TOL)]
}

/// Runs every check in a fixed order.
pub fn run_checks(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = loss_rows(opts, &mut rng)?;
    rows.extend(metric_rows(opts, &mut rng)?);
    rows.extend(implicit_rows(&implicit_toy()?)?);
    rows.extend(projection_rows(opts, &mut rng));
    Ok(rows)
}
