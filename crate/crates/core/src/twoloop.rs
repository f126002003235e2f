//! Two-loop approach: solve the lower level, differentiate through its
//! optimality condition with an adjoint solve, and move the group weights with
//! Frank-Wolfe or projected gradient.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::conjugate_gradient;
use crate::problem::Problem;
use crate::simplex::{project_simplex, GroupWeights};
use crate::sum::{exact_dot, exact_sum, norm};
use crate::trajectory::{Trajectory, TrajectoryPoint};

/// Residual tolerance of the adjoint conjugate-gradient solve.
pub const ADJOINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerOptions {
    /// Target gradient norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LowerOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000 }
    }
}

impl LowerOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct LowerSolution {
    pub w: Array1<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Minimizes `sum_a lambda_a F_a(w)` by gradient descent with step `1/L`,
/// halving the step whenever the objective fails to decrease.
pub fn solve_lower(
    problem: &Problem,
    lambda: &GroupWeights,
    opts: LowerOptions,
    warm_start: Option<ArrayView1<f64>>,
) -> Result<LowerSolution> {
    if !(problem.model.reg > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("lower-level tolerance must be positive".into()));
    }
    let ds = &problem.data;
    let mut w = match warm_start {
        Some(w0) => w0.to_owned(),
        None => Array1::zeros(problem.n_features()),
    };
    let (mut f, mut g) = problem.model.weighted_loss_grad(w.view(), ds, lambda)?;
    let mut grad_norm = norm(g.view());
    if grad_norm <= opts.tol {
        return Ok(LowerSolution { w, iterations: 0, grad_norm });
    }
    let mut step = 1.0 / problem.curvature_at_zero(lambda)?;
    for it in 1..=opts.max_iter {
        let slack = 4.0 * f64::EPSILON * (f.abs() + 1.0);
        let (candidate, f_new, g_new) = loop {
            let candidate = &w - &(&g * step);
            let (f_new, g_new) = problem.model.weighted_loss_grad(candidate.view(), ds, lambda)?;
            if f_new <= f + slack || step < 1e-300 {
                break (candidate, f_new, g_new);
            }
            step *= 0.5;
        };
        w = candidate;
        f = f_new;
        g = g_new;
        grad_norm = norm(g.view());
        if !grad_norm.is_finite() {
            return Err(Error::LowerNotConverged { iters: it, grad_norm });
        }
        if grad_norm <= opts.tol {
            return Ok(LowerSolution { w, iterations: it, grad_norm });
        }
    }
    Err(Error::LowerNotConverged { iters: opts.max_iter, grad_norm })
}

/// Gradient of `phi(lambda) = Fair(w*(lambda))` together with the lower-level
/// solution it was computed at.
#[derive(Debug, Clone)]
pub struct ImplicitGradient {
    pub grad: Array1<f64>,
    pub w: Array1<f64>,
    pub fairness: f64,
    pub adjoint: Array1<f64>,
}

/// `grad phi(lambda) = -grad F(w*) u` with `H u = grad Fair(w*)`, where
/// `H = sum_a lambda_a hess F_a(w*)` and row `a` of `grad F` is `grad F_a`.
pub fn implicit_gradient(problem: &Problem, lambda: &GroupWeights, tol: f64) -> Result<ImplicitGradient> {
    implicit_gradient_from(problem, lambda, LowerOptions::with_tol(tol), None)
}

pub fn implicit_gradient_from(
    problem: &Problem,
    lambda: &GroupWeights,
    lower: LowerOptions,
    warm_start: Option<ArrayView1<f64>>,
) -> Result<ImplicitGradient> {
    let sol = solve_lower(problem, lambda, lower, warm_start)?;
    let w = sol.w;
    let (fairness, rhs) = problem.metric.value_and_grad(&problem.model, w.view(), &problem.data)?;
    let d = problem.n_features();
    let adjoint = conjugate_gradient(
        |v| problem.model.scalarized_hvp(w.view(), &problem.data, lambda, v.view()),
        &rhs,
        ADJOINT_TOL,
        10 * d + 100,
    )?;
    let cross = problem.model.cross_derivative(w.view(), &problem.data)?;
    let grad = cross.rows().into_iter().map(|row| -exact_dot(row, adjoint.view())).collect();
    Ok(ImplicitGradient { grad, w, fairness, adjoint })
}

/// Options shared by the two outer solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterOptions {
    pub max_iter: usize,
    /// Frank-Wolfe gap threshold.
    pub gap_tol: f64,
    /// Projected-gradient stopping threshold on `|phi_{t+1} - phi_t|`.
    pub f_tol: f64,
    pub lower: LowerOptions,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gap_tol: 1e-6,
            f_tol: 1e-5,
            lower: LowerOptions::with_tol(1e-10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OuterResult {
    pub lambda: GroupWeights,
    pub w: Array1<f64>,
    pub fairness: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Trajectory,
}

/// Oblivious step size `2 / (t + 2)`.
pub fn fw_step_size(t: usize) -> f64 {
    2.0 / (t as f64 + 2.0)
}

/// Frank-Wolfe gap `<g, lambda> - min_a g_a` and the minimizing vertex
/// (lowest index on ties).
pub fn fw_gap(grad: &[f64], lambda: &[f64]) -> (f64, usize) {
    let mut best = 0;
    for (a, &g) in grad.iter().enumerate() {
        if g < grad[best] {
            best = a;
        }
    }
    let inner = exact_sum(grad.iter().zip(lambda).map(|(g, l)| g * l));
    ((inner - grad[best]).max(0.0), best)
}

fn outer_point(
    problem: &Problem,
    step: usize,
    lambda: &GroupWeights,
    ig: &ImplicitGradient,
    stationarity: f64,
) -> Result<TrajectoryPoint> {
    Ok(TrajectoryPoint {
        step,
        fairness: ig.fairness,
        best_fairness: ig.fairness,
        group_losses: problem.group_losses(ig.w.view())?,
        grad_w_norm: norm(problem.model.scalarized_grad(ig.w.view(), &problem.data, lambda)?.view()),
        stationarity,
        dual_norm: norm(ig.adjoint.view()),
        lambda: lambda.to_vec(),
    })
}

/// Frank-Wolfe over the simplex from the barycenter.
pub fn frank_wolfe(problem: &Problem, opts: OuterOptions) -> Result<OuterResult> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let s = problem.n_groups();
    let mut lambda = GroupWeights::uniform(s);
    let mut trajectory = Trajectory::new();
    let mut warm: Option<Array1<f64>> = None;
    let mut t = 0;
    loop {
        let ig = implicit_gradient_from(problem, &lambda, opts.lower, warm.as_ref().map(|w| w.view()))?;
        let (gap, vertex) = fw_gap(ig.grad.as_slice().unwrap(), &lambda);
        trajectory.push(outer_point(problem, t, &lambda, &ig, gap)?);
        if gap <= opts.gap_tol || t == opts.max_iter {
            return Ok(OuterResult {
                lambda,
                fairness: ig.fairness,
                w: ig.w,
                iterations: t,
                converged: gap <= opts.gap_tol,
                trajectory,
            });
        }
        let eta = fw_step_size(t);
        let mut next: Vec<f64> = lambda.iter().map(|l| (1.0 - eta) * l).collect();
        next[vertex] += eta;
        lambda = GroupWeights::new(next)?;
        warm = Some(ig.w);
        t += 1;
    }
}

/// Projected gradient on the simplex with backtracking from a unit step.
pub fn projected_gradient(problem: &Problem, opts: OuterOptions) -> Result<OuterResult> {
    projected_gradient_from(problem, opts, GroupWeights::uniform(problem.n_groups()))
}

/// Evaluation slack when comparing implicit-function values.
const PHI_SLACK: f64 = 1e-12;

pub fn projected_gradient_from(problem: &Problem, opts: OuterOptions, init: GroupWeights) -> Result<OuterResult> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let mut lambda = init;
    let mut ig = implicit_gradient_from(problem, &lambda, opts.lower, None)?;
    let mut trajectory = Trajectory::new();
    let pg_norm = |lambda: &GroupWeights, g: &Array1<f64>| {
        let target: Vec<f64> = lambda.iter().zip(g.iter()).map(|(l, gi)| l - gi).collect();
        let p = project_simplex(&target);
        exact_sum(lambda.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b))).sqrt()
    };
    trajectory.push(outer_point(problem, 0, &lambda, &ig, pg_norm(&lambda, &ig.grad))?);
    let mut converged = false;
    let mut t = 0;
    while t < opts.max_iter {
        t += 1;
        let mut eta = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let target: Vec<f64> = lambda.iter().zip(ig.grad.iter()).map(|(l, g)| l - eta * g).collect();
            let candidate = project_simplex(&target);
            if candidate == lambda {
                break;
            }
            let trial = implicit_gradient_from(problem, &candidate, opts.lower, Some(ig.w.view()))?;
            if trial.fairness <= ig.fairness + PHI_SLACK {
                accepted = Some((candidate, trial));
                break;
            }
            eta *= 0.5;
        }
        let Some((candidate, trial)) = accepted else {
            // null step: no descent available along the projected direction
            converged = true;
            break;
        };
        let change = (trial.fairness - ig.fairness).abs();
        lambda = candidate;
        ig = trial;
        trajectory.push(outer_point(problem, t, &lambda, &ig, pg_norm(&lambda, &ig.grad))?);
        if change <= opts.f_tol {
            converged = true;
            break;
        }
    }
    Ok(OuterResult {
        lambda,
        fairness: ig.fairness,
        w: ig.w,
        iterations: t,
        converged,
        trajectory,
    })
}
