//! Pareto-efficient comparison strategies and the fairness-penalized path.

use std::collections::VecDeque;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::simplex::GroupWeights;
use crate::sum::{exact_dot, exact_sum, norm};
use crate::twoloop::{solve_lower, LowerOptions};

/// A fitted strategy: its group weights and the lower-level solution at them.
#[derive(Debug, Clone)]
pub struct Fit {
    pub lambda: GroupWeights,
    pub w: Array1<f64>,
}

fn fit_at(problem: &Problem, lambda: GroupWeights, lower: LowerOptions) -> Result<Fit> {
    let w = solve_lower(problem, &lambda, lower, None)?.w;
    Ok(Fit { lambda, w })
}

/// Weights at the simplex barycenter.
pub fn uniform_fit(problem: &Problem, lower: LowerOptions) -> Result<Fit> {
    fit_at(problem, GroupWeights::uniform(problem.n_groups()), lower)
}

/// Weights inversely proportional to group size.
pub fn balanced_fit(problem: &Problem, lower: LowerOptions) -> Result<Fit> {
    let inv: Vec<f64> = problem.data.group_sizes().iter().map(|&n| 1.0 / n as f64).collect();
    fit_at(problem, GroupWeights::normalized(&inv)?, lower)
}

/// Fits each group alone and keeps the vertex with the lowest unfairness
/// (lowest index on ties).
pub fn one_group_fit(problem: &Problem, lower: LowerOptions) -> Result<Fit> {
    let s = problem.n_groups();
    let mut best: Option<(f64, Fit)> = None;
    for a in 0..s {
        let fit = fit_at(problem, GroupWeights::vertex(a, s)?, lower)?;
        let value = problem.fairness(fit.w.view())?;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, fit));
        }
    }
    Ok(best.expect("at least one group").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimaxOptions {
    pub iters: usize,
    /// Multiplicative-weights step.
    pub step: f64,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self { iters: 2000, step: 0.5 }
    }
}

/// Worst-group loss minimization by simultaneous multiplicative-weights
/// ascent on `lambda` and gradient descent on `w` (step `1/L`). Returns the
/// averaged weights and the lower-level solution at them.
pub fn minimax_fit(problem: &Problem, opts: MinimaxOptions, lower: LowerOptions) -> Result<Fit> {
    if !(problem.model.reg > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    if opts.iters == 0 || !(opts.step > 0.0) {
        return Err(Error::InvalidArgument("minimax needs iters >= 1 and step > 0".into()));
    }
    let s = problem.n_groups();
    let tau = 1.0 / problem.lipschitz_estimate()?;
    let mut lambda = vec![1.0 / s as f64; s];
    let mut avg = vec![0.0; s];
    let mut w = Array1::zeros(problem.n_features());
    for t in 0..opts.iters {
        let losses = problem.group_losses(w.view())?;
        let (_, g) = problem.model.weighted_loss_grad(w.view(), &problem.data, &lambda)?;
        // shift by the max loss so the exponentials cannot overflow
        let top = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = lambda
            .iter()
            .zip(&losses)
            .map(|(l, f)| l * (opts.step * (f - top)).exp())
            .collect();
        let total = exact_sum(raw.iter().copied());
        w = &w - &(g * tau);
        if !norm(w.view()).is_finite() || norm(w.view()) > crate::bilevel::DIVERGENCE_NORM {
            return Err(Error::Divergence { step: t, variable: "w" });
        }
        for (a, r) in raw.iter().enumerate() {
            avg[a] += lambda[a];
            lambda[a] = r / total;
        }
    }
    fit_at(problem, GroupWeights::normalized(&avg)?, lower)
}

/// One point of the penalized path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPoint {
    pub nu: f64,
    pub w: Vec<f64>,
    pub converged: bool,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 20_000 }
    }
}

/// Ten log-spaced values from `1e-6` to `10^-0.5`.
pub fn default_nu_grid() -> Vec<f64> {
    (0..10).map(|k| 10f64.powf(-6.0 + 5.5 * k as f64 / 9.0)).collect()
}

/// Minimizes `ERM(w) + Fair(w) / nu` by L-BFGS for every `nu`, where `ERM`
/// weights each group by its share of the samples. The solver works on the
/// rescaled objective `(nu ERM + Fair) / (1 + nu)`, which has the same
/// minimizer and unit scale, so `tol` applies to its gradient. Each point starts at the uniform-weight
/// lower-level solution; non-convergence is reported in the point.
pub fn penalized_path(problem: &Problem, nu_grid: &[f64], opts: PathOptions) -> Result<Vec<PathPoint>> {
    if let Some(nu) = nu_grid.iter().find(|nu| !(**nu > 0.0)) {
        return Err(Error::InvalidArgument(format!("penalty grid values must be positive, got {nu}")));
    }
    let n = problem.data.n_samples() as f64;
    let shares: Vec<f64> = problem.data.group_sizes().iter().map(|&na| na as f64 / n).collect();
    let init = solve_lower(problem, &GroupWeights::uniform(problem.n_groups()), LowerOptions::default(), None)?.w;
    let l0 = problem.lipschitz_estimate()?;
    nu_grid
        .iter()
        .map(|&nu| {
            let objective = |w: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
                let (erm, g) = problem.model.weighted_loss_grad(w.view(), &problem.data, &shares)?;
                let (fair, fg) = problem.metric.value_and_grad(&problem.model, w.view(), &problem.data)?;
                Ok(((nu * erm + fair) / (1.0 + nu), (g * nu + &fg) / (1.0 + nu)))
            };
            quasi_newton(objective, init.clone(), 1.0 / l0, opts).map(|(w, converged, grad_norm)| PathPoint {
                nu,
                w: w.to_vec(),
                converged,
                grad_norm,
            })
        })
        .collect()
}

/// Curvature pairs kept by the quasi-Newton path solver.
const MEMORY: usize = 10;

/// L-BFGS with Armijo backtracking; `step0` scales the very first step.
fn quasi_newton<F>(mut objective: F, mut w: Array1<f64>, step0: f64, opts: PathOptions) -> Result<(Array1<f64>, bool, f64)>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    let (mut f, mut g) = objective(&w)?;
    let mut pairs: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    for _ in 0..opts.max_iter {
        let gn = norm(g.view());
        if gn <= opts.tol {
            return Ok((w, true, gn));
        }
        // two-loop recursion for -H g
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * exact_dot(s.view(), q.view());
            q = q - &(y * a);
            alphas.push(a);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => exact_dot(s.view(), y.view()) / exact_dot(y.view(), y.view()),
            None => step0,
        };
        let mut r = q * gamma;
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * exact_dot(y.view(), r.view());
            r = r + &(s * (a - b));
        }
        let mut dir = -r;
        let mut slope = exact_dot(g.view(), dir.view());
        if !(slope < 0.0) {
            pairs.clear();
            dir = -(&g * step0);
            slope = -step0 * gn * gn;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &w + &(&dir * t);
            let (fc, gc) = objective(&cand)?;
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            return Ok((w, false, gn));
        };
        let s = &cand - &w;
        let y = &gc - &g;
        let sy = exact_dot(s.view(), y.view());
        if sy > 1e-12 * norm(s.view()) * norm(y.view()) {
            if pairs.len() == MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        w = cand;
        f = fc;
        g = gc;
    }
    let gn = norm(g.view());
    Ok((w, gn <= opts.tol, gn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_grid_endpoints() {
        let g = default_nu_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-6).abs() < 1e-20);
        assert!((g[9] - 10f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn quasi_newton_minimizes_ill_conditioned_quadratic() {
        let obj = |w: &Array1<f64>| -> Result<(f64, Array1<f64>)> {
            let scale = ndarray::array![1.0, 1e6];
            let f = 0.5 * (w * w * &scale).sum();
            Ok((f, w * &scale))
        };
        let (w, ok, _) = quasi_newton(obj, ndarray::array![1.0, 1.0], 1e-6, PathOptions::default()).unwrap();
        assert!(ok);
        assert!(norm(w.view()) < 1e-6);
    }
}
