//! Single-loop bilevel adaptive rescalarization (BADR-GD and BADR-SGD).
//!
//! Each iteration moves three variables from the same pre-step state:
//!
//! ```text
//! w+      = w - tau * gradF(w)^T lambda
//! v+      = v - rho * (gradFair(w) + H(w, lambda) v)
//! lambda+ = Proj(lambda - gamma * gradF(w) v)
//! ```
//!
//! where row `a` of `gradF(w)` is `grad F_a(w)` and `H` is the
//! lambda-weighted Hessian. The stochastic variant replaces every oracle by an
//! independent stratified minibatch estimate and clips the lambda direction.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::models::weighted_rows;
use crate::problem::Problem;
use crate::simplex::{project_simplex, GroupWeights};
use crate::sum::{exact_dot, exact_sum, norm};
use crate::trajectory::{Trajectory, TrajectoryPoint};
use crate::twoloop::{solve_lower, LowerOptions};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Steps of each probe run when selecting `gamma`.
pub const PROBE_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadrConfig {
    /// Lower-level step `tau`.
    pub tau: f64,
    /// Dual step `rho`.
    pub rho_dual: f64,
    /// Upper-level step `gamma`.
    pub gamma: f64,
    /// Clipping threshold on the stochastic lambda direction.
    pub clip_threshold: f64,
    pub iters: usize,
    pub batch: usize,
    pub seed: u64,
    pub record_every: usize,
    pub variant: Variant,
}

impl BadrConfig {
    pub fn deterministic(steps: Stepsizes, iters: usize) -> Self {
        Self {
            tau: steps.tau,
            rho_dual: steps.rho_dual,
            gamma: steps.gamma,
            clip_threshold: 1.0,
            iters,
            batch: 32,
            seed: 0,
            record_every: 10,
            variant: Variant::Deterministic,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("rho_dual", self.rho_dual),
            ("clip_threshold", self.clip_threshold),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if self.variant == Variant::Stochastic && (self.batch == 0 || self.batch > n) {
            return Err(Error::InvalidArgument(format!("batch must lie in 1..={n}, got {}", self.batch)));
        }
        Ok(())
    }
}

/// The iterate `(w, v, lambda)` after `t` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BadrState {
    pub w: Array1<f64>,
    pub v: Array1<f64>,
    pub lambda: GroupWeights,
    pub t: usize,
}

impl BadrState {
    /// `w = 0`, `v = 0`, `lambda` uniform.
    pub fn initial(problem: &Problem) -> Self {
        let d = problem.n_features();
        Self {
            w: Array1::zeros(d),
            v: Array1::zeros(d),
            lambda: GroupWeights::uniform(problem.n_groups()),
            t: 0,
        }
    }
}

/// Oracle outputs feeding one update.
struct Oracles {
    grad_w: Array1<f64>,
    fair_grad: Array1<f64>,
    hvp: Array1<f64>,
    direction: Array1<f64>,
}

fn cross_times(cross: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    cross.rows().into_iter().map(|row| exact_dot(row, v.view())).collect()
}

fn full_oracles(problem: &Problem, s: &BadrState) -> Result<Oracles> {
    let ds = &problem.data;
    let cross = problem.model.cross_derivative(s.w.view(), ds)?;
    Ok(Oracles {
        grad_w: weighted_rows(&cross, &s.lambda),
        fair_grad: problem.fairness_grad(s.w.view())?,
        hvp: problem.model.scalarized_hvp(s.w.view(), ds, &s.lambda, s.v.view())?,
        direction: cross_times(&cross, &s.v),
    })
}

/// Per-group sample counts `min(n_a, ceil(b n_a / n))`.
pub fn stratum_sizes(group_sizes: &[usize], batch: usize) -> Vec<usize> {
    let n: usize = group_sizes.iter().sum();
    group_sizes
        .iter()
        .map(|&na| ((batch * na).div_ceil(n)).clamp(1, na))
        .collect()
}

fn draw_batch(problem: &Problem, sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    problem
        .data
        .group_index()
        .iter()
        .zip(sizes)
        .map(|(members, &k)| sample(rng, members.len(), k).into_iter().map(|j| members[j]).collect())
        .collect()
}

fn as_slices(b: &[Vec<usize>]) -> Vec<&[usize]> {
    b.iter().map(Vec::as_slice).collect()
}

fn sampled_oracles(problem: &Problem, s: &BadrState, batch: usize, rng: &mut ChaCha8Rng) -> Result<Oracles> {
    let ds = &problem.data;
    let sizes = stratum_sizes(&ds.group_sizes(), batch);

    let b_w = draw_batch(problem, &sizes, rng);
    let grad_w = weighted_rows(&problem.model.cross_derivative_on(s.w.view(), ds, &as_slices(&b_w))?, &s.lambda);

    let b_fair: Vec<usize> = draw_batch(problem, &sizes, rng).concat();
    let fair_grad = problem.metric.grad(&problem.model, s.w.view(), &ds.subset(&b_fair)?)?;

    let b_hvp = draw_batch(problem, &sizes, rng);
    let hvp = problem
        .model
        .scalarized_hvp_on(s.w.view(), ds, &s.lambda, s.v.view(), &as_slices(&b_hvp))?;

    let b_dir = draw_batch(problem, &sizes, rng);
    let cross = problem.model.cross_derivative_on(s.w.view(), ds, &as_slices(&b_dir))?;
    Ok(Oracles { grad_w, fair_grad, hvp, direction: cross_times(&cross, &s.v) })
}

/// `g * min(1, threshold / ||g||)`.
pub fn clip(g: &Array1<f64>, threshold: f64) -> Array1<f64> {
    let n = norm(g.view());
    if n <= threshold {
        g.clone()
    } else {
        g * (threshold / n)
    }
}

fn guard(step: usize, variable: &'static str, x: &[f64]) -> Result<()> {
    let sq = exact_sum(x.iter().map(|v| v * v));
    if !sq.is_finite() || sq.sqrt() > DIVERGENCE_NORM {
        return Err(Error::Divergence { step, variable });
    }
    Ok(())
}

fn apply(s: &BadrState, o: Oracles, cfg: &BadrConfig) -> Result<BadrState> {
    let w = &s.w - &(o.grad_w * cfg.tau);
    let v = &s.v - &((o.fair_grad + o.hvp) * cfg.rho_dual);
    let target: Vec<f64> = s
        .lambda
        .iter()
        .zip(o.direction.iter())
        .map(|(l, g)| l - cfg.gamma * g)
        .collect();
    guard(s.t, "w", w.as_slice().unwrap())?;
    guard(s.t, "v", v.as_slice().unwrap())?;
    guard(s.t, "lambda", &target)?;
    Ok(BadrState { w, v, lambda: project_simplex(&target), t: s.t + 1 })
}

/// One BADR-GD iteration with exact oracles.
pub fn badr_gd_step(s: &BadrState, problem: &Problem, cfg: &BadrConfig) -> Result<BadrState> {
    apply(s, full_oracles(problem, s)?, cfg)
}

/// One BADR-SGD iteration. A batch covering the whole dataset uses the exact
/// oracles and consumes no randomness.
pub fn badr_sgd_step(s: &BadrState, problem: &Problem, cfg: &BadrConfig, rng: &mut ChaCha8Rng) -> Result<BadrState> {
    let mut o = if cfg.batch >= problem.data.n_samples() {
        full_oracles(problem, s)?
    } else {
        sampled_oracles(problem, s, cfg.batch, rng)?
    };
    o.direction = clip(&o.direction, cfg.clip_threshold);
    apply(s, o, cfg)
}

/// `||(lambda - Proj(lambda - gamma g)) / gamma||`.
pub fn generalized_gradient_norm(lambda: &[f64], grad_estimate: &[f64], gamma: f64) -> f64 {
    let target: Vec<f64> = lambda.iter().zip(grad_estimate).map(|(l, g)| l - gamma * g).collect();
    let p = project_simplex(&target);
    exact_sum(lambda.iter().zip(p.iter()).map(|(a, b)| ((a - b) / gamma).powi(2))).sqrt()
}

/// Full-data diagnostics at a state. With `gamma = 0` the stationarity column
/// uses a unit step.
pub fn diagnostics(problem: &Problem, s: &BadrState, gamma: f64) -> Result<TrajectoryPoint> {
    let gamma = if gamma > 0.0 { gamma } else { 1.0 };
    let cross = problem.model.cross_derivative(s.w.view(), &problem.data)?;
    let direction = cross_times(&cross, &s.v);
    Ok(TrajectoryPoint {
        step: s.t,
        fairness: problem.fairness(s.w.view())?,
        best_fairness: 0.0,
        group_losses: problem.group_losses(s.w.view())?,
        grad_w_norm: norm(weighted_rows(&cross, &s.lambda).view()),
        stationarity: generalized_gradient_norm(&s.lambda, direction.as_slice().unwrap(), gamma),
        dual_norm: norm(s.v.view()),
        lambda: s.lambda.to_vec(),
    })
}

/// A run that stopped early; carries everything recorded before the failure.
#[derive(Debug, Error)]
#[error("BADR run aborted: {error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub trajectory: Trajectory,
    pub last_state: BadrState,
}

/// Applies `cfg.iters` steps from `init`, recording full-data diagnostics at
/// every `record_every`-th step and at the final step.
pub fn run(problem: &Problem, cfg: &BadrConfig, init: BadrState) -> std::result::Result<(BadrState, Trajectory), RunFailure> {
    let mut trajectory = Trajectory::new();
    if let Err(error) = cfg.validate(problem.data.n_samples()) {
        return Err(RunFailure { error, trajectory, last_state: init });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = init;
    let end = state.t + cfg.iters;
    loop {
        let record = state.t % cfg.record_every == 0 || state.t == end;
        if record {
            match diagnostics(problem, &state, cfg.gamma) {
                Ok(p) => trajectory.push(p),
                Err(error) => return Err(RunFailure { error, trajectory, last_state: state }),
            }
        }
        if state.t == end {
            return Ok((state, trajectory));
        }
        let next = match cfg.variant {
            Variant::Deterministic => badr_gd_step(&state, problem, cfg),
            Variant::Stochastic => badr_sgd_step(&state, problem, cfg, &mut rng),
        };
        match next {
            Ok(s) => state = s,
            Err(error) => return Err(RunFailure { error, trajectory, last_state: state }),
        }
    }
}

/// Result of a full BADR fit: the learned weights and the model refitted on
/// them.
#[derive(Debug, Clone)]
pub struct BadrFit {
    pub lambda: GroupWeights,
    pub w: Array1<f64>,
    pub fairness: f64,
    pub state: BadrState,
    pub trajectory: Trajectory,
}

/// Runs BADR from the default initialization, then solves the lower level at
/// the final weights from a cold start, so the returned model depends on the
/// final weights only.
pub fn fit(problem: &Problem, cfg: &BadrConfig, lower: LowerOptions) -> std::result::Result<BadrFit, RunFailure> {
    let (state, trajectory) = run(problem, cfg, BadrState::initial(problem))?;
    let refit = solve_lower(problem, &state.lambda, lower, None)
        .and_then(|sol| Ok((problem.fairness(sol.w.view())?, sol.w)));
    match refit {
        Ok((fairness, w)) => Ok(BadrFit { lambda: state.lambda.clone(), w, fairness, state, trajectory }),
        Err(error) => Err(RunFailure { error, trajectory, last_state: state }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stepsizes {
    pub tau: f64,
    pub rho_dual: f64,
    pub gamma: f64,
    /// Estimated smoothness constant of the lower level.
    pub lipschitz: f64,
}

/// Default `gamma` candidates: half-decades from `1e-4` to `1e-1`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..7).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

/// `tau = rho = 1/L` from the worst-group curvature at zero; `gamma` is the
/// grid value whose 50-step deterministic probe ends with the lowest refitted
/// fairness (first one on ties).
pub fn default_stepsizes(problem: &Problem) -> Result<Stepsizes> {
    default_stepsizes_with_grid(problem, &default_gamma_grid())
}

pub fn default_stepsizes_with_grid(problem: &Problem, gammas: &[f64]) -> Result<Stepsizes> {
    if !(problem.model.reg > 0.0) {
        return Err(Error::NotStronglyConvex);
    }
    let lipschitz = problem.lipschitz_estimate()?;
    let tau = 1.0 / lipschitz;
    let gamma = select_gamma(problem, tau, tau, gammas)?;
    Ok(Stepsizes { tau, rho_dual: tau, gamma, lipschitz })
}

/// The candidate whose 50-step deterministic probe ends with the lowest
/// refitted fairness; diverging probes are skipped, ties keep the first.
pub fn select_gamma(problem: &Problem, tau: f64, rho_dual: f64, gammas: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &gamma in gammas {
        let cfg = BadrConfig {
            record_every: PROBE_STEPS,
            ..BadrConfig::deterministic(Stepsizes { tau, rho_dual, gamma, lipschitz: 1.0 / tau }, PROBE_STEPS)
        };
        let Ok(probe) = fit(problem, &cfg, LowerOptions::default()) else {
            continue;
        };
        if best.is_none_or(|(_, f)| probe.fairness < f) {
            best = Some((gamma, probe.fairness));
        }
    }
    best.map(|(g, _)| g).ok_or_else(|| Error::InvalidArgument("every gamma probe failed".into()))
}
