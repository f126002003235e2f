//! Differentiable unfairness metrics of a linear predictor.
//!
//! Except for group variance, every metric is a function of the predictions
//! `f_i = <w, x_i>` alone, so its gradient is `sum_i (d metric / d f_i) x_i`.
//! Each metric below therefore produces a value and one coefficient per row.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::models::{weighted_rows, LossModel};
use crate::sum::{exact_sum, ExactVecSum};

/// Default sharpness of the sigmoid / log-sum-exp relaxations.
pub const DEFAULT_SMOOTH: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "gv")]
    GroupVariance,
    #[serde(rename = "if")]
    IndividualFairness,
    #[serde(rename = "dp")]
    DemographicParity,
    #[serde(rename = "dm")]
    DisparateMistreatment,
    #[serde(rename = "eop")]
    EqualOpportunity,
    #[serde(rename = "eod")]
    EqualizedOdds,
    #[serde(rename = "hsic")]
    Hsic,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::GroupVariance,
        MetricKind::IndividualFairness,
        MetricKind::DemographicParity,
        MetricKind::DisparateMistreatment,
        MetricKind::EqualOpportunity,
        MetricKind::EqualizedOdds,
        MetricKind::Hsic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::GroupVariance => "gv",
            MetricKind::IndividualFairness => "if",
            MetricKind::DemographicParity => "dp",
            MetricKind::DisparateMistreatment => "dm",
            MetricKind::EqualOpportunity => "eop",
            MetricKind::EqualizedOdds => "eod",
            MetricKind::Hsic => "hsic",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            MetricKind::GroupVariance | MetricKind::IndividualFairness | MetricKind::DemographicParity => true,
            MetricKind::DisparateMistreatment | MetricKind::EqualOpportunity | MetricKind::EqualizedOdds => {
                task == Task::Classification
            }
            MetricKind::Hsic => task == Task::Regression,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown metric `{s}`; valid options: gv, if, dp, dm, eop, eod, hsic"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessMetric {
    pub kind: MetricKind,
    /// Sharpness `rho` of the smoothed DP / EOp / EOd relaxations.
    pub smooth: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln sum exp(z)` and the softmax of `z`.
fn log_sum_exp(z: &[f64]) -> (f64, Vec<f64>) {
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
    let total = exact_sum(e.iter().copied());
    (zmax + total.ln(), e.iter().map(|v| v / total).collect())
}

fn mean(values: impl IntoIterator<Item = f64>, n: usize) -> f64 {
    exact_sum(values) / n as f64
}

impl FairnessMetric {
    pub fn new(kind: MetricKind, smooth: f64) -> Result<Self> {
        if !(smooth > 0.0) || !smooth.is_finite() {
            return Err(Error::InvalidArgument(format!("smooth must be > 0, got {smooth}")));
        }
        Ok(Self { kind, smooth })
    }

    pub fn of(kind: MetricKind) -> Self {
        Self { kind, smooth: DEFAULT_SMOOTH }
    }

    fn check(&self, w: ArrayView1<f64>, ds: &Dataset) -> Result<()> {
        if !self.kind.supports(ds.task()) {
            return Err(Error::IncompatibleTask {
                metric: self.kind.name().into(),
                task: ds.task().to_string(),
            });
        }
        if w.len() != ds.n_features() {
            return Err(Error::Dimension { expected: ds.n_features(), got: w.len() });
        }
        Ok(())
    }

    pub fn value(&self, model: &LossModel, w: ArrayView1<f64>, ds: &Dataset) -> Result<f64> {
        Ok(self.evaluate(model, w, ds, false)?.0)
    }

    pub fn grad(&self, model: &LossModel, w: ArrayView1<f64>, ds: &Dataset) -> Result<Array1<f64>> {
        Ok(self.evaluate(model, w, ds, true)?.1)
    }

    pub fn value_and_grad(
        &self,
        model: &LossModel,
        w: ArrayView1<f64>,
        ds: &Dataset,
    ) -> Result<(f64, Array1<f64>)> {
        self.evaluate(model, w, ds, true)
    }

    fn evaluate(
        &self,
        model: &LossModel,
        w: ArrayView1<f64>,
        ds: &Dataset,
        with_grad: bool,
    ) -> Result<(f64, Array1<f64>)> {
        self.check(w, ds)?;
        if self.kind == MetricKind::GroupVariance {
            return group_variance(model, w, ds, with_grad);
        }
        let f: Vec<f64> = (0..ds.n_samples()).map(|i| ds.row(i).dot(&w)).collect();
        let (value, coef) = match self.kind {
            MetricKind::IndividualFairness => individual_fairness(ds, &f),
            MetricKind::DemographicParity => demographic_parity(ds, &f, self.smooth),
            MetricKind::DisparateMistreatment => covariance_squared(ds, &f, ds.n_samples() as f64),
            MetricKind::Hsic => covariance_squared(ds, &f, ds.n_samples() as f64 - 1.0),
            MetricKind::EqualOpportunity => rate_spread(ds, &f, self.smooth, false)?,
            MetricKind::EqualizedOdds => rate_spread(ds, &f, self.smooth, true)?,
            MetricKind::GroupVariance => unreachable!(),
        };
        let grad = if with_grad {
            let mut acc = ExactVecSum::new(ds.n_features());
            for (i, &c) in coef.iter().enumerate() {
                if c != 0.0 {
                    acc.add_scaled(c, ds.row(i));
                }
            }
            acc.value()
        } else {
            Array1::zeros(ds.n_features())
        };
        Ok((value, grad))
    }

    /// Non-smoothed, indicator-based value used for reporting. Metrics without
    /// a smoothed relaxation return their training value.
    pub fn hard_value(&self, model: &LossModel, w: ArrayView1<f64>, ds: &Dataset) -> Result<f64> {
        self.check(w, ds)?;
        let f: Vec<f64> = (0..ds.n_samples()).map(|i| ds.row(i).dot(&w)).collect();
        let positive = |i: &usize| if f[*i] >= 0.0 { 1.0 } else { 0.0 };
        let spread = |v: &[f64]| {
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let rates = |label: f64, stratum: &'static str| -> Result<Vec<f64>> {
            ds.group_index()
                .iter()
                .enumerate()
                .map(|(a, rows)| {
                    let sel: Vec<usize> = rows.iter().copied().filter(|&i| ds.y()[i] == label).collect();
                    if sel.is_empty() {
                        return Err(Error::EmptyStratum { metric: self.kind.name().into(), group: a, stratum });
                    }
                    Ok(mean(sel.iter().map(positive), sel.len()))
                })
                .collect()
        };
        match self.kind {
            MetricKind::DemographicParity => {
                let p: Vec<f64> = ds
                    .group_index()
                    .iter()
                    .map(|rows| mean(rows.iter().map(positive), rows.len()))
                    .collect();
                let pbar = mean(p.iter().copied(), p.len());
                Ok(p.iter().map(|v| (v - pbar).abs()).fold(0.0, f64::max))
            }
            MetricKind::EqualOpportunity => Ok(spread(&rates(1.0, "positive")?)),
            MetricKind::EqualizedOdds => Ok(spread(&rates(1.0, "positive")?) + spread(&rates(-1.0, "negative")?)),
            _ => self.value(model, w, ds),
        }
    }
}

/// Variance of the group losses; gradient through `grad F_a`.
fn group_variance(
    model: &LossModel,
    w: ArrayView1<f64>,
    ds: &Dataset,
    with_grad: bool,
) -> Result<(f64, Array1<f64>)> {
    let s = ds.n_groups();
    let losses = model.group_losses(w, ds)?;
    let avg = mean(losses.iter().copied(), s);
    let dev: Vec<f64> = losses.iter().map(|l| l - avg).collect();
    let value = mean(dev.iter().map(|d| d * d), s);
    let grad = if with_grad {
        let cross = model.cross_derivative(w, ds)?;
        let weights: Vec<f64> = dev.iter().map(|d| 2.0 * d / s as f64).collect();
        weighted_rows(&cross, &weights)
    } else {
        Array1::zeros(w.len())
    };
    Ok((value, grad))
}

/// Sums `K_p = sum_q exp(-|y_p - y_q|)` and `P_p = sum_q exp(-|y_p - y_q|) f_q`
/// over the rows in `sorted` (ascending in `y`), self term included.
/// Two linear sweeps replace the quadratic pair loop.
fn kernel_sums(sorted: &[usize], y: ArrayView1<f64>, f: &[f64]) -> Vec<(usize, f64, f64)> {
    let m = sorted.len();
    let mut left = vec![(0.0, 0.0); m];
    for p in 1..m {
        let decay = (-(y[sorted[p]] - y[sorted[p - 1]])).exp();
        let (k, s) = left[p - 1];
        left[p] = (decay * (k + 1.0), decay * (s + f[sorted[p - 1]]));
    }
    let mut right = vec![(0.0, 0.0); m];
    for p in (0..m.saturating_sub(1)).rev() {
        let decay = (-(y[sorted[p + 1]] - y[sorted[p]])).exp();
        let (k, s) = right[p + 1];
        right[p] = (decay * (k + 1.0), decay * (s + f[sorted[p + 1]]));
    }
    (0..m)
        .map(|p| {
            let i = sorted[p];
            (i, left[p].0 + 1.0 + right[p].0, left[p].1 + f[i] + right[p].1)
        })
        .collect()
}

/// Cross-group pair penalty `sum_{a<b} sum exp(-|y_i - y_j|) (f_i - f_j)^2`
/// normalized by `sum_{a<b} n_a n_b`.
fn individual_fairness(ds: &Dataset, f: &[f64]) -> (f64, Vec<f64>) {
    let n = ds.n_samples();
    let sizes = ds.group_sizes();
    let total: f64 = sizes.iter().map(|&s| s as f64).sum();
    let pairs = 0.5 * (total * total - sizes.iter().map(|&s| (s * s) as f64).sum::<f64>());
    if pairs == 0.0 {
        return (0.0, vec![0.0; n]);
    }
    let y = ds.y();
    let order = ds.target_order();
    let mut k_other = vec![0.0; n];
    let mut p_other = vec![0.0; n];
    for (i, k, p) in kernel_sums(order, y, f) {
        k_other[i] = k;
        p_other[i] = p;
    }
    for a in 0..ds.n_groups() {
        let own: Vec<usize> = order.iter().copied().filter(|&i| ds.groups()[i] == a).collect();
        for (i, k, p) in kernel_sums(&own, y, f) {
            k_other[i] -= k;
            p_other[i] -= p;
        }
    }
    let c: Vec<f64> = (0..n).map(|i| f[i] * k_other[i] - p_other[i]).collect();
    let value = exact_sum((0..n).map(|i| f[i] * c[i])) / pairs;
    (value, c.iter().map(|ci| 2.0 * ci / pairs).collect())
}

/// Smoothed demographic parity: log-sum-exp of `|p_a - pbar|` where `p_a` is
/// the group mean of `sigmoid(rho f_i)`.
fn demographic_parity(ds: &Dataset, f: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let s = ds.n_groups();
    let sig: Vec<f64> = f.iter().map(|v| sigmoid(rho * v)).collect();
    let p: Vec<f64> = ds
        .group_index()
        .iter()
        .map(|rows| mean(rows.iter().map(|&i| sig[i]), rows.len()))
        .collect();
    let pbar = mean(p.iter().copied(), s);
    let z: Vec<f64> = p.iter().map(|pa| rho * ((pa - pbar) * (pa - pbar)).sqrt()).collect();
    let (lse, soft) = log_sum_exp(&z);
    let value = lse / rho;
    let sign: Vec<f64> = p
        .iter()
        .map(|pa| {
            let d = pa - pbar;
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let shared = exact_sum((0..s).map(|a| soft[a] * sign[a])) / s as f64;
    let mut coef = vec![0.0; f.len()];
    for (b, rows) in ds.group_index().iter().enumerate() {
        let dp = soft[b] * sign[b] - shared;
        let scale = dp * rho / rows.len() as f64;
        for &i in rows {
            coef[i] = scale * sig[i] * (1.0 - sig[i]);
        }
    }
    (value, coef)
}

/// Squared covariance between the centred group label and the predictions,
/// `((1/norm) sum (a_i - abar)(f_i - fbar))^2`.
fn covariance_squared(ds: &Dataset, f: &[f64], norm: f64) -> (f64, Vec<f64>) {
    let n = ds.n_samples();
    let labels: Vec<f64> = ds.groups().iter().map(|&g| g as f64).collect();
    let abar = mean(labels.iter().copied(), n);
    let fbar = mean(f.iter().copied(), n);
    let centred: Vec<f64> = labels.iter().map(|a| a - abar).collect();
    let cov = exact_sum((0..n).map(|i| centred[i] * (f[i] - fbar))) / norm;
    let drift = mean(centred.iter().copied(), n);
    let coef = centred.iter().map(|c| 2.0 * cov * (c - drift) / norm).collect();
    (cov * cov, coef)
}

/// Smoothed true-positive-rate term (and false-positive-rate term when
/// `with_fpr`): `(1/rho)[ln sum exp(rho r_a) - ln sum exp(-rho r_a)]`.
fn rate_spread(ds: &Dataset, f: &[f64], rho: f64, with_fpr: bool) -> Result<(f64, Vec<f64>)> {
    let metric = if with_fpr { "eod" } else { "eop" };
    let sig: Vec<f64> = f.iter().map(|v| sigmoid(rho * v)).collect();
    let mut coef = vec![0.0; f.len()];
    let mut value = 0.0;
    let strata: &[(f64, &'static str)] = if with_fpr {
        &[(1.0, "positive"), (-1.0, "negative")]
    } else {
        &[(1.0, "positive")]
    };
    for &(label, stratum) in strata {
        let mut members = Vec::with_capacity(ds.n_groups());
        for (a, rows) in ds.group_index().iter().enumerate() {
            let sel: Vec<usize> = rows.iter().copied().filter(|&i| ds.y()[i] == label).collect();
            if sel.is_empty() {
                return Err(Error::EmptyStratum { metric: metric.into(), group: a, stratum });
            }
            members.push(sel);
        }
        let rates: Vec<f64> = members
            .iter()
            .map(|sel| mean(sel.iter().map(|&i| sig[i]), sel.len()))
            .collect();
        let up: Vec<f64> = rates.iter().map(|r| rho * r).collect();
        let down: Vec<f64> = rates.iter().map(|r| -rho * r).collect();
        let (lse_up, soft_up) = log_sum_exp(&up);
        let (lse_down, soft_down) = log_sum_exp(&down);
        value += (lse_up - lse_down) / rho;
        for (a, sel) in members.iter().enumerate() {
            let scale = (soft_up[a] + soft_down[a]) * rho / sel.len() as f64;
            for &i in sel {
                coef[i] += scale * sig[i] * (1.0 - sig[i]);
            }
        }
    }
    Ok((value, coef))
}
