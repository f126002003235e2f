//! The unit probability simplex over groups.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::exact_sum;

/// Tolerance accepted by [`GroupWeights::new`] on the unit-sum constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupWeights(Vec<f64>);

impl GroupWeights {
    /// Validates `values` against the simplex (entries ≥ 0, sum within
    /// [`SIMPLEX_TOL`] of one).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::OffSimplex("no groups".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::OffSimplex(format!("entry {v} is negative or non-finite")));
        }
        let total = exact_sum(values.iter().copied());
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::OffSimplex(format!("entries sum to {total}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(groups: usize) -> Self {
        Self(vec![1.0 / groups as f64; groups])
    }

    pub fn vertex(a: usize, groups: usize) -> Result<Self> {
        if a >= groups {
            return Err(Error::UnknownGroup { group: a, groups });
        }
        let mut v = vec![0.0; groups];
        v[a] = 1.0;
        Ok(Self(v))
    }

    /// Weights proportional to `raw` (non-negative, not all zero).
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let total = exact_sum(raw.iter().copied());
        if !(total > 0.0) || raw.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::OffSimplex("cannot normalize".into()));
        }
        Ok(Self(raw.iter().map(|v| v / total).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GroupWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection onto the simplex by sorting.
///
/// Sort descending (ties by index), find the largest `k` with
/// `u_k > (sum_{j<=k} u_j - 1) / k`, and shift by that threshold.
pub fn project_simplex(x: &[f64]) -> GroupWeights {
    assert!(!x.is_empty(), "projection onto an empty simplex");
    // points already on the simplex up to rounding stay put
    if x.iter().all(|&v| v >= 0.0) && (exact_sum(x.iter().copied()) - 1.0).abs() <= 4.0 * f64::EPSILON * x.len() as f64 {
        return GroupWeights(x.to_vec());
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumsum += x[i];
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if x[i] - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = x.iter().map(|&v| (v - theta).max(0.0)).collect();
    // remove the last bits of drift
    let total = exact_sum(out.iter().copied());
    if total > 0.0 && total != 1.0 {
        for v in out.iter_mut() {
            *v /= total;
        }
    }
    GroupWeights(out)
}
