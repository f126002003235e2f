//! A fairness problem: dataset, loss model and unfairness metric together.

use ndarray::{Array1, ArrayView1};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::power_iteration;
use crate::metrics::FairnessMetric;
use crate::models::{LossKind, LossModel};
use crate::simplex::GroupWeights;

/// Power-iteration steps used for curvature estimates.
pub const POWER_STEPS: usize = 20;

#[derive(Debug, Clone)]
pub struct Problem {
    pub data: Dataset,
    pub model: LossModel,
    pub metric: FairnessMetric,
}

impl Problem {
    /// Checks that the loss and the metric both fit the dataset's task.
    pub fn new(data: Dataset, model: LossModel, metric: FairnessMetric) -> Result<Self> {
        if model.kind != LossKind::Ridge && data.task() != Task::Classification {
            return Err(Error::InvalidArgument(format!(
                "{:?} loss needs a classification dataset",
                model.kind
            )));
        }
        if !metric.kind.supports(data.task()) {
            return Err(Error::IncompatibleTask {
                metric: metric.kind.name().into(),
                task: data.task().to_string(),
            });
        }
        Ok(Self { data, model, metric })
    }

    /// Same model and metric on another dataset (e.g. a test split).
    pub fn with_data(&self, data: Dataset) -> Result<Self> {
        Self::new(data, self.model, self.metric)
    }

    pub fn n_groups(&self) -> usize {
        self.data.n_groups()
    }

    pub fn n_features(&self) -> usize {
        self.data.n_features()
    }

    pub fn fairness(&self, w: ArrayView1<f64>) -> Result<f64> {
        self.metric.value(&self.model, w, &self.data)
    }

    pub fn fairness_grad(&self, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.metric.grad(&self.model, w, &self.data)
    }

    pub fn group_losses(&self, w: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.model.group_losses(w, &self.data)
    }

    /// Largest eigenvalue of `sum_a lambda_a hess F_a(0)` (regularizer included).
    ///
    /// For all three losses the curvature is largest at `w = 0`, so this bounds
    /// the smoothness constant of the weighted objective everywhere.
    pub fn curvature_at_zero(&self, lambda: &GroupWeights) -> Result<f64> {
        let zero = Array1::zeros(self.n_features());
        power_iteration(
            |v| self.model.scalarized_hvp(zero.view(), &self.data, lambda, v.view()),
            self.n_features(),
            POWER_STEPS,
        )
    }

    /// Worst-group curvature at `w = 0`.
    pub fn lipschitz_estimate(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for a in 0..self.n_groups() {
            worst = worst.max(self.curvature_at_zero(&GroupWeights::vertex(a, self.n_groups())?)?);
        }
        Ok(worst)
    }
}
