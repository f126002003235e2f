//! Strongly convex per-sample losses for linear predictors `f(w, x) = <w, x>`,
//! group losses, and the weighted-sum (scalarized) lower-level objective.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::simplex::GroupWeights;
use crate::sum::{exact_dot, exact_sum, ExactVecSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `(y - <w,x>)^2`
    Ridge,
    /// `log(1 + exp(-y <w,x>))`
    Logistic,
    /// Squared hinge `max(0, 1 - y <w,x>)^2`
    Svm2,
}

/// A loss family plus its l2 coefficient; every loss carries `(reg/2)||w||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub reg: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LossModel {
    pub fn new(kind: LossKind, reg: f64) -> Result<Self> {
        if !(reg >= 0.0) || !reg.is_finite() {
            return Err(Error::InvalidArgument(format!("reg must be >= 0, got {reg}")));
        }
        Ok(Self { kind, reg })
    }

    pub fn ridge(reg: f64) -> Self {
        Self { kind: LossKind::Ridge, reg }
    }

    pub fn logistic(reg: f64) -> Self {
        Self { kind: LossKind::Logistic, reg }
    }

    pub fn svm2(reg: f64) -> Self {
        Self { kind: LossKind::Svm2, reg }
    }

    /// Data term and its first and second derivatives in the prediction `f`.
    fn data_term(&self, f: f64, y: f64) -> (f64, f64, f64) {
        match self.kind {
            LossKind::Ridge => {
                let r = y - f;
                (r * r, -2.0 * r, 2.0)
            }
            LossKind::Logistic => {
                let m = y * f;
                let loss = (-m).max(0.0) + (-m.abs()).exp().ln_1p();
                let s_neg = sigmoid(-m);
                (loss, -y * s_neg, sigmoid(m) * s_neg)
            }
            LossKind::Svm2 => {
                let h = 1.0 - y * f;
                if h > 0.0 {
                    (h * h, -2.0 * y * h, 2.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    fn check_dim(w: ArrayView1<f64>, d: usize) -> Result<()> {
        if w.len() != d {
            return Err(Error::Dimension { expected: d, got: w.len() });
        }
        Ok(())
    }

    fn check_group(ds: &Dataset, a: usize) -> Result<()> {
        if a >= ds.n_groups() {
            return Err(Error::UnknownGroup { group: a, groups: ds.n_groups() });
        }
        Ok(())
    }

    fn check_weights(ds: &Dataset, lambda: &GroupWeights) -> Result<()> {
        if lambda.len() != ds.n_groups() {
            return Err(Error::OffSimplex(format!(
                "{} weights for {} groups",
                lambda.len(),
                ds.n_groups()
            )));
        }
        Ok(())
    }

    fn penalty(&self, w: ArrayView1<f64>) -> f64 {
        0.5 * self.reg * exact_dot(w, w)
    }

    pub fn sample_loss(&self, w: ArrayView1<f64>, x: ArrayView1<f64>, y: f64) -> Result<f64> {
        Self::check_dim(w, x.len())?;
        Ok(self.data_term(x.dot(&w), y).0 + self.penalty(w))
    }

    /// Mean loss over `rows` (plus the penalty). `rows` must be non-empty.
    pub fn rows_loss(&self, w: ArrayView1<f64>, ds: &Dataset, rows: &[usize]) -> Result<f64> {
        Self::check_dim(w, ds.n_features())?;
        let y = ds.y();
        let total = exact_sum(rows.iter().map(|&i| self.data_term(ds.row(i).dot(&w), y[i]).0));
        Ok(total / rows.len() as f64 + self.penalty(w))
    }

    /// Gradient of [`LossModel::rows_loss`].
    pub fn rows_grad(&self, w: ArrayView1<f64>, ds: &Dataset, rows: &[usize]) -> Result<Array1<f64>> {
        Self::check_dim(w, ds.n_features())?;
        let y = ds.y();
        let scale = 1.0 / rows.len() as f64;
        let mut acc = ExactVecSum::new(w.len());
        for &i in rows {
            let x = ds.row(i);
            let (_, d1, _) = self.data_term(x.dot(&w), y[i]);
            acc.add_scaled(d1 * scale, x);
        }
        Ok(acc.value() + &(w.to_owned() * self.reg))
    }

    pub fn group_loss(&self, w: ArrayView1<f64>, ds: &Dataset, a: usize) -> Result<f64> {
        Self::check_group(ds, a)?;
        self.rows_loss(w, ds, &ds.group_index()[a])
    }

    pub fn group_grad(&self, w: ArrayView1<f64>, ds: &Dataset, a: usize) -> Result<Array1<f64>> {
        Self::check_group(ds, a)?;
        self.rows_grad(w, ds, &ds.group_index()[a])
    }

    /// `F_a(w)` for every group.
    pub fn group_losses(&self, w: ArrayView1<f64>, ds: &Dataset) -> Result<Vec<f64>> {
        (0..ds.n_groups()).map(|a| self.group_loss(w, ds, a)).collect()
    }

    /// `S x d` matrix whose row `a` is `grad F_a(w)`.
    pub fn cross_derivative(&self, w: ArrayView1<f64>, ds: &Dataset) -> Result<Array2<f64>> {
        let rows: Vec<&[usize]> = ds.group_index().iter().map(Vec::as_slice).collect();
        self.cross_derivative_on(w, ds, &rows)
    }

    /// Cross derivative where group `a` is estimated from `rows[a]` only.
    pub fn cross_derivative_on(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        rows: &[&[usize]],
    ) -> Result<Array2<f64>> {
        let d = ds.n_features();
        Self::check_dim(w, d)?;
        let mut out = Array2::zeros((rows.len(), d));
        for (a, r) in rows.iter().enumerate() {
            out.row_mut(a).assign(&self.rows_grad(w, ds, r)?);
        }
        Ok(out)
    }

    pub fn scalarized_loss(&self, w: ArrayView1<f64>, ds: &Dataset, lambda: &GroupWeights) -> Result<f64> {
        Self::check_weights(ds, lambda)?;
        let losses = self.group_losses(w, ds)?;
        Ok(exact_sum(lambda.iter().zip(&losses).map(|(l, f)| l * f)))
    }

    /// `sum_a lambda_a grad F_a(w)`, i.e. `cross_derivative(w)^T lambda`.
    pub fn scalarized_grad(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        lambda: &GroupWeights,
    ) -> Result<Array1<f64>> {
        Self::check_weights(ds, lambda)?;
        Ok(weighted_rows(&self.cross_derivative(w, ds)?, lambda))
    }

    /// Weighted Hessian-vector product `(sum_a lambda_a hess F_a(w)) v`,
    /// evaluated matrix-free.
    pub fn scalarized_hvp(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        lambda: &GroupWeights,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        Self::check_weights(ds, lambda)?;
        let rows: Vec<&[usize]> = ds.group_index().iter().map(Vec::as_slice).collect();
        self.scalarized_hvp_on(w, ds, lambda, v, &rows)
    }

    /// As [`LossModel::scalarized_hvp`] with group `a` estimated from `rows[a]`.
    pub fn scalarized_hvp_on(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        lambda: &[f64],
        v: ArrayView1<f64>,
        rows: &[&[usize]],
    ) -> Result<Array1<f64>> {
        let d = ds.n_features();
        Self::check_dim(w, d)?;
        Self::check_dim(v, d)?;
        let y = ds.y();
        let mut acc = ExactVecSum::new(d);
        for (a, r) in rows.iter().enumerate() {
            if lambda[a] == 0.0 {
                continue;
            }
            let scale = lambda[a] / r.len() as f64;
            for &i in r.iter() {
                let x = ds.row(i);
                let (_, _, d2) = self.data_term(x.dot(&w), y[i]);
                if d2 != 0.0 {
                    acc.add_scaled(scale * d2 * x.dot(&v), x);
                }
            }
        }
        let mut reg_part = ExactVecSum::new(d);
        let weight_total = exact_sum(lambda.iter().copied());
        reg_part.add_scaled(self.reg * weight_total, v);
        Ok(acc.value() + &reg_part.value())
    }

    /// Weighted objective and gradient in a single pass over the rows, with
    /// arbitrary non-negative `weights` per group (they need not sum to one).
    /// Used by the iterative solvers.
    pub fn weighted_loss_grad(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        weights: &[f64],
    ) -> Result<(f64, Array1<f64>)> {
        let d = ds.n_features();
        Self::check_dim(w, d)?;
        if weights.len() != ds.n_groups() {
            return Err(Error::Dimension { expected: ds.n_groups(), got: weights.len() });
        }
        let y = ds.y();
        let mut loss = crate::sum::ExactSum::new();
        let mut acc = ExactVecSum::new(d);
        for (a, rows) in ds.group_index().iter().enumerate() {
            if weights[a] == 0.0 {
                continue;
            }
            let scale = weights[a] / rows.len() as f64;
            for &i in rows {
                let x = ds.row(i);
                let (l, d1, _) = self.data_term(x.dot(&w), y[i]);
                loss.add(scale * l);
                acc.add_scaled(scale * d1, x);
            }
        }
        let total = exact_sum(weights.iter().copied());
        let value = loss.value() + total * self.penalty(w);
        Ok((value, acc.value() + &(w.to_owned() * (self.reg * total))))
    }

    /// Hessian-vector product of a single group loss.
    pub fn group_hvp(
        &self,
        w: ArrayView1<f64>,
        ds: &Dataset,
        a: usize,
        v: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        let lambda = GroupWeights::vertex(a, ds.n_groups())?;
        self.scalarized_hvp(w, ds, &lambda, v)
    }
}

/// `sum_a weights_a * m.row(a)`, correctly rounded per component.
pub fn weighted_rows(m: &Array2<f64>, weights: &[f64]) -> Array1<f64> {
    let mut acc = ExactVecSum::new(m.ncols());
    for (row, &wa) in m.rows().into_iter().zip(weights) {
        acc.add_scaled(wa, row);
    }
    acc.value()
}
