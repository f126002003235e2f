//! Per-iteration diagnostics recorded by the solvers.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// One recorded iterate.
///
/// `stationarity` is the solver's own criterion: the generalized-gradient norm
/// for BADR, the Frank-Wolfe gap, or the projected-gradient norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub fairness: f64,
    pub best_fairness: f64,
    pub group_losses: Vec<f64>,
    pub grad_w_norm: f64,
    pub stationarity: f64,
    pub dual_norm: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a point; `best_fairness` is filled in as the running minimum.
    /// Steps must be strictly increasing.
    pub fn push(&mut self, mut point: TrajectoryPoint) {
        if let Some(last) = self.points.last() {
            debug_assert!(point.step > last.step, "trajectory steps must increase");
            point.best_fairness = last.best_fairness.min(point.fairness);
        } else {
            point.best_fairness = point.fairness;
        }
        self.points.push(point);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    /// CSV with columns `step,fairness,best_fairness,grad_w_norm,stationarity,
    /// dual_norm,F_0..,lambda_0..`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let groups = self.points.first().map_or(0, |p| p.lambda.len());
        let mut header = vec![
            "step".to_string(),
            "fairness".into(),
            "best_fairness".into(),
            "grad_w_norm".into(),
            "stationarity".into(),
            "dual_norm".into(),
        ];
        header.extend((0..groups).map(|a| format!("F_{a}")));
        header.extend((0..groups).map(|a| format!("lambda_{a}")));
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let mut cells = vec![
                p.step.to_string(),
                p.fairness.to_string(),
                p.best_fairness.to_string(),
                p.grad_w_norm.to_string(),
                p.stationarity.to_string(),
                p.dual_norm.to_string(),
            ];
            cells.extend(p.group_losses.iter().map(f64::to_string));
            cells.extend(p.lambda.iter().map(f64::to_string));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
