//! Oracles and fixtures shared by the integration tests. Nothing here calls
//! into the library's own checking code.
#![allow(dead_code)]

use badr::data::{standardize, synth_biased, synth_biased_with_task, Dataset, Task};
use badr::metrics::{FairnessMetric, MetricKind};
use badr::models::LossModel;
use badr::Problem;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-6;

pub fn fd_grad(mut f: impl FnMut(&Array1<f64>) -> f64, w: &Array1<f64>, h: f64) -> Array1<f64> {
    Array1::from_shape_fn(w.len(), |k| {
        let mut p = w.clone();
        p[k] += h;
        let mut m = w.clone();
        m[k] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

pub fn l2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub fn rel_err(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let s = l2(a).max(l2(b));
    if s == 0.0 {
        0.0
    } else {
        l2(&(a - b)) / s
    }
}

/// Random dataset with 2..=3 groups; in classification every group gets both
/// labels.
pub fn random_dataset(rng: &mut ChaCha8Rng, task: Task, max_d: usize, max_n: usize) -> Dataset {
    let s: usize = rng.random_range(2..=3);
    let d = rng.random_range(1..=max_d);
    let n = rng.random_range(4 * s..=max_n);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal));
    let groups: Vec<usize> = (0..n).map(|i| if i < 2 * s { i % s } else { rng.random_range(0..s) }).collect();
    let y = Array1::from_shape_fn(n, |i| match task {
        Task::Classification if i < 2 * s => {
            if i < s {
                1.0
            } else {
                -1.0
            }
        }
        Task::Classification => {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        }
        Task::Regression => rng.sample(StandardNormal),
    });
    Dataset::new(x, y, groups, s, task).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Two balanced groups, `d = 5` after the intercept, `n = 200`.
pub fn toy_dataset() -> Dataset {
    standardize(&synth_biased(&[100, 100], 4, 0.8, 7).unwrap())
}

pub fn toy(metric: MetricKind) -> Problem {
    Problem::new(toy_dataset(), LossModel::logistic(1e-2), FairnessMetric::of(metric)).unwrap()
}

pub fn ridge_toy(metric: MetricKind) -> Problem {
    let ds = standardize(&synth_biased_with_task(Task::Regression, &[100, 100], 4, 0.8, 7).unwrap());
    Problem::new(ds, LossModel::ridge(1e-2), FairnessMetric::of(metric)).unwrap()
}

/// The biased toy shipped as `configs/biased_toy.json`.
pub fn bundled_toy(metric: &str) -> (Problem, Option<Dataset>) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/biased_toy.json");
    let mut cfg = badr::cli::parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cfg.metric.as_mut().unwrap().name = metric.to_string();
    let loaded = badr::cli::load_problem_from(&cfg, path.parent().unwrap()).unwrap();
    (loaded.train, loaded.test)
}

/// Euclidean simplex projection by trying every support set.
pub fn project_by_enumeration(x: &[f64]) -> Vec<f64> {
    let s = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << s) {
        let idx: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
        let theta = (idx.iter().map(|&i| x[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut p = vec![0.0; s];
        let mut ok = true;
        for &i in &idx {
            p[i] = x[i] - theta;
            ok &= p[i] >= 0.0;
        }
        if !ok {
            continue;
        }
        let dist: f64 = (0..s).map(|i| (p[i] - x[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|b| dist < b.0) {
            best = Some((dist, p));
        }
    }
    best.unwrap().1
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs())).unwrap();
        for k in 0..n {
            a.swap([c, k], [p, k]);
        }
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[[r, c]] / a[[c, c]];
            for k in c..n {
                a[[r, k]] -= f * a[[c, k]];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    x
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
