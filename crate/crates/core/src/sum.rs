//! Correctly rounded floating-point summation.
//!
//! Every per-sample reduction in the crate goes through [`ExactSum`], which
//! keeps a list of non-overlapping partials (Shewchuk) and rounds once at the
//! end. The result is the exactly rounded sum of the inputs, so it does not
//! depend on the order in which samples are visited.

use ndarray::{Array1, ArrayView1};

#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
    has_special: bool,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.special += x;
            self.has_special = true;
            return;
        }
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        if !x.is_finite() {
            // intermediate overflow: fall back to the plain sum
            self.special += x;
            self.has_special = true;
            return;
        }
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        if self.has_special {
            return self.special;
        }
        let p = &self.partials;
        if p.is_empty() {
            return 0.0;
        }
        let mut n = p.len() - 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: make the rounding of the remaining partials explicit
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Component-wise [`ExactSum`] for vectors.
#[derive(Debug, Clone)]
pub struct ExactVecSum {
    parts: Vec<ExactSum>,
}

impl ExactVecSum {
    pub fn new(dim: usize) -> Self {
        Self {
            parts: vec![ExactSum::new(); dim],
        }
    }

    /// Adds `coef * x` (each product rounded once).
    pub fn add_scaled(&mut self, coef: f64, x: ArrayView1<f64>) {
        debug_assert_eq!(x.len(), self.parts.len());
        for (acc, &xi) in self.parts.iter_mut().zip(x.iter()) {
            acc.add(coef * xi);
        }
    }

    pub fn value(&self) -> Array1<f64> {
        self.parts.iter().map(ExactSum::value).collect()
    }
}

/// Correctly rounded sum of an iterator.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Correctly rounded dot product of the elementwise-rounded products.
pub fn exact_dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    exact_sum(a.iter().zip(b.iter()).map(|(x, y)| x * y))
}

pub fn norm(a: ArrayView1<f64>) -> f64 {
    exact_dot(a, a).sqrt()
}
