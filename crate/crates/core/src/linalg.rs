//! Matrix-free conjugate gradients and power iteration.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::sum::{exact_dot, norm};

/// Solves `A x = b` for symmetric positive-definite `A` given only `x -> A x`.
///
/// Stops when `||r|| <= tol * max(1, ||b||)`.
pub fn conjugate_gradient<F>(mut apply: F, b: &Array1<f64>, tol: f64, max_iter: usize) -> Result<Array1<f64>>
where
    F: FnMut(&Array1<f64>) -> Result<Array1<f64>>,
{
    let threshold = tol * norm(b.view()).max(1.0);
    let mut x = Array1::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = exact_dot(r.view(), r.view());
    if rr.sqrt() <= threshold {
        return Ok(x);
    }
    for _ in 0..max_iter {
        let ap = apply(&p)?;
        let pap = exact_dot(p.view(), ap.view());
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rr_next = exact_dot(r.view(), r.view());
        if rr_next.sqrt() <= threshold {
            return Ok(x);
        }
        p = &r + &(p * (rr_next / rr));
        rr = rr_next;
    }
    // recompute the true residual before giving up
    let residual = norm((b - &apply(&x)?).view());
    if residual <= threshold {
        return Ok(x);
    }
    Err(Error::CgNotConverged { iters: max_iter, residual })
}

/// Largest eigenvalue of a symmetric PSD operator by `iters` power steps from
/// a fixed, non-degenerate start vector. Returns the final Rayleigh quotient.
pub fn power_iteration<F>(mut apply: F, dim: usize, iters: usize) -> Result<f64>
where
    F: FnMut(&Array1<f64>) -> Result<Array1<f64>>,
{
    let mut v: Array1<f64> = (0..dim).map(|k| 1.0 + 0.1 * ((k * 7 + 3) % 11) as f64).collect();
    v /= norm(v.view());
    let mut estimate = 0.0;
    for _ in 0..iters {
        let av = apply(&v)?;
        estimate = exact_dot(v.view(), av.view());
        let nav = norm(av.view());
        if nav == 0.0 {
            return Ok(0.0);
        }
        v = av / nav;
    }
    Ok(estimate)
}
