//! Small dense helpers shared by the graph and problem modules.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::rng::{streams, Stream};

pub(crate) fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub(crate) fn dist_sq(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn all_finite(v: &Array1<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Standard-normal start vector drawn from a fixed stream.
pub(crate) fn seeded_start(dim: usize) -> Array1<f64> {
    let mut s = Stream::new(0, streams::POWER_START);
    Array1::from_shape_fn(dim, |_| s.normal())
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Plain power iteration with the Rayleigh quotient as estimate. Stops once
/// the eigen-residual `‖Bv − λv‖` falls to `rel_tol · λ + abs_tol`.
pub(crate) fn top_eigenvalue_psd<F>(
    mut apply: F,
    start: Array1<f64>,
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<f64>
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    let n0 = norm(&start);
    if n0 == 0.0 {
        return Ok(0.0);
    }
    let mut v = start / n0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let lambda = v.dot(&w);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        let residual = norm(&(&w - &(&v * lambda)));
        if !residual.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        if residual <= rel_tol * lambda.abs() + abs_tol {
            return Ok(lambda);
        }
        v = w / wn;
    }
    Err(Error::NonConvergence {
        what: what.to_string(),
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_operator() {
        let d = array![1.0, 9.0, 4.0];
        let lam = top_eigenvalue_psd(|v| &d * v, seeded_start(3), 1e-12, 0.0, 10_000, "diag").unwrap();
        assert!((lam - 9.0).abs() < 1e-10);
    }

    #[test]
    fn zero_operator() {
        let lam = top_eigenvalue_psd(|v| v * 0.0, seeded_start(4), 1e-10, 0.0, 10, "zero").unwrap();
        assert_eq!(lam, 0.0);
    }

    #[test]
    fn cap_reports_non_convergence() {
        // Degenerate-but-rotating spectrum: the 2x2 rotation squared is -I, not PSD,
        // so the residual never shrinks.
        let err = top_eigenvalue_psd(|v| array![-v[1], v[0]], seeded_start(2), 1e-10, 0.0, 50, "rot");
        assert!(matches!(err, Err(Error::NonConvergence { .. })));
    }
}
