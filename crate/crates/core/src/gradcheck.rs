//! Central finite differences, the reference every analytic gradient is checked against.

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_REL_TOL: f64 = 1e-5;

/// `(f(w + eps e_i) - f(w - eps e_i)) / (2 eps)` for every coordinate.
pub fn finite_diff_grad<F>(f: F, w: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::config("finite-difference eps must be positive"));
    }
    let mut probe = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe);
        probe[i] = orig - eps;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numerical(
                None,
                format!("finite-difference oracle hit a non-finite value at coordinate {i}"),
            ));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Largest `|a - b| / max(1, |a|)` over coordinates; `a` is the analytic gradient.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let g = finite_diff_grad(|w| w.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_grad(|_| 3.5, &[0.3, -1.0, 4.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_finite_is_reported() {
        let err = finite_diff_grad(|w| if w[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-5);
        assert!(matches!(err, Err(Error::Numerical { .. })));
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(finite_diff_grad(|_| 0.0, &[0.0], 0.0).is_err());
    }
}
