use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smooth acyclicity measure `h(W) = tr(exp(W ∘ W)) - d`, zero exactly when
/// the weighted digraph of `W` has no cycles.
pub fn acyclicity(w: &DMatrix<f64>) -> Result<f64> {
    Ok(acyclicity_with_grad(w)?.0)
}

/// `h(W)` together with its gradient `exp(W ∘ W)ᵀ ∘ 2W`.
pub fn acyclicity_with_grad(w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if !w.is_square() {
        return Err(Error::Validation(format!(
            "weight matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let d = w.nrows();
    if d == 0 {
        return Ok((0.0, DMatrix::zeros(0, 0)));
    }
    let e = w.component_mul(w).exp();
    let h = e.trace() - d as f64;
    let grad = e.transpose().component_mul(w) * 2.0;
    // tr(exp(A)) >= d for non-negative A; clamp rounding noise
    Ok((h.max(0.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix() {
        assert_eq!(acyclicity(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn two_cycle() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let h = acyclicity(&w).unwrap();
        assert!((h - (2.0 * 1f64.cosh() - 2.0)).abs() < 1e-9, "{h}");
    }

    #[test]
    fn upper_triangular_is_acyclic() {
        let mut w = DMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in (i + 1)..5 {
                w[(i, j)] = 0.3 * (i + j) as f64 - 0.7;
            }
        }
        assert!(acyclicity(&w).unwrap() <= 1e-12);
    }

    #[test]
    fn non_square_rejected() {
        assert!(acyclicity(&DMatrix::zeros(2, 3)).is_err());
    }
}
