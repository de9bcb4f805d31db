//! Spectral norm of symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Above this dimension the spectral norm switches from a full eigensolve to
/// power iteration.
pub const DENSE_EIGEN_MAX_DIM: usize = 64;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },
}

/// Checks symmetry within `1e-12` relative to the largest entry.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let scale = m.amax().max(1.0);
    for r in 0..rows {
        for c in (r + 1)..cols {
            let gap = (m[(r, c)] - m[(c, r)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(LinalgError::Asymmetric { row: r, col: c, gap });
            }
        }
    }
    Ok(())
}

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Uses a dense symmetric eigensolve up to [`DENSE_EIGEN_MAX_DIM`] and power
/// iteration on `m` beyond it. Power iteration tracks `‖m v‖` for unit `v`,
/// which converges to `max |λ|` even when `±λ` are tied.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    check_symmetric(m)?;
    let dim = m.nrows();
    if dim == 0 {
        return Ok(0.0);
    }
    if dim <= DENSE_EIGEN_MAX_DIM {
        let eig = SymmetricEigen::new(m.clone());
        Ok(eig.eigenvalues.amax())
    } else {
        Ok(power_iteration(m))
    }
}

fn power_iteration(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    if m.amax() == 0.0 {
        return 0.0;
    }
    // Deterministic start with components in every direction.
    let mut v = DVector::from_fn(dim, |k, _| 1.0 + (k as f64 + 1.0).sqrt().fract());
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= POWER_TOL * norm;
        estimate = norm;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Spectral norm of a rectangular matrix via its `rows x rows` Gram matrix.
pub fn operator_norm(x: &DMatrix<f64>) -> f64 {
    let gram = x * x.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    spectral_norm(&gram).map(f64::sqrt).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        assert_eq!(spectral_norm(&DMatrix::identity(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn rank_one_logistic_hessian() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) * 0.09375;
        assert!((spectral_norm(&m).unwrap() - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(spectral_norm(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
        assert_eq!(spectral_norm(&DMatrix::zeros(80, 80)).unwrap(), 0.0);
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spectral_norm(&m), Err(LinalgError::Asymmetric { .. })));
        let r = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(spectral_norm(&r), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn power_iteration_matches_dense_with_negative_dominant() {
        let dim = 70;
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                if r == 3 { -9.0 } else { (r % 5) as f64 }
            } else {
                0.01 / (1.0 + (r as f64 - c as f64).abs())
            }
        });
        let dense = SymmetricEigen::new(m.clone()).eigenvalues.amax();
        let power = spectral_norm(&m).unwrap();
        assert!((dense - power).abs() <= 1e-9 * dense, "{dense} vs {power}");
    }

    #[test]
    fn operator_norm_of_rectangular() {
        let x = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        assert!((operator_norm(&x) - 4.0).abs() < 1e-14);
    }
}
