//! Spectral norm of `W - J`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this size the gap is computed by power iteration instead of a full
/// symmetric eigendecomposition.
pub const EIGEN_MAX_N: usize = 512;
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 10_000;

/// `‖W − J‖₂²`: the squared largest singular value of `W − J`.
pub fn spectral_gap(w: &DMatrix<f64>) -> Result<f64> {
    check_square(w)?;
    if w.nrows() <= EIGEN_MAX_N {
        spectral_gap_eigen(w)
    } else {
        spectral_gap_power(w, POWER_TOL, POWER_MAX_ITER)
    }
}

fn check_square(w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::NotSquare {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    Ok(())
}

fn deviation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    w - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Largest eigenvalue of `(W − J)ᵀ(W − J)` from a full symmetric
/// eigendecomposition.
pub fn spectral_gap_eigen(w: &DMatrix<f64>) -> Result<f64> {
    check_square(w)?;
    let a = deviation(w);
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(0.0, f64::max))
}

/// Power iteration on `(W − J)ᵀ(W − J)`, stopping when the Rayleigh quotient
/// changes by less than `tol` (relative).
pub fn spectral_gap_power(w: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    check_square(w)?;
    let n = w.nrows();
    let a = deviation(w);
    let at = a.transpose();
    // Deterministic start with no special alignment to the eigenbasis.
    let mut v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.618_033_988_75).sin() + 1e-3);
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let next = &at * (&a * &v);
        let rayleigh = v.dot(&next);
        let next_norm = next.norm();
        if next_norm == 0.0 {
            return Ok(0.0);
        }
        v = next / next_norm;
        if (rayleigh - estimate).abs() <= tol * rayleigh.abs().max(f64::MIN_POSITIVE) {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    log::warn!("power iteration did not reach tolerance {tol} in {max_iter} iterations");
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_matrix_has_zero_gap() {
        let j = DMatrix::from_element(4, 4, 0.25);
        assert!(spectral_gap(&j).unwrap().abs() < 1e-15);
    }

    #[test]
    fn identity_has_unit_gap() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!((spectral_gap(&i).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(spectral_gap(&m), Err(Error::NotSquare { rows: 2, cols: 3 }));
    }
}
