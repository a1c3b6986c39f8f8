//! Thin Cholesky helpers with jitter escalation.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, Diag, InverseC, SolveTriangular, UPLO};

use crate::error::{Error, Result};

/// Jitter ladder applied to the diagonal when a factorization fails,
/// expressed relative to the mean diagonal entry.
const JITTER_LEVELS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower Cholesky factor, retrying with growing diagonal jitter.
pub fn chol_lower(matrix: &Array2<f64>, what: &str) -> Result<Array2<f64>> {
    let n = matrix.nrows();
    let mean_diag = matrix.diag().sum() / n.max(1) as f64;
    for &level in &JITTER_LEVELS {
        let mut m = matrix.clone();
        if level > 0.0 {
            for i in 0..n {
                m[[i, i]] += level * mean_diag.max(1.0);
            }
        }
        if let Ok(l) = m.cholesky(UPLO::Lower) {
            return Ok(l);
        }
    }
    Err(Error::Numerical(format!(
        "{what} is not positive definite (n = {n}, mean diagonal = {mean_diag:.3e}, \
         diagonal range = [{:.3e}, {:.3e}])",
        matrix.diag().iter().cloned().fold(f64::INFINITY, f64::min),
        matrix.diag().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )))
}

/// Inverse of an SPD matrix via its Cholesky factorization.
pub fn chol_inverse(matrix: &Array2<f64>, what: &str) -> Result<Array2<f64>> {
    let n = matrix.nrows();
    let mean_diag = matrix.diag().sum() / n.max(1) as f64;
    for &level in &JITTER_LEVELS {
        let mut m = matrix.clone();
        if level > 0.0 {
            for i in 0..n {
                m[[i, i]] += level * mean_diag.max(1.0);
            }
        }
        if let Ok(inv) = m.invc() {
            return symmetrized(inv).map(Ok).unwrap();
        }
    }
    Err(Error::Numerical(format!("{what} could not be inverted (n = {n})")))
}

fn symmetrized(mut m: Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Some(m)
}

/// Solves L x = b for lower-triangular L.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    l.solve_triangular(UPLO::Lower, Diag::NonUnit, b)
        .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
}

/// log determinant of the matrix whose Cholesky lower factor is `l`.
pub fn logdet_from_factor(l: &Array2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>()
}
