//! Dense linear-algebra helpers shared by the least-squares and GP code.

use ndarray::prelude::*;
use ndarray_linalg::cholesky::{CholeskyInto, UPLO};
use ndarray_linalg::triangular::{Diag, SolveTriangularInplace};

use crate::error::{Error, Result};

/// Jitter ladder applied to the diagonal when a factorization fails:
/// 1e-12 up to 1e-6 in factor-10 steps.
pub const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower-triangular Cholesky factor of a symmetric matrix, retrying with the
/// jitter ladder on failure. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(matrix: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    debug_assert_eq!(matrix.nrows(), matrix.ncols());
    if let Ok(l) = matrix.clone().cholesky_into(UPLO::Lower) {
        return Ok((l, 0.0));
    }
    for &jitter in &JITTER_LADDER {
        let mut jittered = matrix.clone();
        for i in 0..jittered.nrows() {
            jittered[[i, i]] += jitter;
        }
        if let Ok(l) = jittered.cholesky_into(UPLO::Lower) {
            return Ok((l, jitter));
        }
    }
    let diag = matrix.diag();
    let max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let estimate = if min > 0.0 { max / min } else { f64::INFINITY };
    Err(Error::Conditioning {
        message: format!(
            "cholesky failed after jitter ladder up to {:.0e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        ),
        condition_estimate: estimate,
    })
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let mut x = b.clone().insert_axis(Axis(1));
    l.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, &mut x)
        .expect("triangular solve");
    x.remove_axis(Axis(1))
}

/// Solve `L X = B` for lower-triangular `L` and a matrix right-hand side.
pub fn solve_lower_matrix(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut x = b.clone();
    l.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, &mut x)
        .expect("triangular solve");
    x
}

/// Solve `A x = b` from a precomputed Cholesky factor `A = L L^T`.
pub fn solve_spd(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let mut x = b.clone().insert_axis(Axis(1));
    l.solve_triangular_inplace(UPLO::Lower, Diag::NonUnit, &mut x)
        .expect("triangular solve");
    let lt = l.t().to_owned();
    lt.solve_triangular_inplace(UPLO::Upper, Diag::NonUnit, &mut x)
        .expect("triangular solve");
    x.remove_axis(Axis(1))
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub fn spd_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let linv = solve_lower_matrix(l, &Array2::eye(n));
    linv.t().dot(&linv)
}

/// `log det A` from the Cholesky factor of `A`.
pub fn log_det_from_cholesky(l: &Array2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solve a small symmetric positive-definite system directly (normal
/// equations in the least-squares code). Falls back on an error when the
/// system is singular.
pub fn solve_small_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let (l, _) = cholesky_with_jitter(a)?;
    Ok(solve_spd(&l, b))
}
