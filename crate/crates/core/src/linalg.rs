//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of tenfold jitter escalations after `jitter0`.
pub const MAX_JITTER_STEPS: i32 = 6;

#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    /// Lower-triangular factor of `M + jitter * I`.
    pub l: DMatrix<f64>,
    /// Diagonal jitter that was needed.
    pub jitter: f64,
}

/// Cholesky factor of a symmetric matrix, adding the smallest diagonal jitter
/// from `{0, j0, 10 j0, ..., 1e6 j0}` that makes the factorization succeed.
pub fn chol_jitter(m: &DMatrix<f64>, jitter0: f64) -> Result<JitteredCholesky> {
    assert!(m.is_square(), "chol_jitter needs a square matrix");
    let ladder = std::iter::once(0.0)
        .chain((0..=MAX_JITTER_STEPS).map(|p| jitter0 * 10f64.powi(p)));
    for eps in ladder {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += eps;
        }
        if let Some(c) = nalgebra::linalg::Cholesky::new(a) {
            let l = c.unpack();
            if l.iter().all(|v| v.is_finite()) {
                return Ok(JitteredCholesky { l, jitter: eps });
            }
        }
    }
    Err(Error::NotFactorizable {
        max_jitter: jitter0 * 10f64.powi(MAX_JITTER_STEPS),
    })
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    nalgebra::linalg::Cholesky::new(a.clone()).map(|c| c.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(a.clone()).map(|c| c.inverse())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
