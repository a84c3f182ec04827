use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter multipliers tried in order: 0, then 10^0 … 10^6 times the base.
pub const JITTER_ESCALATIONS: [f64; 8] = [0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6];

/// Cholesky factor of `A + c·I` with the smallest jitter `c` that worked.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl CholFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹·B` for a matrix right-hand side.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut x);
        x
    }

    /// `log det(A + c·I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }
}

/// Factorizes a symmetric PSD matrix, escalating diagonal jitter until the
/// factorization succeeds. The jitter scale is the mean diagonal (or 1 when
/// that is not positive).
pub fn chol_psd(a: &DMatrix<f64>, jitter: f64) -> Result<CholFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to factorize"));
    }
    let n = a.nrows();
    let mean_diag = if n == 0 { 0.0 } else { a.diagonal().mean() };
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut last = 0.0;
    for mult in JITTER_ESCALATIONS {
        let c = mult * jitter * scale;
        last = c;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += c;
        }
        if let Some(chol) = Cholesky::new(m) {
            if chol
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| *d > 0.0 && d.is_finite())
            {
                return Ok(CholFactor { chol, jitter: c });
            }
        }
    }
    Err(Error::Factorization { jitter: last })
}
