//! Dense symmetric linear algebra: jittered Cholesky factorization and
//! eigenvalue extremes.
//!
//! Every inverse in the crate goes through [`chol_psd`], which symmetrizes its
//! input and escalates a diagonal jitter geometrically (×10) from
//! `base_jitter` up to [`MAX_JITTER`] until LAPACK accepts the factorization.
//! The escalation ladder is fixed so results are reproducible bit for bit.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Cholesky, Diag, Eigh, SolveTriangular, UPLO};

use crate::error::{Error, Result};

/// Default starting jitter for [`chol_psd`].
pub const BASE_JITTER: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-4;

/// Lower-triangular Cholesky factor of a (possibly jittered) symmetric matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Array2<f64>,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.lower.view()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// log|M + jitter·I| from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves (L·Lᵀ)·x = b.
    pub fn solve_vec(&self, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "solve_vec: factor is {}x{} but rhs has length {}",
                self.dim(),
                self.dim(),
                b.len()
            )));
        }
        let y = self
            .lower
            .solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
        let x = self
            .lower
            .t()
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
        Ok(x)
    }

    /// Solves (L·Lᵀ)·X = B column-wise.
    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "solve_mat: factor is {}x{} but rhs has {} rows",
                self.dim(),
                self.dim(),
                b.nrows()
            )));
        }
        let y = self
            .lower
            .solve_triangular(UPLO::Lower, Diag::NonUnit, &b.to_owned())
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
        let x = self
            .lower
            .t()
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))?;
        Ok(x)
    }

    /// Explicit inverse (M + jitter·I)⁻¹.
    pub fn inverse(&self) -> Result<Array2<f64>> {
        self.solve_mat(Array2::eye(self.dim()).view())
    }
}

fn check_square_finite(m: &ArrayView2<'_, f64>, op: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{op}: expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{op}: matrix contains non-finite entries"
        )));
    }
    Ok(())
}

/// Symmetrize and factor `M + jitter·I`, escalating the jitter from zero
/// through `base_jitter`, 10·`base_jitter`, ... up to [`MAX_JITTER`].
pub fn chol_psd(m: ArrayView2<'_, f64>, base_jitter: f64) -> Result<CholeskyFactor> {
    check_square_finite(&m, "chol_psd")?;
    if !(base_jitter > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chol_psd: base_jitter must be positive, got {base_jitter}"
        )));
    }
    let n = m.nrows();
    let sym = 0.5 * (&m + &m.t());

    let mut jitter = 0.0_f64;
    loop {
        let mut attempt = sym.clone();
        if jitter > 0.0 {
            for i in 0..n {
                attempt[[i, i]] += jitter;
            }
        }
        if let Ok(lower) = attempt.cholesky(UPLO::Lower) {
            // LAPACK can "succeed" with a zero pivot on exactly singular input;
            // require strictly positive diagonal before accepting.
            if lower.diag().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok(CholeskyFactor {
                    lower,
                    jitter_used: jitter,
                });
            }
        }
        jitter = if jitter == 0.0 { base_jitter } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-12) {
            let min_eigenvalue = eig_extremes(sym.view()).map(|(lo, _)| lo).unwrap_or(f64::NAN);
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue,
                max_jitter: MAX_JITTER,
            });
        }
    }
}

/// Extreme eigenvalues (smallest, largest) of a symmetric matrix.
pub fn eig_extremes(m: ArrayView2<'_, f64>) -> Result<(f64, f64)> {
    check_square_finite(&m, "eig_extremes")?;
    let sym = 0.5 * (&m + &m.t());
    let (vals, _) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolve failed: {e}")))?;
    Ok((vals[0], vals[vals.len() - 1]))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: ArrayView2<'_, f64>) -> Result<f64> {
    eig_extremes(m).map(|(_, hi)| hi)
}
