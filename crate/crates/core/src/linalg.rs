//! Small dense-matrix helpers shared by the estimator, simulator and oracle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal when a Cholesky factorization fails.
pub const JITTER_REL: f64 = 1e-12;
/// Below `-INDEFINITE_REL * trace` the smallest eigenvalue is not repaired.
pub const INDEFINITE_REL: f64 = 1e-6;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Sum of absolute diagonal entries, used as the scale for relative eigenvalue checks.
pub fn trace_scale(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().map(|v| v.abs()).sum()
}

/// PSD check at a tolerance relative to the trace scale (absolute floor `rel_tol`).
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = trace_scale(m).max(1.0);
    min_eigenvalue(m) >= -rel_tol * scale
}

/// Ratio of extreme singular values; `f64::INFINITY` for exactly singular input.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped to zero).
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Cholesky factor of a symmetric positive definite matrix, reused for every
/// solve against that matrix within one step.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    /// Diagonal shift that was needed to obtain the factorization (0 when none).
    pub jitter: f64,
}

impl SpdFactor {
    /// Symmetrizes `m` and factorizes it, adding a diagonal shift when the plain
    /// factorization fails. `k` is only used for error reporting.
    pub fn regularized(m: &DMatrix<f64>, k: usize) -> Result<Self> {
        let sym = symmetrize(m);
        if !all_finite(&sym) {
            return Err(Error::Numerical {
                k,
                reason: "non-finite entries in matrix to factorize".into(),
            });
        }
        let trace = trace_scale(&sym);
        if let Some(chol) = sym.clone().cholesky() {
            if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0) {
                return Ok(SpdFactor { chol, jitter: 0.0 });
            }
        }
        if trace <= 0.0 {
            return Err(Error::Numerical {
                k,
                reason: "matrix to factorize is identically zero".into(),
            });
        }
        let lmin = min_eigenvalue(&sym);
        if lmin < -INDEFINITE_REL * trace {
            return Err(Error::Numerical {
                k,
                reason: format!(
                    "indefinite matrix: smallest eigenvalue {lmin:.3e} below -{INDEFINITE_REL:e}*trace ({trace:.3e})"
                ),
            });
        }
        let shift = (-lmin).max(0.0) + JITTER_REL * trace;
        let n = sym.nrows();
        let shifted = &sym + DMatrix::identity(n, n) * shift;
        shifted
            .cholesky()
            .map(|chol| SpdFactor { chol, jitter: shift })
            .ok_or_else(|| Error::Numerical {
                k,
                reason: "Cholesky factorization failed after jitter".into(),
            })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_matches_direct() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = SpdFactor::regularized(&m, 1).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = f.solve_vec(&b);
        assert!((&m * x - b).norm() < 1e-14);
        assert!(!f.jittered());
    }

    #[test]
    fn semidefinite_gets_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::regularized(&m, 3).unwrap();
        assert!(f.jittered());
        assert!(f.jitter <= 1e-11);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match SpdFactor::regularized(&m, 7) {
            Err(Error::Numerical { k, .. }) => assert_eq!(k, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_matrix_is_rejected() {
        assert!(SpdFactor::regularized(&DMatrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sqrt_psd(&m);
        assert!((&r * &r - m).norm() < 1e-12);
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_estimate(&m) > 1e12);
    }
}
