//! Separable signal covariance `Cov[x_k, x_s] = A_k B_sᵀ` for `s <= k`.

use std::fmt::Debug;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, symmetrize};

/// Provider of the factor matrices of a separable signal covariance.
///
/// Implementations return `n_x × p` matrices for every `k >= 1` inside their
/// horizon; `A_k B_kᵀ` must be symmetric PSD.
pub trait CovarianceFactorization: Send + Sync + Debug {
    /// `(n_x, p)`.
    fn dims(&self) -> (usize, usize);
    fn a(&self, k: usize) -> Result<DMatrix<f64>>;
    fn b(&self, k: usize) -> Result<DMatrix<f64>>;

    /// `Cov[x_k, x_s]` for any ordering of `k` and `s`.
    fn cross_covariance(&self, k: usize, s: usize) -> Result<DMatrix<f64>> {
        if s <= k {
            Ok(self.a(k)? * self.b(s)?.transpose())
        } else {
            Ok((self.a(s)? * self.b(k)?.transpose()).transpose())
        }
    }

    /// `Cov[x_k]`, symmetrized.
    fn covariance(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(symmetrize(&(self.a(k)? * self.b(k)?.transpose())))
    }
}

/// Explicit per-step factors, `a[k-1]` and `b[k-1]` holding `A_k` and `B_k`.
#[derive(Debug, Clone)]
pub struct TabulatedCovariance {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    n_x: usize,
    p: usize,
}

impl TabulatedCovariance {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::ModelValidation(format!(
                "covariance factors need equal non-zero lengths (got {} and {})",
                a.len(),
                b.len()
            )));
        }
        let (n_x, p) = a[0].shape();
        for m in a.iter().chain(b.iter()) {
            if m.shape() != (n_x, p) {
                return Err(Error::shape("covariance factor", (n_x, p), m.shape()));
            }
            if !all_finite(m) {
                return Err(Error::ModelValidation("non-finite covariance factor".into()));
            }
        }
        Ok(TabulatedCovariance { a, b, n_x, p })
    }

    /// Factorization of `x_k = G s_k` where `s_k = F s_{k-1} + q_k`,
    /// `Cov[s_1] = P_1`, `Cov[q_k] = Q`. `F` must be invertible.
    ///
    /// `Cov[x_k, x_s] = G F^{k-s} P_s Gᵀ = (G F^k)(G P_s F^{-s}ᵀ)ᵀ`.
    pub fn from_state_space(
        transition: &DMatrix<f64>,
        output: &DMatrix<f64>,
        initial_cov: &DMatrix<f64>,
        process_cov: &DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let p = transition.nrows();
        if transition.shape() != (p, p) {
            return Err(Error::shape("state transition", (p, p), transition.shape()));
        }
        if output.ncols() != p {
            return Err(Error::shape("state output", (output.nrows(), p), output.shape()));
        }
        let inv = transition
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::ModelValidation("state transition is singular".into()))?;
        let mut a = Vec::with_capacity(horizon);
        let mut b = Vec::with_capacity(horizon);
        let mut fk = transition.clone();
        let mut fk_inv = inv.clone();
        let mut pk = symmetrize(initial_cov);
        for k in 1..=horizon {
            if k > 1 {
                pk = symmetrize(&(transition * &pk * transition.transpose() + process_cov));
                fk = transition * &fk;
                fk_inv = &fk_inv * &inv;
            }
            a.push(output * &fk);
            b.push(output * &pk * fk_inv.transpose());
        }
        Self::new(a, b)
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    fn index(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.a.len() {
            Err(Error::OutOfHorizon { k, max: self.a.len() })
        } else {
            Ok(k - 1)
        }
    }
}

impl CovarianceFactorization for TabulatedCovariance {
    fn dims(&self) -> (usize, usize) {
        (self.n_x, self.p)
    }

    fn a(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(self.a[self.index(k)?].clone())
    }

    fn b(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(self.b[self.index(k)?].clone())
    }
}

/// Scalar stationary AR(1) covariance `Cov[x_k, x_s] = var·ρ^{k-s}`,
/// factorized as `A_k = [var·ρ^k]`, `B_k = [ρ^{-k}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Covariance {
    pub rho: f64,
    pub variance: f64,
}

impl Ar1Covariance {
    pub fn new(rho: f64, variance: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) || rho == 0.0 {
            return Err(Error::Parameter(format!("AR(1) coefficient must satisfy 0 < |rho| < 1, got {rho}")));
        }
        if !(variance > 0.0) {
            return Err(Error::Parameter(format!("AR(1) variance must be positive, got {variance}")));
        }
        Ok(Ar1Covariance { rho, variance })
    }
}

impl CovarianceFactorization for Ar1Covariance {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn a(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, self.variance * self.rho.powi(k as i32)))
    }

    fn b(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, self.rho.powi(-(k as i32))))
    }
}
