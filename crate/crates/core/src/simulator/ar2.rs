use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CovarianceFactorization;

/// `x_k = -b1 x_{k-1} - b2 x_{k-2} + ε_k`, `Var[ε_k] = sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar2Params {
    pub b1: f64,
    pub b2: f64,
    pub sigma2: f64,
}

impl Default for Ar2Params {
    fn default() -> Self {
        Ar2Params {
            b1: 0.1,
            b2: -0.5,
            sigma2: 0.25,
        }
    }
}

impl Ar2Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Parameter(format!(
                "AR(2) innovation variance must be positive, got {}",
                self.sigma2
            )));
        }
        let disc = self.b1 * self.b1 - 4.0 * self.b2;
        if !(disc > 0.0) {
            return Err(Error::Parameter(format!(
                "AR(2) roots must be real and distinct (b1^2 - 4 b2 = {disc})"
            )));
        }
        let (r1, r2) = self.roots();
        if !(r1.abs() < 1.0 && r2.abs() < 1.0) {
            return Err(Error::Parameter(format!("AR(2) is not stationary: roots {r1}, {r2}")));
        }
        if r1 == 0.0 || r2 == 0.0 {
            return Err(Error::Parameter("AR(2) roots must be non-zero".into()));
        }
        Ok(())
    }

    /// `β_{1,2} = (-b1 ± sqrt(b1² - 4 b2)) / 2`.
    pub fn roots(&self) -> (f64, f64) {
        let d = (self.b1 * self.b1 - 4.0 * self.b2).sqrt();
        ((-self.b1 + d) / 2.0, (-self.b1 - d) / 2.0)
    }

    /// Stationary variance of the generated process.
    pub fn stationary_variance(&self) -> f64 {
        // φ1 = -b1, φ2 = -b2
        let (phi1, phi2) = (-self.b1, -self.b2);
        (1.0 - phi2) * self.sigma2 / ((1.0 + phi2) * ((1.0 - phi2).powi(2) - phi1 * phi1))
    }
}

/// How the weights `Q_i` of `Σ^x_{k,s} = Q1 β1^{k-s} + Q2 β2^{k-s}` are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ar2Normalization {
    /// Weights reproduce the autocovariance of the generated process (`Q1 + Q2 = Var[x]`).
    #[default]
    Exact,
    /// Weights with the innovation variance in the numerator (`Q1 + Q2 = sigma2`).
    DrivingVariance,
}

/// Rank-2 factorization `A_k = [Q1 β1^k, Q2 β2^k]`, `B_k = [β1^{-k}, β2^{-k}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Covariance {
    pub beta1: f64,
    pub beta2: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Ar2Covariance {
    pub fn autocovariance(&self, lag: usize) -> f64 {
        self.q1 * self.beta1.powi(lag as i32) + self.q2 * self.beta2.powi(lag as i32)
    }

    pub fn variance(&self) -> f64 {
        self.q1 + self.q2
    }
}

pub fn ar2_factorization(params: &Ar2Params, normalization: Ar2Normalization) -> Result<Ar2Covariance> {
    params.validate()?;
    let (beta1, beta2) = params.roots();
    let scale = match normalization {
        Ar2Normalization::Exact => params.stationary_variance(),
        Ar2Normalization::DrivingVariance => params.sigma2,
    };
    let denom = (beta2 - beta1) * (beta1 * beta2 + 1.0);
    let q1 = scale * beta1 * (beta2 * beta2 - 1.0) / denom;
    let q2 = -scale * beta2 * (beta1 * beta1 - 1.0) / denom;
    Ok(Ar2Covariance { beta1, beta2, q1, q2 })
}

impl CovarianceFactorization for Ar2Covariance {
    fn dims(&self) -> (usize, usize) {
        (1, 2)
    }

    fn a(&self, k: usize) -> Result<DMatrix<f64>> {
        let k = k as i32;
        Ok(DMatrix::from_row_slice(
            1,
            2,
            &[self.q1 * self.beta1.powi(k), self.q2 * self.beta2.powi(k)],
        ))
    }

    fn b(&self, k: usize) -> Result<DMatrix<f64>> {
        let k = -(k as i32);
        Ok(DMatrix::from_row_slice(1, 2, &[self.beta1.powi(k), self.beta2.powi(k)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_at_default_parameters() {
        let (b1, b2) = Ar2Params::default().roots();
        assert!((b1 - 0.658873).abs() < 1e-6);
        assert!((b2 + 0.758873).abs() < 1e-6);
    }

    #[test]
    fn factor_product_is_constant_variance() {
        let c = ar2_factorization(&Ar2Params::default(), Ar2Normalization::Exact).unwrap();
        for k in 1..=60 {
            let v = c.covariance(k).unwrap()[(0, 0)];
            assert!((v - 0.3472222222222222).abs() < 1e-9, "k={k} v={v}");
        }
        let lag1 = c.cross_covariance(11, 10).unwrap()[(0, 0)];
        assert!((lag1 - c.autocovariance(1)).abs() < 1e-12);
    }

    #[test]
    fn paper_formula_sums_to_innovation_variance() {
        let c = ar2_factorization(&Ar2Params::default(), Ar2Normalization::DrivingVariance).unwrap();
        assert!((c.variance() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn autocovariance_satisfies_yule_walker() {
        let p = Ar2Params::default();
        let c = ar2_factorization(&p, Ar2Normalization::Exact).unwrap();
        for lag in 2..8 {
            let lhs = c.autocovariance(lag);
            let rhs = -p.b1 * c.autocovariance(lag - 1) - p.b2 * c.autocovariance(lag - 2);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        // γ0 = φ1 γ1 + φ2 γ2 + σ²
        let g = |l| c.autocovariance(l);
        assert!((g(0) - (-p.b1 * g(1) - p.b2 * g(2) + p.sigma2)).abs() < 1e-12);
    }

    #[test]
    fn complex_or_unstable_roots_rejected() {
        assert!(Ar2Params { b1: 0.1, b2: 0.5, sigma2: 1.0 }.validate().is_err());
        assert!(Ar2Params { b1: -1.5, b2: 0.4, sigma2: 1.0 }.validate().is_err());
        assert!(Ar2Params { b1: 0.1, b2: -0.5, sigma2: 0.0 }.validate().is_err());
    }
}
