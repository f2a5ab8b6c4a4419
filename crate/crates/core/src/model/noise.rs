//! First-order Markov measurement noise `v_k = D_{k-1} v_{k-1} + u_{k-1}` and
//! the running factorization `Cov[v_k, v_s] = E_k F_sᵀ`.

use nalgebra::DMatrix;

use super::Schedule;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, condition_estimate, is_psd, symmetrize};

/// Largest condition estimate accepted for a transition matrix `D_k`.
pub const MAX_TRANSITION_CONDITION: f64 = 1e12;

/// Longest supported recursion. `E_k` and `E_k^{-1}` are products of `k`
/// transition matrices and drift geometrically toward under/overflow.
pub const MAX_HORIZON: usize = 10_000;

#[derive(Debug, Clone)]
pub struct MarkovNoiseModel {
    /// `D_k`, `k >= 0`.
    pub transition: Schedule<DMatrix<f64>>,
    /// `Cov[u_k]`, `k >= 0`.
    pub driving_cov: Schedule<DMatrix<f64>>,
    /// `Cov[v_0]`.
    pub initial_cov: DMatrix<f64>,
}

impl MarkovNoiseModel {
    pub fn new(
        transition: Schedule<DMatrix<f64>>,
        driving_cov: Schedule<DMatrix<f64>>,
        initial_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = initial_cov.nrows();
        if initial_cov.shape() != (n, n) {
            return Err(Error::shape("initial noise covariance", (n, n), initial_cov.shape()));
        }
        validate_covariance("initial noise covariance", &initial_cov)?;
        for d in transition.values() {
            if d.shape() != (n, n) {
                return Err(Error::shape("noise transition", (n, n), d.shape()));
            }
        }
        for s in driving_cov.values() {
            if s.shape() != (n, n) {
                return Err(Error::shape("driving noise covariance", (n, n), s.shape()));
            }
            validate_covariance("driving noise covariance", s)?;
        }
        Ok(MarkovNoiseModel {
            transition,
            driving_cov,
            initial_cov,
        })
    }

    /// Time-invariant scalar model.
    pub fn scalar(d: f64, driving_var: f64, initial_var: f64) -> Result<Self> {
        Self::new(
            Schedule::Constant(DMatrix::from_element(1, 1, d)),
            Schedule::Constant(DMatrix::from_element(1, 1, driving_var)),
            DMatrix::from_element(1, 1, initial_var),
        )
    }

    pub fn dim(&self) -> usize {
        self.initial_cov.nrows()
    }
}

pub(crate) fn validate_covariance(what: &str, m: &DMatrix<f64>) -> Result<()> {
    if !all_finite(m) {
        return Err(Error::ModelValidation(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * m.abs().max().max(1.0) {
        return Err(Error::ModelValidation(format!("{what} is not symmetric")));
    }
    if !is_psd(m, 1e-12) {
        return Err(Error::ModelValidation(format!("{what} is not positive semidefinite")));
    }
    Ok(())
}

/// State of the noise-covariance factorization at time `k`.
///
/// `E_0 = I`, `F_0 = Cov[v_0]`; thereafter `E_k = D_{k-1} E_{k-1}`,
/// `E_k^{-1} = E_{k-1}^{-1} D_{k-1}^{-1}` and `F_k = Cov[v_k] E_k^{-T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFactors {
    pub k: usize,
    pub e: DMatrix<f64>,
    pub e_inv: DMatrix<f64>,
    pub f: DMatrix<f64>,
    /// `Cov[v_k]`.
    pub sigma_v: DMatrix<f64>,
}

impl NoiseFactors {
    pub fn init(model: &MarkovNoiseModel) -> Result<Self> {
        validate_covariance("initial noise covariance", &model.initial_cov)?;
        let n = model.dim();
        Ok(NoiseFactors {
            k: 0,
            e: DMatrix::identity(n, n),
            e_inv: DMatrix::identity(n, n),
            f: model.initial_cov.clone(),
            sigma_v: model.initial_cov.clone(),
        })
    }

    /// Advances the factorization from `k` to `k + 1`.
    pub fn step(&self, model: &MarkovNoiseModel) -> Result<Self> {
        let k = self.k + 1;
        if k > MAX_HORIZON {
            return Err(Error::OutOfHorizon { k, max: MAX_HORIZON });
        }
        let d = model.transition.at(self.k)?;
        let driving = model.driving_cov.at(self.k)?;
        let condition = condition_estimate(d);
        if condition > MAX_TRANSITION_CONDITION {
            return Err(Error::Singular { k: self.k, condition });
        }
        let d_inv = d.clone().try_inverse().ok_or(Error::Singular {
            k: self.k,
            condition: f64::INFINITY,
        })?;
        let sigma_v = symmetrize(&(d * &self.sigma_v * d.transpose() + driving));
        let e = d * &self.e;
        let e_inv = &self.e_inv * d_inv;
        let f = &sigma_v * e_inv.transpose();
        if !(all_finite(&e) && all_finite(&e_inv) && all_finite(&f)) {
            return Err(Error::Numerical {
                k,
                reason: "noise factor overflow".into(),
            });
        }
        Ok(NoiseFactors { k, e, e_inv, f, sigma_v })
    }

    /// Factors for `0..=horizon`.
    pub fn sequence(model: &MarkovNoiseModel, horizon: usize) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(Self::init(model)?);
        for _ in 0..horizon {
            let next = out.last().unwrap().step(model)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// `Cov[v_k, v_s] = E_k F_sᵀ` for `s <= k`.
pub fn cov_v(at_k: &NoiseFactors, at_s: &NoiseFactors) -> Result<DMatrix<f64>> {
    if at_s.k > at_k.k {
        return Err(Error::ArgumentOrder { k: at_k.k, s: at_s.k });
    }
    Ok(&at_k.e * at_s.f.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_noise() -> MarkovNoiseModel {
        MarkovNoiseModel::scalar(0.75, 0.01, 0.1).unwrap()
    }

    fn scalar(m: &DMatrix<f64>) -> f64 {
        m[(0, 0)]
    }

    #[test]
    fn init_is_identity_and_initial_cov() {
        let f0 = NoiseFactors::init(&paper_noise()).unwrap();
        assert_eq!(f0.k, 0);
        assert_eq!(scalar(&f0.e), 1.0);
        assert_eq!(scalar(&f0.e_inv), 1.0);
        assert_eq!(scalar(&f0.f), 0.1);
        assert_eq!(scalar(&f0.sigma_v), 0.1);

        let zero = MarkovNoiseModel::scalar(0.75, 0.01, 0.0).unwrap();
        assert_eq!(scalar(&NoiseFactors::init(&zero).unwrap().f), 0.0);

        let diag = MarkovNoiseModel::new(
            Schedule::Constant(DMatrix::identity(2, 2)),
            Schedule::Constant(DMatrix::zeros(2, 2)),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.2])),
        )
        .unwrap();
        let f0 = NoiseFactors::init(&diag).unwrap();
        assert_eq!(f0.f, diag.initial_cov);
    }

    #[test]
    fn first_steps_match_hand_evaluation() {
        let model = paper_noise();
        let seq = NoiseFactors::sequence(&model, 3).unwrap();
        // Σv_1 = 0.5625·0.1 + 0.01
        assert!((scalar(&seq[1].sigma_v) - 0.06625).abs() < 1e-15);
        assert!((scalar(&seq[1].e) - 0.75).abs() < 1e-15);
        assert!((scalar(&seq[1].f) - 0.06625 / 0.75).abs() < 1e-15);
        assert!((scalar(&seq[2].e) - 0.5625).abs() < 1e-15);
        let c21 = scalar(&cov_v(&seq[2], &seq[1]).unwrap());
        assert!((c21 - 0.0496875).abs() < 1e-12);
        assert!((c21 - 0.75 * 0.06625).abs() < 1e-12);
        let c31 = scalar(&cov_v(&seq[3], &seq[1]).unwrap());
        assert!((c31 - 0.037265625).abs() < 1e-12);
    }

    #[test]
    fn diagonal_covariance_is_sigma_v() {
        let seq = NoiseFactors::sequence(&paper_noise(), 40).unwrap();
        for f in &seq {
            let c = cov_v(f, f).unwrap();
            assert!((c - &f.sigma_v).abs().max() < 1e-12);
            let id = &f.e * &f.e_inv;
            assert!((id - DMatrix::identity(1, 1)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn noiseless_chain_stays_zero() {
        let model = MarkovNoiseModel::scalar(0.75, 0.0, 0.0).unwrap();
        for f in NoiseFactors::sequence(&model, 10).unwrap() {
            assert_eq!(scalar(&f.sigma_v), 0.0);
            assert_eq!(scalar(&f.f), 0.0);
        }
    }

    #[test]
    fn argument_order_enforced() {
        let seq = NoiseFactors::sequence(&paper_noise(), 2).unwrap();
        assert_eq!(
            cov_v(&seq[1], &seq[2]),
            Err(Error::ArgumentOrder { k: 1, s: 2 })
        );
    }

    #[test]
    fn singular_transition_names_index() {
        let model = MarkovNoiseModel::new(
            Schedule::Sequence {
                first: 0,
                values: vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.0)],
            },
            Schedule::Constant(DMatrix::from_element(1, 1, 0.01)),
            DMatrix::from_element(1, 1, 0.1),
        )
        .unwrap();
        let f1 = NoiseFactors::init(&model).unwrap().step(&model).unwrap();
        match f1.step(&model) {
            Err(Error::Singular { k, .. }) => assert_eq!(k, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_psd_initial_covariance_rejected() {
        assert!(matches!(
            MarkovNoiseModel::scalar(0.75, 0.01, -0.1),
            Err(Error::ModelValidation(_))
        ));
    }

    #[test]
    fn horizon_guard() {
        let model = paper_noise();
        let mut f = NoiseFactors::init(&model).unwrap();
        f.k = MAX_HORIZON;
        assert!(matches!(f.step(&model), Err(Error::OutOfHorizon { .. })));
    }
}
