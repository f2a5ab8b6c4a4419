//! Stochastic model ingredients: signal covariance factors, observation
//! functions, Markov noise factorization and Bernoulli schedules.

pub mod covariance;
pub mod noise;
pub mod observation;

use std::sync::Arc;

use nalgebra::DMatrix;

pub use covariance::{Ar1Covariance, CovarianceFactorization, TabulatedCovariance};
pub use noise::{cov_v, MarkovNoiseModel, NoiseFactors, MAX_HORIZON};
pub use observation::{
    finite_difference_jacobian, linearize, CarrierPhase, FnObservation, LinearObservation,
    LinearizedObservation, ObservationFunction,
};

use crate::error::{Error, Result};

/// Signal, observation and factorization dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_z: usize,
    pub p: usize,
}

impl Dims {
    pub fn new(n_x: usize, n_z: usize, p: usize) -> Result<Self> {
        if n_x == 0 || n_z == 0 || p == 0 {
            return Err(Error::ModelValidation(format!(
                "dimensions must be positive (n_x={n_x}, n_z={n_z}, p={p})"
            )));
        }
        Ok(Dims { n_x, n_z, p })
    }
}

/// A quantity indexed by time step, either constant or tabulated from `first`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    Sequence { first: usize, values: Vec<T> },
}

impl<T> Schedule<T> {
    pub fn at(&self, k: usize) -> Result<&T> {
        match self {
            Schedule::Constant(v) => Ok(v),
            Schedule::Sequence { first, values } => {
                let max = first + values.len().saturating_sub(1);
                if k < *first {
                    return Err(Error::OutOfHorizon { k, max });
                }
                values.get(k - first).ok_or(Error::OutOfHorizon { k, max })
            }
        }
    }

    pub fn values(&self) -> Box<dyn Iterator<Item = &T> + '_> {
        match self {
            Schedule::Constant(v) => Box::new(std::iter::once(v)),
            Schedule::Sequence { values, .. } => Box::new(values.iter()),
        }
    }
}

/// Probabilities of the signal being present (`γ̄_k`) and of an attack (`λ̄_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliSchedule {
    pub gamma_bar: Schedule<f64>,
    pub lambda_bar: Schedule<f64>,
}

impl BernoulliSchedule {
    pub fn new(gamma_bar: Schedule<f64>, lambda_bar: Schedule<f64>) -> Result<Self> {
        for (name, s) in [("gamma_bar", &gamma_bar), ("lambda_bar", &lambda_bar)] {
            if let Some(bad) = s.values().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::ModelValidation(format!(
                    "{name} must be a probability in [0, 1], got {bad}"
                )));
            }
        }
        Ok(BernoulliSchedule { gamma_bar, lambda_bar })
    }

    pub fn constant(gamma_bar: f64, lambda_bar: f64) -> Result<Self> {
        Self::new(Schedule::Constant(gamma_bar), Schedule::Constant(lambda_bar))
    }

    pub fn gamma_bar(&self, k: usize) -> Result<f64> {
        self.gamma_bar.at(k).copied()
    }

    pub fn lambda_bar(&self, k: usize) -> Result<f64> {
        self.lambda_bar.at(k).copied()
    }
}

/// Covariance of the deceptive noise `w_k` injected by an attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackNoiseModel {
    pub sigma_w: Schedule<DMatrix<f64>>,
}

impl AttackNoiseModel {
    pub fn new(sigma_w: Schedule<DMatrix<f64>>) -> Result<Self> {
        for s in sigma_w.values() {
            noise::validate_covariance("attack noise covariance", s)?;
        }
        Ok(AttackNoiseModel { sigma_w })
    }

    pub fn scalar(var: f64) -> Result<Self> {
        Self::new(Schedule::Constant(DMatrix::from_element(1, 1, var)))
    }
}

/// Everything the estimator, simulator and oracle need to know about a scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub dims: Dims,
    pub signal: Arc<dyn CovarianceFactorization>,
    pub observation: Arc<dyn ObservationFunction>,
    pub noise: MarkovNoiseModel,
    pub probabilities: BernoulliSchedule,
    pub attack: AttackNoiseModel,
}

impl Model {
    pub fn new(
        signal: Arc<dyn CovarianceFactorization>,
        observation: Arc<dyn ObservationFunction>,
        noise: MarkovNoiseModel,
        probabilities: BernoulliSchedule,
        attack: AttackNoiseModel,
    ) -> Result<Self> {
        let (n_x, p) = signal.dims();
        let (obs_n_x, n_z) = observation.dims();
        if obs_n_x != n_x {
            return Err(Error::shape("observation input", (n_x, 1), (obs_n_x, 1)));
        }
        if noise.dim() != n_z {
            return Err(Error::shape("noise dimension", (n_z, n_z), (noise.dim(), noise.dim())));
        }
        for s in attack.sigma_w.values() {
            if s.shape() != (n_z, n_z) {
                return Err(Error::shape("attack noise covariance", (n_z, n_z), s.shape()));
            }
        }
        Ok(Model {
            dims: Dims::new(n_x, n_z, p)?,
            signal,
            observation,
            noise,
            probabilities,
            attack,
        })
    }

    /// Same model with different constant probabilities.
    pub fn with_probabilities(&self, probabilities: BernoulliSchedule) -> Self {
        Model {
            probabilities,
            ..self.clone()
        }
    }
}

/// The `Γ^a_k`, `Δ^a_k` matrices (a = x, v) of the filter recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaDelta {
    /// `γ̄_k H_k B_k` (n_z × p).
    pub gamma_x: DMatrix<f64>,
    /// `F_k` (n_z × n_z).
    pub gamma_v: DMatrix<f64>,
    /// `γ̄_k H_k A_k` (n_z × p).
    pub delta_x: DMatrix<f64>,
    /// `E_k` (n_z × n_z).
    pub delta_v: DMatrix<f64>,
}

pub fn gamma_delta(
    h: &DMatrix<f64>,
    a_k: &DMatrix<f64>,
    b_k: &DMatrix<f64>,
    factors: &NoiseFactors,
    gamma_bar: f64,
) -> Result<GammaDelta> {
    let n_z = factors.e.nrows();
    if h.nrows() != n_z || h.ncols() != a_k.nrows() {
        return Err(Error::shape("observation jacobian", (n_z, a_k.nrows()), h.shape()));
    }
    if a_k.shape() != b_k.shape() {
        return Err(Error::shape("covariance factor B", a_k.shape(), b_k.shape()));
    }
    Ok(GammaDelta {
        gamma_x: h * b_k * gamma_bar,
        gamma_v: factors.f.clone(),
        delta_x: h * a_k * gamma_bar,
        delta_v: factors.e.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_lookup() {
        let s = Schedule::Sequence { first: 1, values: vec![0.1, 0.2] };
        assert_eq!(*s.at(2).unwrap(), 0.2);
        assert!(s.at(0).is_err());
        assert!(s.at(3).is_err());
        assert_eq!(*Schedule::Constant(3).at(99).unwrap(), 3);
    }

    #[test]
    fn probabilities_validated() {
        assert!(BernoulliSchedule::constant(1.5, 0.0).is_err());
        assert!(BernoulliSchedule::constant(0.0, 1.0).is_ok());
    }

    #[test]
    fn gamma_delta_arithmetic() {
        let noise = MarkovNoiseModel::scalar(0.75, 0.01, 0.1).unwrap();
        let f1 = NoiseFactors::init(&noise).unwrap().step(&noise).unwrap();
        let h = DMatrix::from_element(1, 1, 2.0);
        let a = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let gd = gamma_delta(&h, &a, &b, &f1, 0.7).unwrap();
        assert!((gd.gamma_x.clone() - DMatrix::from_row_slice(1, 2, &[1.4, 2.8])).abs().max() < 1e-15);
        assert!((gd.delta_x.clone() - DMatrix::from_row_slice(1, 2, &[0.7, 0.35])).abs().max() < 1e-15);
        assert_eq!(gd.delta_v, f1.e);
        assert_eq!(gd.gamma_v, f1.f);
        assert_eq!(gd.delta_v[(0, 0)], 0.75);

        let zero = gamma_delta(&h, &a, &b, &f1, 0.0).unwrap();
        assert_eq!(zero.gamma_x, DMatrix::zeros(1, 2));
        assert_eq!(zero.delta_x, DMatrix::zeros(1, 2));
        assert_eq!(zero.delta_v, gd.delta_v);
    }

    #[test]
    fn gamma_delta_shape_error() {
        let noise = MarkovNoiseModel::scalar(0.75, 0.01, 0.1).unwrap();
        let f0 = NoiseFactors::init(&noise).unwrap();
        let h = DMatrix::zeros(2, 1);
        let a = DMatrix::zeros(1, 2);
        assert!(matches!(gamma_delta(&h, &a, &a, &f0, 0.5), Err(Error::Shape { .. })));
    }
}
