//! The phase-demodulation scenario: AR(2) modulating signal observed through a
//! phase-modulated carrier with Markov noise, missing signal and deception attacks.

use std::sync::Arc;

use crate::error::Result;
use crate::model::{AttackNoiseModel, BernoulliSchedule, CarrierPhase, MarkovNoiseModel, Model};
use crate::simulator::{ar2_factorization, Ar2Normalization, Ar2Params, SignalModel};

/// Scalar parameters of the carrier scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierScenario {
    pub ar2: Ar2Params,
    pub normalization: Ar2Normalization,
    pub carrier: CarrierPhase,
    pub noise_transition: f64,
    pub noise_driving_var: f64,
    pub noise_initial_var: f64,
    pub attack_var: f64,
    pub gamma_bar: f64,
    pub lambda_bar: f64,
}

impl Default for CarrierScenario {
    fn default() -> Self {
        CarrierScenario {
            ar2: Ar2Params::default(),
            normalization: Ar2Normalization::Exact,
            carrier: CarrierPhase::default(),
            noise_transition: 0.75,
            noise_driving_var: 0.01,
            noise_initial_var: 0.1,
            attack_var: 1.0,
            gamma_bar: 0.7,
            lambda_bar: 0.3,
        }
    }
}

impl CarrierScenario {
    pub fn model(&self) -> Result<Model> {
        Model::new(
            Arc::new(ar2_factorization(&self.ar2, self.normalization)?),
            Arc::new(self.carrier),
            MarkovNoiseModel::scalar(self.noise_transition, self.noise_driving_var, self.noise_initial_var)?,
            BernoulliSchedule::constant(self.gamma_bar, self.lambda_bar)?,
            AttackNoiseModel::scalar(self.attack_var)?,
        )
    }

    pub fn signal(&self) -> SignalModel {
        SignalModel::Ar2(self.ar2)
    }
}

/// Default carrier model at the given probabilities.
pub fn carrier_model(gamma_bar: f64, lambda_bar: f64) -> Result<Model> {
    CarrierScenario {
        gamma_bar,
        lambda_bar,
        ..Default::default()
    }
    .model()
}
