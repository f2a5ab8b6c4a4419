//! Scenario configuration, shared by the harness and the TOML config file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{CovarianceForm, LinearizationPolicy};
use crate::model::{CarrierPhase, Model};
use crate::presets::CarrierScenario;
use crate::simulator::{Ar2Normalization, Ar2Params, InitScheme, NoiseDistribution, SignalModel};

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    Theorem,
    Ekf,
}

impl From<EstimatorMode> for CovarianceForm {
    fn from(m: EstimatorMode) -> Self {
        match m {
            EstimatorMode::Theorem => CovarianceForm::Theorem,
            EstimatorMode::Ekf => CovarianceForm::Ekf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Linearize at the one-step prediction.
    #[default]
    EkfPrediction,
    /// Linearize at the origin for every step.
    FixedNominal,
}

/// What to do with the last `lag` steps, where `x̂_{k/k+lag}` would need
/// observations past the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    /// Simulate `steps + lag` observations so every `k <= steps` is smoothed.
    #[default]
    ExtendHorizon,
    /// Simulate `steps` observations; the smoother series stops at `steps - lag`.
    TruncateTail,
}

/// How sweep cells are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepSeeding {
    /// Every cell reuses the base seed, so run `s` sees the same signal, noise
    /// and indicator uniforms at every grid point.
    #[default]
    Common,
    /// Cell `(gi, li)` uses `derive_seed(seed, [gi, li])`.
    PerCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub steps: usize,
    pub runs: usize,
    pub gamma_bar: f64,
    pub lambda_bar: f64,
    pub lag: usize,
    pub seed: u64,
    /// Innovation covariance form; the policy's default when absent.
    pub mode: Option<EstimatorMode>,
    pub policy: PolicyKind,
    pub init: InitScheme,
    pub distribution: NoiseDistribution,
    pub tail: TailMode,
    pub seeding: SweepSeeding,
    /// Grid of the `sweep` command; `[gamma_bar]` when empty.
    pub sweep_gamma_bar: Vec<f64>,
    /// Grid of the `sweep` command; 0.1 to 0.9 when empty.
    pub sweep_lambda_bar: Vec<f64>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            steps: 50,
            runs: 1000,
            gamma_bar: 0.7,
            lambda_bar: 0.3,
            lag: 2,
            seed: DEFAULT_SEED,
            mode: None,
            policy: PolicyKind::EkfPrediction,
            init: InitScheme::Stationary,
            distribution: NoiseDistribution::Gaussian,
            tail: TailMode::ExtendHorizon,
            seeding: SweepSeeding::Common,
            sweep_gamma_bar: Vec::new(),
            sweep_lambda_bar: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    pub b1: f64,
    pub b2: f64,
    pub sigma2: f64,
    pub covariance: Ar2Normalization,
}

impl Default for SignalParams {
    fn default() -> Self {
        let p = Ar2Params::default();
        SignalParams {
            b1: p.b1,
            b2: p.b2,
            sigma2: p.sigma2,
            covariance: Ar2Normalization::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationParams {
    pub carrier_freq: f64,
    pub sampling_period: f64,
    pub phase_sensitivity: f64,
}

impl Default for ObservationParams {
    fn default() -> Self {
        let c = CarrierPhase::default();
        ObservationParams {
            carrier_freq: c.carrier_freq,
            sampling_period: c.sampling_period,
            phase_sensitivity: c.phase_sensitivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub transition: f64,
    pub driving_var: f64,
    pub initial_var: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            transition: 0.75,
            driving_var: 0.01,
            initial_var: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackParams {
    pub variance: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams { variance: 1.0 }
    }
}

/// Full description of one Monte Carlo cell of the carrier scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: ExperimentParams,
    pub signal: SignalParams,
    pub observation: ObservationParams,
    pub noise: NoiseParams,
    pub attacks: AttackParams,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parameter(format!("{key}: {msg}"))
}

fn check_probability(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format_args!("probability must lie in [0, 1], got {v}")))
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format_args!("must be positive and finite, got {v}")))
    }
}

fn check_nonnegative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format_args!("must be non-negative and finite, got {v}")))
    }
}

impl ScenarioConfig {
    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.steps == 0 {
            return Err(invalid("experiment.steps", "must be at least 1"));
        }
        if e.runs == 0 {
            return Err(invalid("experiment.runs", "must be at least 1"));
        }
        if e.steps + e.lag > crate::model::MAX_HORIZON {
            return Err(invalid(
                "experiment.steps",
                format_args!("steps + lag must not exceed {}", crate::model::MAX_HORIZON),
            ));
        }
        if e.tail == TailMode::TruncateTail && e.lag >= e.steps {
            return Err(invalid("experiment.lag", "must be smaller than steps with tail = \"truncate-tail\""));
        }
        check_probability("experiment.gamma_bar", e.gamma_bar)?;
        check_probability("experiment.lambda_bar", e.lambda_bar)?;
        for &g in &e.sweep_gamma_bar {
            check_probability("experiment.sweep_gamma_bar", g)?;
        }
        for &l in &e.sweep_lambda_bar {
            check_probability("experiment.sweep_lambda_bar", l)?;
        }
        let ar2 = self.ar2();
        ar2.validate().map_err(|err| invalid("signal", err))?;
        check_positive("signal.sigma2", self.signal.sigma2)?;
        check_positive("observation.carrier_freq", self.observation.carrier_freq)?;
        check_positive("observation.sampling_period", self.observation.sampling_period)?;
        if !self.observation.phase_sensitivity.is_finite() {
            return Err(invalid("observation.phase_sensitivity", "must be finite"));
        }
        let d = self.noise.transition;
        if !(d.is_finite() && d != 0.0) {
            return Err(invalid("noise.transition", format_args!("must be finite and non-zero, got {d}")));
        }
        check_nonnegative("noise.driving_var", self.noise.driving_var)?;
        check_nonnegative("noise.initial_var", self.noise.initial_var)?;
        check_nonnegative("attacks.variance", self.attacks.variance)?;
        Ok(())
    }

    pub fn ar2(&self) -> Ar2Params {
        Ar2Params {
            b1: self.signal.b1,
            b2: self.signal.b2,
            sigma2: self.signal.sigma2,
        }
    }

    pub fn scenario(&self) -> CarrierScenario {
        CarrierScenario {
            ar2: self.ar2(),
            normalization: self.signal.covariance,
            carrier: CarrierPhase {
                carrier_freq: self.observation.carrier_freq,
                sampling_period: self.observation.sampling_period,
                phase_sensitivity: self.observation.phase_sensitivity,
            },
            noise_transition: self.noise.transition,
            noise_driving_var: self.noise.driving_var,
            noise_initial_var: self.noise.initial_var,
            attack_var: self.attacks.variance,
            gamma_bar: self.experiment.gamma_bar,
            lambda_bar: self.experiment.lambda_bar,
        }
    }

    pub fn model(&self) -> Result<Model> {
        self.scenario().model()
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel::Ar2(self.ar2())
    }

    /// Number of observations simulated per run.
    pub fn simulated_steps(&self) -> usize {
        match self.experiment.tail {
            TailMode::ExtendHorizon => self.experiment.steps + self.experiment.lag,
            TailMode::TruncateTail => self.experiment.steps,
        }
    }

    pub fn policy(&self) -> LinearizationPolicy {
        match self.experiment.policy {
            PolicyKind::EkfPrediction => LinearizationPolicy::EkfPrediction,
            PolicyKind::FixedNominal => LinearizationPolicy::zero_nominal(1, self.simulated_steps()),
        }
    }

    pub fn form(&self) -> CovarianceForm {
        match self.experiment.mode {
            Some(m) => m.into(),
            None => self.policy().default_form(),
        }
    }

    pub fn with_probabilities(&self, gamma_bar: f64, lambda_bar: f64) -> Self {
        let mut c = self.clone();
        c.experiment.gamma_bar = gamma_bar;
        c.experiment.lambda_bar = lambda_bar;
        c
    }
}
