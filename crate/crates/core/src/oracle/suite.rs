//! Randomized equivalence checks of the recursion against the batch oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{affine_projection, build_moments, kalman_reference, MomentModel};
use crate::error::{Error, Result};
use crate::estimator::{CovarianceForm, Filter, FixedPointSmoother, LinearizationPolicy};
use crate::model::{
    Ar1Covariance, AttackNoiseModel, BernoulliSchedule, LinearObservation, MarkovNoiseModel, Model,
    Schedule, TabulatedCovariance,
};
use crate::presets::CarrierScenario;
use crate::simulator::{derive_seed, simulate_run, RngStream, SignalModel, SimulationOptions};

const PROBABILITIES: [f64; 4] = [0.0, 0.3, 0.7, 1.0];

/// Floor of the relative deviation denominator; with a 1e-8 relative
/// tolerance this is a 1e-10 absolute floor.
pub const DEVIATION_FLOOR: f64 = 1e-2;

/// `‖a - b‖∞ / max(‖b‖∞, 1e-2)`.
pub fn deviation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(DEVIATION_FLOOR)
}

/// A fixed-nominal linear instance with one observation record.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub label: String,
    pub model: Model,
    pub nominal: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
}

impl OracleInstance {
    pub fn horizon(&self) -> usize {
        self.ys.len()
    }
}

fn uniform_matrix(rng: &mut ChaCha20Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha20Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = uniform_matrix(rng, n, n, 0.7);
    &l * l.transpose() + DMatrix::identity(n, n) * floor
}

fn random_transition(rng: &mut ChaCha20Rng, n: usize, diag: f64) -> DMatrix<f64> {
    loop {
        let m = DMatrix::identity(n, n) * diag + uniform_matrix(rng, n, n, 0.3);
        if m.determinant().abs() > 0.2 {
            return m;
        }
    }
}

/// Random linear instance: `n_x, n_z, p <= 2`, horizon `<= 20`, probabilities
/// from {0, 0.3, 0.7, 1}, state-space signal, random SPD noise blocks and an
/// affine observation `Hx + C`.
pub fn random_instance(index: usize, seed: u64) -> Result<OracleInstance> {
    let inst_seed = derive_seed(seed, &[index as u64]);
    let mut rng = ChaCha20Rng::seed_from_u64(inst_seed);
    let n_x = rng.random_range(1..=2usize);
    let n_z = rng.random_range(1..=2usize);
    let p = rng.random_range(1..=2usize);
    let horizon = rng.random_range(3..=20usize);
    let gamma_bar = PROBABILITIES[rng.random_range(0..4)];
    let lambda_bar = PROBABILITIES[rng.random_range(0..4)];

    let transition = random_transition(&mut rng, p, 0.8);
    let output = uniform_matrix(&mut rng, n_x, p, 1.0);
    let initial_cov = random_spd(&mut rng, p, 0.2);
    let process_cov = random_spd(&mut rng, p, 0.1);
    let signal_cov = TabulatedCovariance::from_state_space(&transition, &output, &initial_cov, &process_cov, horizon)?;

    let h = uniform_matrix(&mut rng, n_z, n_x, 1.0);
    let c = if rng.random_bool(0.5) {
        DVector::from_fn(n_z, |_, _| rng.random_range(-1.0..1.0))
    } else {
        DVector::zeros(n_z)
    };
    let noise = MarkovNoiseModel::new(
        Schedule::Constant(random_transition(&mut rng, n_z, 0.5)),
        Schedule::Constant(random_spd(&mut rng, n_z, 0.1)),
        random_spd(&mut rng, n_z, 0.1),
    )?;
    let attack = AttackNoiseModel::new(Schedule::Constant(random_spd(&mut rng, n_z, 0.2)))?;
    let model = Model::new(
        Arc::new(signal_cov),
        Arc::new(LinearObservation::new(h, c)?),
        noise,
        BernoulliSchedule::constant(gamma_bar, lambda_bar)?,
        attack,
    )?;
    let signal = SignalModel::StateSpace {
        transition,
        output,
        initial_cov,
        process_cov,
    };
    let traj = simulate_run(&signal, &model, horizon, SimulationOptions::default(), &RngStream::new(inst_seed, 0))?;
    Ok(OracleInstance {
        label: format!(
            "random #{index} (n_x={n_x}, n_z={n_z}, p={p}, L={horizon}, gamma_bar={gamma_bar}, lambda_bar={lambda_bar})"
        ),
        nominal: vec![DVector::zeros(n_x); horizon],
        ys: traj.y,
        model,
    })
}

/// The carrier scenario linearized at the origin, with a simulated record.
pub fn carrier_instance(gamma_bar: f64, lambda_bar: f64, horizon: usize, seed: u64) -> Result<OracleInstance> {
    let scenario = CarrierScenario {
        gamma_bar,
        lambda_bar,
        ..Default::default()
    };
    let model = scenario.model()?;
    let traj = simulate_run(
        &scenario.signal(),
        &model,
        horizon,
        SimulationOptions::default(),
        &RngStream::new(seed, 0),
    )?;
    Ok(OracleInstance {
        label: format!("carrier (gamma_bar={gamma_bar}, lambda_bar={lambda_bar}, L={horizon})"),
        nominal: vec![DVector::zeros(1); horizon],
        ys: traj.y,
        model,
    })
}

/// Largest deviations found by [`check_instance`] or [`equivalence_suite`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub instances: usize,
    pub comparisons: usize,
    pub max_filter_deviation: f64,
    pub max_smoother_deviation: f64,
    /// Label of the instance with the largest deviation.
    pub worst: Option<String>,
}

impl SuiteReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_filter_deviation.max(self.max_smoother_deviation)
    }

    fn merge(&mut self, other: SuiteReport) {
        if other.max_deviation() > self.max_deviation() || self.worst.is_none() {
            self.worst = other.worst.clone();
        }
        self.instances += other.instances;
        self.comparisons += other.comparisons;
        self.max_filter_deviation = self.max_filter_deviation.max(other.max_filter_deviation);
        self.max_smoother_deviation = self.max_smoother_deviation.max(other.max_smoother_deviation);
    }
}

fn stacked_prefix(moments: &MomentModel, ys: &[DVector<f64>], l: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = moments.n_z;
    let dim = l * n;
    let gram = moments.gram.view((0, 0), (dim, dim)).into_owned();
    let mean = DVector::from_iterator(dim, moments.mean_y[..l].iter().flat_map(|m| m.iter().copied()));
    let stacked = DVector::from_iterator(dim, ys[..l].iter().flat_map(|y| y.iter().copied()));
    (gram, mean, stacked)
}

/// Compares `x̂_{k/k}` and every `x̂_{k/L}` (`k < L <= horizon`) against the batch projection.
pub fn check_instance(inst: &OracleInstance) -> Result<SuiteReport> {
    let model = &inst.model;
    let horizon = inst.horizon();
    let moments = build_moments(model, &inst.nominal, horizon)?;
    let mut filter = Filter::new(
        model,
        LinearizationPolicy::FixedNominal(inst.nominal.clone()),
        CovarianceForm::Theorem,
    )?;
    let mut smoothers: Vec<FixedPointSmoother> = Vec::with_capacity(horizon);
    let mut report = SuiteReport {
        instances: 1,
        worst: Some(inst.label.clone()),
        ..Default::default()
    };
    for l in 1..=horizon {
        let (record, output) = filter.step(&inst.ys[l - 1])?;
        for sm in smoothers.iter_mut() {
            sm.update(&record)?;
        }
        smoothers.push(FixedPointSmoother::init(l, filter.state(), &output.x_filt, model.signal.as_ref())?);

        let (gram, mean, stacked) = stacked_prefix(&moments, &inst.ys, l);
        let cols = gram.nrows();
        for sm in &smoothers {
            let cross = moments.cov_x_y[sm.k_fixed - 1].columns(0, cols).into_owned();
            let batch = affine_projection(&gram, &cross, &mean, &stacked)?;
            let dev = deviation(&sm.x_smooth, &batch);
            if !dev.is_finite() {
                return Err(Error::Oracle(format!("{}: non-finite deviation at k = {}", inst.label, sm.k_fixed)));
            }
            if sm.k_fixed == l {
                report.max_filter_deviation = report.max_filter_deviation.max(deviation(&output.x_filt, &batch));
            } else {
                report.max_smoother_deviation = report.max_smoother_deviation.max(dev);
            }
            report.comparisons += 1;
        }
    }
    Ok(report)
}

/// Runs [`check_instance`] on `n_random` random instances plus the carrier
/// scenario at a few probability pairs.
pub fn equivalence_suite(n_random: usize, seed: u64) -> Result<SuiteReport> {
    let mut total = SuiteReport::default();
    for i in 0..n_random {
        let inst = random_instance(i, seed)?;
        total.merge(check_instance(&inst).map_err(|e| Error::Oracle(format!("{}: {e}", inst.label)))?);
    }
    for (gi, &(g, l)) in [(0.7, 0.3), (0.9, 0.1), (1.0, 0.0), (0.3, 0.9)].iter().enumerate() {
        let inst = carrier_instance(g, l, 20, derive_seed(seed, &[u64::MAX, gi as u64]))?;
        total.merge(check_instance(&inst).map_err(|e| Error::Oracle(format!("{}: {e}", inst.label)))?);
    }
    Ok(total)
}

/// Maximum deviations among the recursion, the batch oracle and the
/// augmented-state Kalman filter on a clean AR(1) instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanAgreement {
    pub steps: usize,
    pub estimator_vs_kalman: f64,
    pub batch_vs_kalman: f64,
    pub estimator_vs_batch: f64,
}

impl KalmanAgreement {
    pub fn max(&self) -> f64 {
        self.estimator_vs_kalman.max(self.batch_vs_kalman).max(self.estimator_vs_batch)
    }
}

/// AR(1) `ρ = 0.8`, unit variance, observed through `y = x + v` with the
/// carrier scenario's Markov noise; no missing signal and no attacks.
pub fn kalman_agreement(steps: usize, seed: u64) -> Result<KalmanAgreement> {
    let ar1 = Ar1Covariance::new(0.8, 1.0)?;
    let noise = MarkovNoiseModel::scalar(0.75, 0.01, 0.1)?;
    let model = Model::new(
        Arc::new(ar1),
        Arc::new(LinearObservation::identity(1)),
        noise.clone(),
        BernoulliSchedule::constant(1.0, 0.0)?,
        AttackNoiseModel::scalar(1.0)?,
    )?;
    let signal = SignalModel::Ar1 {
        rho: ar1.rho,
        variance: ar1.variance,
    };
    let ys = simulate_run(&signal, &model, steps, SimulationOptions::default(), &RngStream::new(seed, 0))?.y;

    let kalman = kalman_reference(&ar1, &noise, &DMatrix::identity(1, 1), &ys)?;
    let nominal = vec![DVector::zeros(1); steps];
    let mut filter = Filter::new(&model, LinearizationPolicy::FixedNominal(nominal.clone()), CovarianceForm::Theorem)?;
    let moments = build_moments(&model, &nominal, steps)?;
    let mut out = KalmanAgreement {
        steps,
        estimator_vs_kalman: 0.0,
        batch_vs_kalman: 0.0,
        estimator_vs_batch: 0.0,
    };
    for k in 1..=steps {
        let (_, output) = filter.step(&ys[k - 1])?;
        let batch = super::batch_affine_estimate(&moments, &ys[..k], k)?;
        out.estimator_vs_kalman = out.estimator_vs_kalman.max(deviation(&output.x_filt, &kalman[k - 1]));
        out.batch_vs_kalman = out.batch_vs_kalman.max(deviation(&batch, &kalman[k - 1]));
        out.estimator_vs_batch = out.estimator_vs_batch.max(deviation(&output.x_filt, &batch));
    }
    Ok(out)
}
