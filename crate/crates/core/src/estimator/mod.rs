//! Recursive least-squares filter and fixed-point smoother driven by the
//! innovation sequence of the (linearized) observations.

pub mod filter;
pub mod smoother;

use nalgebra::{DMatrix, DVector};

pub use filter::{
    expected_prediction_error_cov_z, expected_prediction_outer, filter_step, innovation, innovation_covariance_ekf,
    innovation_covariance_ekf_with_outer, innovation_covariance_theorem, observation_second_moment,
    predict, prediction_error_covariances, psi, sigma_eta_forms, Prediction, PredictionErrorCovariances, SigmaEtaForms,
    StepResult,
};
pub use smoother::{FixedLagSmoother, FixedPointSmoother};

use crate::error::{Error, Result};
use crate::model::{Model, NoiseFactors};

/// Where the observation function is linearized at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearizationPolicy {
    /// Use the one-step prediction `A_k e^x_{k-1}` as nominal point.
    EkfPrediction,
    /// Use a fixed nominal trajectory; `nominal[k-1]` is the point for step `k`.
    FixedNominal(Vec<DVector<f64>>),
}

impl LinearizationPolicy {
    /// Fixed nominal trajectory at the origin for `horizon` steps.
    pub fn zero_nominal(n_x: usize, horizon: usize) -> Self {
        LinearizationPolicy::FixedNominal(vec![DVector::zeros(n_x); horizon])
    }

    pub fn nominal(&self, k: usize, x_pred: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            LinearizationPolicy::EkfPrediction => Ok(x_pred.clone()),
            LinearizationPolicy::FixedNominal(points) => {
                let point = k
                    .checked_sub(1)
                    .and_then(|i| points.get(i))
                    .ok_or(Error::OutOfHorizon { k, max: points.len() })?;
                if point.len() != x_pred.len() {
                    return Err(Error::shape("nominal point", (x_pred.len(), 1), (point.len(), 1)));
                }
                Ok(point.clone())
            }
        }
    }

    /// Σ^η form used when none is requested explicitly.
    pub fn default_form(&self) -> CovarianceForm {
        match self {
            LinearizationPolicy::EkfPrediction => CovarianceForm::Ekf,
            LinearizationPolicy::FixedNominal(_) => CovarianceForm::Theorem,
        }
    }
}

/// How the innovation covariance is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceForm {
    /// Expectation form built from the `T` matrices.
    Theorem,
    /// Prediction-error form using the realized prediction `ẑ_{k/k-1}`.
    Ekf,
}

/// Recursion carriers after processing observation `k` (`k = 0` before any).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub k: usize,
    pub e_x: DVector<f64>,
    pub e_v: DVector<f64>,
    pub t_xx: DMatrix<f64>,
    pub t_xv: DMatrix<f64>,
    pub t_vv: DMatrix<f64>,
    pub noise: NoiseFactors,
}

impl FilterState {
    pub fn initial(model: &Model) -> Result<Self> {
        let p = model.dims.p;
        let n_z = model.dims.n_z;
        Ok(FilterState {
            k: 0,
            e_x: DVector::zeros(p),
            e_v: DVector::zeros(n_z),
            t_xx: DMatrix::zeros(p, p),
            t_xv: DMatrix::zeros(p, n_z),
            t_vv: DMatrix::zeros(n_z, n_z),
            noise: NoiseFactors::init(&model.noise)?,
        })
    }

    pub fn t_vx(&self) -> DMatrix<f64> {
        self.t_xv.transpose()
    }
}

/// Per-step innovation quantities, kept so the smoother can reuse them.
///
/// The `solved_*` fields are `(Σ^η_k)^{-1}` applied to `η_k`, `(Ψ^x_k)ᵀ` and
/// `(Ψ^v_k)ᵀ` with the same factorization the filter used.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationRecord {
    pub k: usize,
    pub eta: DVector<f64>,
    pub sigma_eta: DMatrix<f64>,
    pub psi_x: DMatrix<f64>,
    pub psi_v: DMatrix<f64>,
    pub delta_x: DMatrix<f64>,
    pub delta_v: DMatrix<f64>,
    pub z_pred: DVector<f64>,
    pub lambda_bar: f64,
    pub solved_eta: DVector<f64>,
    pub solved_psi_x_t: DMatrix<f64>,
    pub solved_psi_v_t: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub k: usize,
    /// `x̂_{k/k}`.
    pub x_filt: DVector<f64>,
    /// `x̂_{k/k-1}`.
    pub x_pred: DVector<f64>,
    /// `v̂_{k/k-1}`.
    pub v_pred: DVector<f64>,
    /// `ẑ_{k/k-1}`.
    pub z_pred: DVector<f64>,
    pub err_cov_x_pred: DMatrix<f64>,
    pub err_cov_v_pred: DMatrix<f64>,
    pub err_cov_z_pred: DMatrix<f64>,
}

/// Sequential filter over a model, counting regularization events.
#[derive(Debug, Clone)]
pub struct Filter<'m> {
    model: &'m Model,
    policy: LinearizationPolicy,
    form: CovarianceForm,
    state: FilterState,
    jitter_events: usize,
}

impl<'m> Filter<'m> {
    pub fn new(model: &'m Model, policy: LinearizationPolicy, form: CovarianceForm) -> Result<Self> {
        Ok(Filter {
            state: FilterState::initial(model)?,
            model,
            policy,
            form,
            jitter_events: 0,
        })
    }

    pub fn with_default_form(model: &'m Model, policy: LinearizationPolicy) -> Result<Self> {
        let form = policy.default_form();
        Self::new(model, policy, form)
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Number of steps whose innovation covariance needed a diagonal shift.
    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }

    pub fn step(&mut self, y: &DVector<f64>) -> Result<(InnovationRecord, FilterOutput)> {
        let res = filter_step(&self.state, y, self.model, &self.policy, self.form)?;
        if res.jitter > 0.0 {
            self.jitter_events += 1;
        }
        self.state = res.state;
        Ok((res.record, res.output))
    }
}

/// Filter and fixed-lag estimates over one observation sequence.
#[derive(Debug, Clone)]
pub struct Estimates {
    /// `x̂_{k/k}` for `k = 1..=ys.len()`.
    pub filtered: Vec<DVector<f64>>,
    /// `x̂_{k/k+lag}` for `k = 1..=ys.len()-lag`.
    pub smoothed: Vec<DVector<f64>>,
    pub records: Vec<InnovationRecord>,
    pub outputs: Vec<FilterOutput>,
    pub jitter_events: usize,
}

/// Runs the filter and a fixed-lag smoother with lag `lag` over `ys` (`ys[k-1] = y_k`).
pub fn estimate(
    model: &Model,
    policy: LinearizationPolicy,
    form: CovarianceForm,
    ys: &[DVector<f64>],
    lag: usize,
) -> Result<Estimates> {
    let mut filter = Filter::new(model, policy, form)?;
    let mut lagged = FixedLagSmoother::new(lag);
    let mut out = Estimates {
        filtered: Vec::with_capacity(ys.len()),
        smoothed: Vec::with_capacity(ys.len()),
        records: Vec::with_capacity(ys.len()),
        outputs: Vec::with_capacity(ys.len()),
        jitter_events: 0,
    };
    for y in ys {
        let (record, output) = filter.step(y)?;
        if let Some((k, x)) = lagged.push(filter.state(), &record, &output, model.signal.as_ref())? {
            debug_assert_eq!(k, out.smoothed.len() + 1);
            out.smoothed.push(x);
        }
        out.filtered.push(output.x_filt.clone());
        out.records.push(record);
        out.outputs.push(output);
    }
    out.jitter_events = filter.jitter_events();
    Ok(out)
}
