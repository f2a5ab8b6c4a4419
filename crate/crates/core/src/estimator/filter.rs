//! One-step filter recursion over the innovation sequence.
//!
//! The estimate of the signal is `x̂_{k/k} = A_k e^x_k`, where the
//! coefficient vectors `e^x_k`, `e^v_k` accumulate innovations weighted by
//! `Ψ^a_k (Σ^η_k)^{-1}`, and `T^{ab}_k = E[e^a_k (e^b_k)ᵀ]` carries their
//! second moments. All `(Σ^η_k)^{-1}` applications go through one Cholesky
//! factor per step.

use nalgebra::{DMatrix, DVector};

use super::{CovarianceForm, FilterOutput, FilterState, InnovationRecord, LinearizationPolicy};
use crate::error::{Error, Result};
use crate::linalg::{all_finite_vec, symmetrize, SpdFactor};
use crate::model::{gamma_delta, linearize, GammaDelta, LinearizedObservation, Model, NoiseFactors};

/// One-step predictions of the signal, the noise and the uncorrupted observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub x_pred: DVector<f64>,
    pub v_pred: DVector<f64>,
    pub z_pred: DVector<f64>,
    /// Predicted signal part of the observation: `h_k(x0)` in prediction-linearized
    /// mode, `H_k x̂_{k/k-1} + C_k` otherwise.
    pub h_pred: DVector<f64>,
}

fn check_next(state: &FilterState, k: usize) -> Result<()> {
    if state.k + 1 != k {
        return Err(Error::Sequencing {
            expected: state.k + 1,
            got: k,
        });
    }
    Ok(())
}

/// `x̂_{k/k-1} = A_k e^x_{k-1}`, `v̂_{k/k-1} = E_k e^v_{k-1}`,
/// `ẑ_{k/k-1} = γ̄_k (H_k x̂_{k/k-1} + C_k) + v̂_{k/k-1}`.
pub fn predict(
    state: &FilterState,
    a_k: &DMatrix<f64>,
    factors_k: &NoiseFactors,
    lin: &LinearizedObservation,
    gamma_bar: f64,
) -> Result<Prediction> {
    check_next(state, lin.k)?;
    check_next(state, factors_k.k)?;
    let x_pred = a_k * &state.e_x;
    let v_pred = &factors_k.e * &state.e_v;
    // linearizing at the prediction itself gives H x0 + C = h(x0)
    let h_pred = if lin.x0 == x_pred {
        lin.value.clone()
    } else {
        &lin.h * &x_pred + &lin.c
    };
    let z_pred = &h_pred * gamma_bar + &v_pred;
    Ok(Prediction {
        x_pred,
        v_pred,
        z_pred,
        h_pred,
    })
}

/// `η_k = y_k - (1 - λ̄_k) ẑ_{k/k-1}`.
pub fn innovation(y: &DVector<f64>, z_pred: &DVector<f64>, lambda_bar: f64) -> DVector<f64> {
    y - z_pred * (1.0 - lambda_bar)
}

/// `Ψ^a_k = (1 - λ̄_k)(Γ^a_k - Δ^x_k T^{xa}_{k-1} - Δ^v_k T^{va}_{k-1})ᵀ`, `a = x, v`.
pub fn psi(gd: &GammaDelta, state: &FilterState, lambda_bar: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if gd.delta_x.ncols() != state.t_xx.nrows() || gd.delta_v.ncols() != state.t_vv.nrows() {
        return Err(Error::shape("psi", state.t_xv.shape(), (gd.delta_x.ncols(), gd.delta_v.ncols())));
    }
    let t_vx = state.t_xv.transpose();
    let w = 1.0 - lambda_bar;
    let psi_x = (&gd.gamma_x - &gd.delta_x * &state.t_xx - &gd.delta_v * &t_vx).transpose() * w;
    let psi_v = (&gd.gamma_v - &gd.delta_x * &state.t_xv - &gd.delta_v * &state.t_vv).transpose() * w;
    Ok((psi_x, psi_v))
}

/// `E[ẑ_{k/k-1} ẑ_{k/k-1}ᵀ]` expressed through the `T` matrices.
pub fn expected_prediction_outer(
    gd: &GammaDelta,
    state: &FilterState,
    c: &DVector<f64>,
    gamma_bar: f64,
) -> DMatrix<f64> {
    let t_vx = state.t_xv.transpose();
    let xx = &gd.delta_x * &state.t_xx * gd.delta_x.transpose();
    let xv = &gd.delta_x * &state.t_xv * gd.delta_v.transpose();
    let vx = &gd.delta_v * &t_vx * gd.delta_x.transpose();
    let vv = &gd.delta_v * &state.t_vv * gd.delta_v.transpose();
    symmetrize(&(xx + xv + vx + vv + c * c.transpose() * (gamma_bar * gamma_bar)))
}

/// `E[z_k z_kᵀ] = γ̄_k (H_k A_k B_kᵀ H_kᵀ + C_k C_kᵀ) + E_k F_kᵀ` under the linearized model.
pub fn observation_second_moment(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a_k: &DMatrix<f64>,
    b_k: &DMatrix<f64>,
    factors_k: &NoiseFactors,
    gamma_bar: f64,
) -> DMatrix<f64> {
    let signal = h * a_k * b_k.transpose() * h.transpose() + c * c.transpose();
    symmetrize(&(signal * gamma_bar + &factors_k.e * factors_k.f.transpose()))
}

/// Expectation-form innovation covariance:
/// `Σ^η_k = Σ^y_k - (1-λ̄_k)² E[ẑ ẑᵀ]`, `Σ^y_k = (1-λ̄_k) Σ^z_k + λ̄_k Σ^w_k`.
///
/// Returned symmetrized but not regularized.
#[allow(clippy::too_many_arguments)]
pub fn innovation_covariance_theorem(
    gd: &GammaDelta,
    state: &FilterState,
    lin: &LinearizedObservation,
    a_k: &DMatrix<f64>,
    b_k: &DMatrix<f64>,
    factors_k: &NoiseFactors,
    gamma_bar: f64,
    lambda_bar: f64,
    sigma_w: &DMatrix<f64>,
) -> DMatrix<f64> {
    let sigma_z = observation_second_moment(&lin.h, &lin.c, a_k, b_k, factors_k, gamma_bar);
    let sigma_y = sigma_z * (1.0 - lambda_bar) + sigma_w * lambda_bar;
    let outer = expected_prediction_outer(gd, state, &lin.c, gamma_bar);
    let w = 1.0 - lambda_bar;
    symmetrize(&(sigma_y - outer * (w * w)))
}

/// One-step prediction error covariances of the signal, noise and observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrorCovariances {
    pub x: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

/// `Σ^x̃ = A_k B_kᵀ - A_k T^{xx} A_kᵀ`, `Σ^ṽ = E_k F_kᵀ - E_k T^{vv} E_kᵀ`,
/// `Σ^z̃ = γ̄ H Σ^x̃ Hᵀ + γ̄(1-γ̄) h hᵀ + Σ^ṽ` with `h` the predicted signal part.
pub fn prediction_error_covariances(
    state: &FilterState,
    a_k: &DMatrix<f64>,
    b_k: &DMatrix<f64>,
    factors_k: &NoiseFactors,
    h: &DMatrix<f64>,
    h_pred: &DVector<f64>,
    gamma_bar: f64,
) -> PredictionErrorCovariances {
    let x = symmetrize(&(a_k * b_k.transpose() - a_k * &state.t_xx * a_k.transpose()));
    let e = &factors_k.e;
    let v = symmetrize(&(e * factors_k.f.transpose() - e * &state.t_vv * e.transpose()));
    let z = h * &x * h.transpose() * gamma_bar
        + h_pred * h_pred.transpose() * (gamma_bar * (1.0 - gamma_bar))
        + &v;
    PredictionErrorCovariances {
        x,
        v,
        z: symmetrize(&z),
    }
}

/// Covariance of `z_k - ẑ_{k/k-1}` under the linearized model:
/// `γ̄² H Σ^x̃ Hᵀ + γ̄(1-γ̄)(H A_k B_kᵀ Hᵀ + C Cᵀ) + Σ^ṽ - γ̄(H A_k T^{xv} E_kᵀ + (·)ᵀ)`.
///
/// It differs from [`prediction_error_covariances`]'s `z` in two places: the
/// realized `h hᵀ` is replaced by its expectation and the signal/noise
/// prediction error correlation `E[x̃ ṽᵀ] = -A_k T^{xv} E_kᵀ` is kept. With
/// this `Σ^z̃` and the expected `ẑ ẑᵀ`, [`innovation_covariance_ekf_with_outer`]
/// reproduces [`innovation_covariance_theorem`] exactly.
pub fn expected_prediction_error_cov_z(
    state: &FilterState,
    a_k: &DMatrix<f64>,
    b_k: &DMatrix<f64>,
    factors_k: &NoiseFactors,
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma_bar: f64,
) -> DMatrix<f64> {
    let err_x = symmetrize(&(a_k * b_k.transpose() - a_k * &state.t_xx * a_k.transpose()));
    let e = &factors_k.e;
    let err_v = symmetrize(&(e * factors_k.f.transpose() - e * &state.t_vv * e.transpose()));
    let ha = h * a_k;
    let signal = &ha * b_k.transpose() * h.transpose() + c * c.transpose();
    let cross = &ha * &state.t_xv * e.transpose();
    let z = h * err_x * h.transpose() * (gamma_bar * gamma_bar) + signal * (gamma_bar * (1.0 - gamma_bar)) + err_v
        - (&cross + cross.transpose()) * gamma_bar;
    symmetrize(&z)
}

/// Realized-prediction innovation covariance
/// `Σ^η = (1-λ̄) Σ^z̃ + λ̄(1-λ̄) ẑ ẑᵀ + λ̄ Σ^w`.
pub fn innovation_covariance_ekf(
    z_pred: &DVector<f64>,
    err_cov_z: &DMatrix<f64>,
    lambda_bar: f64,
    sigma_w: &DMatrix<f64>,
) -> DMatrix<f64> {
    innovation_covariance_ekf_with_outer(&(z_pred * z_pred.transpose()), err_cov_z, lambda_bar, sigma_w)
}

/// [`innovation_covariance_ekf`] with the `ẑ ẑᵀ` term supplied directly.
pub fn innovation_covariance_ekf_with_outer(
    z_outer: &DMatrix<f64>,
    err_cov_z: &DMatrix<f64>,
    lambda_bar: f64,
    sigma_w: &DMatrix<f64>,
) -> DMatrix<f64> {
    let w = 1.0 - lambda_bar;
    symmetrize(&(err_cov_z * w + z_outer * (lambda_bar * w) + sigma_w * lambda_bar))
}

/// `Σ^η_{k+1}` at `state` in three evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEtaForms {
    pub theorem: DMatrix<f64>,
    /// Realized-prediction form, as used by [`CovarianceForm::Ekf`].
    pub realized: DMatrix<f64>,
    /// Realized form with `ẑ ẑᵀ` and `Σ^z̃` replaced by their expectations.
    pub bridged: DMatrix<f64>,
    /// Realized form with only `ẑ ẑᵀ` replaced.
    pub outer_only: DMatrix<f64>,
}

/// Evaluates the innovation covariance forms for the step after `state`,
/// without regularization.
pub fn sigma_eta_forms(model: &Model, policy: &LinearizationPolicy, state: &FilterState) -> Result<SigmaEtaForms> {
    let k = state.k + 1;
    let factors = state.noise.step(&model.noise)?;
    let a_k = model.signal.a(k)?;
    let b_k = model.signal.b(k)?;
    let gamma_bar = model.probabilities.gamma_bar(k)?;
    let lambda_bar = model.probabilities.lambda_bar(k)?;
    let sigma_w = model.attack.sigma_w.at(k)?;
    let x0 = policy.nominal(k, &(&a_k * &state.e_x))?;
    let lin = linearize(model.observation.as_ref(), k, &x0)?;
    let gd = gamma_delta(&lin.h, &a_k, &b_k, &factors, gamma_bar)?;
    let pred = predict(state, &a_k, &factors, &lin, gamma_bar)?;
    let err = prediction_error_covariances(state, &a_k, &b_k, &factors, &lin.h, &pred.h_pred, gamma_bar);
    let outer = expected_prediction_outer(&gd, state, &lin.c, gamma_bar);
    let err_z = expected_prediction_error_cov_z(state, &a_k, &b_k, &factors, &lin.h, &lin.c, gamma_bar);
    Ok(SigmaEtaForms {
        theorem: innovation_covariance_theorem(&gd, state, &lin, &a_k, &b_k, &factors, gamma_bar, lambda_bar, sigma_w),
        realized: innovation_covariance_ekf(&pred.z_pred, &err.z, lambda_bar, sigma_w),
        bridged: innovation_covariance_ekf_with_outer(&outer, &err_z, lambda_bar, sigma_w),
        outer_only: innovation_covariance_ekf_with_outer(&outer, &err.z, lambda_bar, sigma_w),
    })
}

/// Everything produced by one call to [`filter_step`].
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: FilterState,
    pub record: InnovationRecord,
    pub output: FilterOutput,
    /// Diagonal shift applied to `Σ^η_k` (0 when it factorized as is).
    pub jitter: f64,
}

/// Advances the filter from `k-1` to `k` with observation `y_k`.
pub fn filter_step(
    state: &FilterState,
    y: &DVector<f64>,
    model: &Model,
    policy: &LinearizationPolicy,
    form: CovarianceForm,
) -> Result<StepResult> {
    let k = state.k + 1;
    let n_z = model.dims.n_z;
    if y.len() != n_z {
        return Err(Error::shape("observation", (n_z, 1), (y.len(), 1)));
    }
    if !all_finite_vec(y) {
        return Err(Error::Numerical {
            k,
            reason: "non-finite observation".into(),
        });
    }
    let factors = state.noise.step(&model.noise)?;
    let a_k = model.signal.a(k)?;
    let b_k = model.signal.b(k)?;
    let gamma_bar = model.probabilities.gamma_bar(k)?;
    let lambda_bar = model.probabilities.lambda_bar(k)?;
    let sigma_w = model.attack.sigma_w.at(k)?;

    let x_pred = &a_k * &state.e_x;
    let x0 = policy.nominal(k, &x_pred)?;
    let lin = linearize(model.observation.as_ref(), k, &x0)?;
    let gd = gamma_delta(&lin.h, &a_k, &b_k, &factors, gamma_bar)?;
    let (psi_x, psi_v) = psi(&gd, state, lambda_bar)?;
    let pred = predict(state, &a_k, &factors, &lin, gamma_bar)?;
    let eta = innovation(y, &pred.z_pred, lambda_bar);
    let err = prediction_error_covariances(state, &a_k, &b_k, &factors, &lin.h, &pred.h_pred, gamma_bar);

    let raw = match form {
        CovarianceForm::Theorem => innovation_covariance_theorem(
            &gd, state, &lin, &a_k, &b_k, &factors, gamma_bar, lambda_bar, sigma_w,
        ),
        CovarianceForm::Ekf => innovation_covariance_ekf(&pred.z_pred, &err.z, lambda_bar, sigma_w),
    };
    let factor = SpdFactor::regularized(&raw, k)?;
    let sigma_eta = symmetrize(&raw) + DMatrix::identity(n_z, n_z) * factor.jitter;

    let solved_eta = factor.solve_vec(&eta);
    let solved_psi_x_t = factor.solve_mat(&psi_x.transpose());
    let solved_psi_v_t = factor.solve_mat(&psi_v.transpose());

    let e_x = &state.e_x + &psi_x * &solved_eta;
    let e_v = &state.e_v + &psi_v * &solved_eta;
    let t_xx = symmetrize(&(&state.t_xx + &psi_x * &solved_psi_x_t));
    let t_xv = &state.t_xv + &psi_x * &solved_psi_v_t;
    let t_vv = symmetrize(&(&state.t_vv + &psi_v * &solved_psi_v_t));
    let x_filt = &a_k * &e_x;
    if !all_finite_vec(&x_filt) {
        return Err(Error::Numerical {
            k,
            reason: "non-finite filter estimate".into(),
        });
    }

    let next = FilterState {
        k,
        e_x,
        e_v,
        t_xx,
        t_xv,
        t_vv,
        noise: factors,
    };
    let record = InnovationRecord {
        k,
        eta,
        sigma_eta,
        psi_x,
        psi_v,
        delta_x: gd.delta_x,
        delta_v: gd.delta_v,
        z_pred: pred.z_pred.clone(),
        lambda_bar,
        solved_eta,
        solved_psi_x_t,
        solved_psi_v_t,
    };
    let output = FilterOutput {
        k,
        x_filt,
        x_pred: pred.x_pred,
        v_pred: pred.v_pred,
        z_pred: pred.z_pred,
        err_cov_x_pred: err.x,
        err_cov_v_pred: err.v,
        err_cov_z_pred: err.z,
    };
    Ok(StepResult {
        state: next,
        record,
        output,
        jitter: factor.jitter,
    })
}
