//! Brute-force references for verifying the recursive estimator.
//!
//! [`batch_affine_estimate`] solves the full affine least-squares problem from
//! exact first and second moments of the stacked observations;
//! [`kalman_reference`] runs a textbook Kalman filter on the augmented state
//! `[x_k, v_k]` for the clean linear case. Neither shares code with the
//! recursion it checks.

pub mod suite;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdFactor};
use crate::model::{linearize, Ar1Covariance, MarkovNoiseModel, Model, NoiseFactors};

pub use suite::{
    carrier_instance, equivalence_suite, kalman_agreement, random_instance, KalmanAgreement, OracleInstance,
    SuiteReport,
};

/// Largest stacked Gram dimension (`L·n_z`) the batch oracle accepts:
/// 25 steps of a two-dimensional observation.
pub const MAX_GRAM_DIM: usize = 50;

/// Exact moments of `y_1..y_L` and their cross-covariance with `x_1..x_L`
/// under a fixed-nominal linearization.
#[derive(Debug, Clone)]
pub struct MomentModel {
    pub horizon: usize,
    pub n_x: usize,
    pub n_z: usize,
    /// `E[y_j]`, index `j - 1`.
    pub mean_y: Vec<DVector<f64>>,
    /// Stacked `Cov[Y]` (`L·n_z` square).
    pub gram: DMatrix<f64>,
    /// `Cov[x_k, Y]`, index `k - 1`, each `n_x × L·n_z`.
    pub cov_x_y: Vec<DMatrix<f64>>,
}

impl MomentModel {
    pub fn cov_y(&self, j: usize, i: usize) -> DMatrix<f64> {
        let n = self.n_z;
        self.gram.view(((j - 1) * n, (i - 1) * n), (n, n)).into_owned()
    }

    pub fn cov_x_y_block(&self, k: usize, j: usize) -> DMatrix<f64> {
        let n = self.n_z;
        self.cov_x_y[k - 1].view((0, (j - 1) * n), (self.n_x, n)).into_owned()
    }
}

/// Moments of the linearized observations around `nominal` (`nominal[j-1]` for step `j`).
pub fn build_moments(model: &Model, nominal: &[DVector<f64>], horizon: usize) -> Result<MomentModel> {
    if horizon == 0 || horizon * model.dims.n_z > MAX_GRAM_DIM {
        return Err(Error::Oracle(format!(
            "horizon {horizon} gives a Gram matrix larger than {MAX_GRAM_DIM} rows"
        )));
    }
    if nominal.len() < horizon {
        return Err(Error::OutOfHorizon {
            k: horizon,
            max: nominal.len(),
        });
    }
    let n_x = model.dims.n_x;
    let n_z = model.dims.n_z;
    let factors = NoiseFactors::sequence(&model.noise, horizon)?;
    let mut h = Vec::with_capacity(horizon);
    let mut c = Vec::with_capacity(horizon);
    let mut g = Vec::with_capacity(horizon);
    let mut l = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let lin = linearize(model.observation.as_ref(), j, &nominal[j - 1])?;
        h.push(lin.h);
        c.push(lin.c);
        g.push(model.probabilities.gamma_bar(j)?);
        l.push(model.probabilities.lambda_bar(j)?);
    }
    let mean_y: Vec<DVector<f64>> = (0..horizon).map(|j| &c[j] * ((1.0 - l[j]) * g[j])).collect();

    let dim = horizon * n_z;
    let mut gram = DMatrix::zeros(dim, dim);
    for j in 1..=horizon {
        let (jj, gj, lj) = (j - 1, g[j - 1], l[j - 1]);
        for i in 1..=j {
            let ii = i - 1;
            let block = if i == j {
                let sx = model.signal.covariance(j)?;
                let sv = &factors[j].e * factors[j].f.transpose();
                // E[z zᵀ] with the Bernoulli indicator: γ² = γ
                let sz = (&h[jj] * sx * h[jj].transpose() + &c[jj] * c[jj].transpose()) * gj + sv;
                let sy = sz * (1.0 - lj) + model.attack.sigma_w.at(j)? * lj;
                symmetrize(&(sy - &mean_y[jj] * mean_y[jj].transpose()))
            } else {
                let sx = model.signal.cross_covariance(j, i)?;
                let sv = &factors[j].e * factors[i].f.transpose();
                let gi = g[ii];
                (&h[jj] * sx * h[ii].transpose() * (gj * gi) + sv) * ((1.0 - lj) * (1.0 - l[ii]))
            };
            gram.view_mut((jj * n_z, ii * n_z), (n_z, n_z)).copy_from(&block);
            if i != j {
                gram.view_mut((ii * n_z, jj * n_z), (n_z, n_z))
                    .copy_from(&block.transpose());
            }
        }
    }

    let mut cov_x_y = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let mut row = DMatrix::zeros(n_x, dim);
        for j in 1..=horizon {
            let sx = model.signal.cross_covariance(k, j)?;
            let block = sx * h[j - 1].transpose() * ((1.0 - l[j - 1]) * g[j - 1]);
            row.view_mut((0, (j - 1) * n_z), (n_x, n_z)).copy_from(&block);
        }
        cov_x_y.push(row);
    }
    Ok(MomentModel {
        horizon,
        n_x,
        n_z,
        mean_y,
        gram,
        cov_x_y,
    })
}

/// `x̂ = Σ_xY Σ_YY^{-1} (Y - E[Y])` as one SPD solve.
pub fn affine_projection(
    gram: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    mean: &DVector<f64>,
    stacked: &DVector<f64>,
) -> Result<DVector<f64>> {
    let factor = SpdFactor::regularized(gram, 0).map_err(|e| Error::Oracle(format!("Gram matrix: {e}")))?;
    let weights = factor.solve_vec(&(stacked - mean));
    Ok(cross * weights)
}

/// Affine LS estimate of `x_k` from `ys` = `y_1..y_L`, `L = ys.len()`.
pub fn batch_affine_estimate(moments: &MomentModel, ys: &[DVector<f64>], k: usize) -> Result<DVector<f64>> {
    let l = ys.len();
    if l == 0 || l > moments.horizon || k == 0 || k > moments.horizon {
        return Err(Error::Oracle(format!(
            "need 1 <= L, k <= {} (got L = {l}, k = {k})",
            moments.horizon
        )));
    }
    let n = moments.n_z;
    let dim = l * n;
    let stacked = DVector::from_iterator(dim, ys.iter().flat_map(|y| y.iter().copied()));
    let mean = DVector::from_iterator(dim, moments.mean_y[..l].iter().flat_map(|m| m.iter().copied()));
    let gram = moments.gram.view((0, 0), (dim, dim)).into_owned();
    let cross = moments.cov_x_y[k - 1].columns(0, dim).into_owned();
    affine_projection(&gram, &cross, &mean, &stacked)
}

/// Kalman filter on `[x_k; v_k]` for a stationary AR(1) signal observed as
/// `y_k = H x_k + v_k` (no missing signal, no attacks). Returns `x̂_{k/k}`.
pub fn kalman_reference(
    signal: &Ar1Covariance,
    noise: &MarkovNoiseModel,
    h: &DMatrix<f64>,
    ys: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let n_z = noise.dim();
    if h.shape() != (n_z, 1) {
        return Err(Error::shape("observation matrix", (n_z, 1), h.shape()));
    }
    let n = 1 + n_z;
    let mut meas = DMatrix::zeros(n_z, n);
    meas.view_mut((0, 0), (n_z, 1)).copy_from(h);
    meas.view_mut((0, 1), (n_z, n_z)).copy_from(&DMatrix::identity(n_z, n_z));

    let d0 = noise.transition.at(0)?;
    let v1 = d0 * &noise.initial_cov * d0.transpose() + noise.driving_cov.at(0)?;
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    cov[(0, 0)] = signal.variance;
    cov.view_mut((1, 1), (n_z, n_z)).copy_from(&v1);

    let mut out = Vec::with_capacity(ys.len());
    for (idx, y) in ys.iter().enumerate() {
        let k = idx + 1;
        if k > 1 {
            let d = noise.transition.at(k - 1)?;
            let mut trans = DMatrix::zeros(n, n);
            trans[(0, 0)] = signal.rho;
            trans.view_mut((1, 1), (n_z, n_z)).copy_from(d);
            let mut q = DMatrix::zeros(n, n);
            q[(0, 0)] = signal.variance * (1.0 - signal.rho * signal.rho);
            q.view_mut((1, 1), (n_z, n_z)).copy_from(noise.driving_cov.at(k - 1)?);
            mean = &trans * mean;
            cov = symmetrize(&(&trans * cov * trans.transpose() + q));
        }
        let s = symmetrize(&(&meas * &cov * meas.transpose()));
        let factor = SpdFactor::regularized(&s, k)?;
        let gain = factor.solve_mat(&(&meas * &cov)).transpose();
        mean = &mean + &gain * (y - &meas * &mean);
        let joseph = DMatrix::identity(n, n) - &gain * &meas;
        cov = symmetrize(&(&joseph * cov * joseph.transpose()));
        out.push(DVector::from_element(1, mean[0]));
    }
    Ok(out)
}
