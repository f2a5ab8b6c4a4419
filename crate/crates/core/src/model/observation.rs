//! Observation functions `h_k` and their first-order linearization.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, all_finite_vec};

/// A time-varying observation function `h_k: R^{n_x} -> R^{n_z}`.
pub trait ObservationFunction: Send + Sync + fmt::Debug {
    /// `(n_x, n_z)`.
    fn dims(&self) -> (usize, usize);
    fn eval(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
    /// Analytic Jacobian (`n_z × n_x`) when available.
    fn jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Scalar phase-modulated carrier `h_k(x) = cos(2π f k Δ + m x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierPhase {
    pub carrier_freq: f64,
    pub sampling_period: f64,
    pub phase_sensitivity: f64,
}

impl CarrierPhase {
    pub fn phase(&self, k: usize, x: f64) -> f64 {
        2.0 * PI * self.carrier_freq * k as f64 * self.sampling_period + self.phase_sensitivity * x
    }
}

impl Default for CarrierPhase {
    fn default() -> Self {
        CarrierPhase {
            carrier_freq: 10.0,
            sampling_period: 0.01,
            phase_sensitivity: 2.0,
        }
    }
}

impl ObservationFunction for CarrierPhase {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn eval(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.phase(k, x[0]).cos())
    }

    fn jacobian(&self, k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(
            1,
            1,
            -self.phase_sensitivity * self.phase(k, x[0]).sin(),
        ))
    }
}

/// Affine observation `h(x) = H x + c`, constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservation {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearObservation {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if c.len() != h.nrows() {
            return Err(Error::shape("observation offset", (h.nrows(), 1), (c.len(), 1)));
        }
        Ok(LinearObservation { h, c })
    }

    pub fn identity(n: usize) -> Self {
        LinearObservation {
            h: DMatrix::identity(n, n),
            c: DVector::zeros(n),
        }
    }
}

impl ObservationFunction for LinearObservation {
    fn dims(&self) -> (usize, usize) {
        (self.h.ncols(), self.h.nrows())
    }

    fn eval(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.c
    }

    fn jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h.clone())
    }
}

type EvalFn = dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Observation function built from closures.
#[derive(Clone)]
pub struct FnObservation {
    n_x: usize,
    n_z: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacFn>>,
}

impl FnObservation {
    pub fn new(
        n_x: usize,
        n_z: usize,
        eval: impl Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        FnObservation {
            n_x,
            n_z,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl fmt::Debug for FnObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnObservation")
            .field("n_x", &self.n_x)
            .field("n_z", &self.n_z)
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl ObservationFunction for FnObservation {
    fn dims(&self) -> (usize, usize) {
        (self.n_x, self.n_z)
    }

    fn eval(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(k, x)
    }

    fn jacobian(&self, k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(k, x))
    }
}

/// First-order expansion of `h_k` about a nominal point `x0`:
/// `h_k(x) ≈ H x + C` with `C = h_k(x0) - H x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedObservation {
    pub k: usize,
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub x0: DVector<f64>,
    /// `h_k(x0)`.
    pub value: DVector<f64>,
}

/// Central finite-difference Jacobian with step `cbrt(eps)·max(1, |x_i|)`.
pub fn finite_difference_jacobian(
    obs: &dyn ObservationFunction,
    k: usize,
    x0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let (_, n_z) = obs.dims();
    let n_x = x0.len();
    let base_step = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(n_z, n_x);
    for i in 0..n_x {
        let step = base_step * x0[i].abs().max(1.0);
        let mut plus = x0.clone();
        let mut minus = x0.clone();
        plus[i] += step;
        minus[i] -= step;
        // use the realized step to cancel representation error in x0 ± step
        let width = plus[i] - minus[i];
        let fp = obs.eval(k, &plus);
        let fm = obs.eval(k, &minus);
        if !all_finite_vec(&fp) || !all_finite_vec(&fm) {
            return Err(Error::Evaluation { k });
        }
        jac.set_column(i, &((fp - fm) / width));
    }
    Ok(jac)
}

pub fn linearize(obs: &dyn ObservationFunction, k: usize, x0: &DVector<f64>) -> Result<LinearizedObservation> {
    let (n_x, n_z) = obs.dims();
    if x0.len() != n_x {
        return Err(Error::shape("nominal point", (n_x, 1), (x0.len(), 1)));
    }
    if !all_finite_vec(x0) {
        return Err(Error::Evaluation { k });
    }
    let value = obs.eval(k, x0);
    if value.len() != n_z {
        return Err(Error::shape("observation value", (n_z, 1), (value.len(), 1)));
    }
    if !all_finite_vec(&value) {
        return Err(Error::Evaluation { k });
    }
    let h = match obs.jacobian(k, x0) {
        Some(j) => {
            if j.shape() != (n_z, n_x) {
                return Err(Error::shape("observation jacobian", (n_z, n_x), j.shape()));
            }
            if !all_finite(&j) {
                return Err(Error::Evaluation { k });
            }
            j
        }
        None => finite_difference_jacobian(obs, k, x0)?,
    };
    let c = &value - &h * x0;
    Ok(LinearizedObservation {
        k,
        h,
        c,
        x0: x0.clone(),
        value,
    })
}
