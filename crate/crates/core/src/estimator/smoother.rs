//! Fixed-point smoothing `x̂_{k/L}` for `L > k`, and a fixed-lag driver built on it.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{FilterOutput, FilterState, InnovationRecord};
use crate::error::{Error, Result};
use crate::model::CovarianceFactorization;

/// Smoothed estimate of the signal at a fixed time `k_fixed` given observations up to `l`.
///
/// `m_x`, `m_v` hold `E[x_k (e^a_L)ᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSmoother {
    pub k_fixed: usize,
    pub l: usize,
    pub x_smooth: DVector<f64>,
    pub m_x: DMatrix<f64>,
    pub m_v: DMatrix<f64>,
    pub a_k: DMatrix<f64>,
    pub b_k: DMatrix<f64>,
}

impl FixedPointSmoother {
    /// Starts at `L = k` from the filter: `M^a_{k,k} = A_k T^{xa}_k`.
    pub fn init(
        k: usize,
        state: &FilterState,
        x_filt: &DVector<f64>,
        cov: &dyn CovarianceFactorization,
    ) -> Result<Self> {
        if state.k != k {
            return Err(Error::Sequencing {
                expected: k,
                got: state.k,
            });
        }
        let a_k = cov.a(k)?;
        let b_k = cov.b(k)?;
        Ok(FixedPointSmoother {
            k_fixed: k,
            l: k,
            x_smooth: x_filt.clone(),
            m_x: &a_k * &state.t_xx,
            m_v: &a_k * &state.t_xv,
            a_k,
            b_k,
        })
    }

    /// `S^x_{k,L} = (1-λ̄_L)[(B_k - M^x_{k,L-1}) (Δ^x_L)ᵀ - M^v_{k,L-1} (Δ^v_L)ᵀ]`.
    pub fn gain_numerator(&self, rec: &InnovationRecord) -> DMatrix<f64> {
        ((&self.b_k - &self.m_x) * rec.delta_x.transpose() - &self.m_v * rec.delta_v.transpose())
            * (1.0 - rec.lambda_bar)
    }

    /// Incorporates the innovation of time `L = self.l + 1`.
    pub fn update(&mut self, rec: &InnovationRecord) -> Result<()> {
        if rec.k != self.l + 1 {
            return Err(Error::Sequencing {
                expected: self.l + 1,
                got: rec.k,
            });
        }
        let s = self.gain_numerator(rec);
        self.x_smooth += &s * &rec.solved_eta;
        self.m_x += &s * &rec.solved_psi_x_t;
        self.m_v += &s * &rec.solved_psi_v_t;
        self.l = rec.k;
        Ok(())
    }
}

/// Emits `x̂_{k/k+lag}` for each `k` once the observation `k + lag` has been processed.
///
/// Keeps at most `lag + 1` live fixed-point smoothers.
#[derive(Debug, Clone)]
pub struct FixedLagSmoother {
    lag: usize,
    window: VecDeque<FixedPointSmoother>,
}

impl FixedLagSmoother {
    pub fn new(lag: usize) -> Self {
        FixedLagSmoother {
            lag,
            window: VecDeque::with_capacity(lag + 1),
        }
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn live(&self) -> usize {
        self.window.len()
    }

    /// Feeds one filter step; returns the estimate that became final, if any.
    pub fn push(
        &mut self,
        state: &FilterState,
        record: &InnovationRecord,
        output: &FilterOutput,
        cov: &dyn CovarianceFactorization,
    ) -> Result<Option<(usize, DVector<f64>)>> {
        for sm in self.window.iter_mut() {
            sm.update(record)?;
        }
        self.window
            .push_back(FixedPointSmoother::init(output.k, state, &output.x_filt, cov)?);
        match self.window.front() {
            Some(front) if front.l == front.k_fixed + self.lag => {
                let done = self.window.pop_front().unwrap();
                Ok(Some((done.k_fixed, done.x_smooth)))
            }
            _ => Ok(None),
        }
    }
}
