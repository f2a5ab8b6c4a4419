//! Ground-truth generation: signal, Markov noise, missing-signal and attack
//! indicators, and the observed sequence `y_k`.

pub mod ar2;
pub mod rng;

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use ar2::{ar2_factorization, Ar2Covariance, Ar2Normalization, Ar2Params};
pub use rng::{derive_seed, RngStream, StreamLabel};

use crate::error::{Error, Result};
use crate::linalg::sqrt_psd;
use crate::model::{Model, MAX_HORIZON};

/// How the signal recursion is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Initial values drawn from the stationary distribution.
    #[default]
    Stationary,
    /// `x_1 = ε_1`, `x_2 = -b1 x_1 + ε_2` (non-stationary start).
    PaperTransient,
}

/// Distribution of every zero-mean noise draw (only the covariance is matched).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-√3, √3]` per standardized component.
    Uniform,
}

impl NoiseDistribution {
    fn standard(&self, rng: &mut ChaCha20Rng) -> f64 {
        match self {
            NoiseDistribution::Gaussian => rng.sample(StandardNormal),
            NoiseDistribution::Uniform => {
                let s = 3f64.sqrt();
                rng.random_range(-s..s)
            }
        }
    }

    fn vector(&self, rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.standard(rng)))
    }

    /// Zero-mean draw with covariance `root * rootᵀ`.
    fn correlated(&self, rng: &mut ChaCha20Rng, root: &DMatrix<f64>) -> DVector<f64> {
        root * self.vector(rng, root.ncols())
    }
}

/// Signal generator. Its second-order statistics must match the model's
/// covariance factorization for the estimator to be optimal.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalModel {
    Ar2(Ar2Params),
    /// Scalar AR(1) with stationary variance `variance`.
    Ar1 { rho: f64, variance: f64 },
    /// `x_k = G s_k`, `s_k = F s_{k-1} + q_k`, `Cov[s_1] = P1`, `Cov[q_k] = Q`.
    StateSpace {
        transition: DMatrix<f64>,
        output: DMatrix<f64>,
        initial_cov: DMatrix<f64>,
        process_cov: DMatrix<f64>,
    },
}

impl SignalModel {
    pub fn n_x(&self) -> usize {
        match self {
            SignalModel::Ar2(_) | SignalModel::Ar1 { .. } => 1,
            SignalModel::StateSpace { output, .. } => output.nrows(),
        }
    }

    fn generate(
        &self,
        horizon: usize,
        init: InitScheme,
        dist: NoiseDistribution,
        rng: &mut ChaCha20Rng,
    ) -> Result<Vec<DVector<f64>>> {
        let mut xs = Vec::with_capacity(horizon);
        match self {
            SignalModel::Ar2(p) => {
                p.validate()?;
                let sd = p.sigma2.sqrt();
                let (mut prev2, mut prev1) = match init {
                    InitScheme::Stationary => {
                        let c = ar2_factorization(p, Ar2Normalization::Exact)?;
                        let joint = DMatrix::from_row_slice(
                            2,
                            2,
                            &[c.autocovariance(0), c.autocovariance(1), c.autocovariance(1), c.autocovariance(0)],
                        );
                        let pair = dist.correlated(rng, &sqrt_psd(&joint));
                        // (x_0, x_1)
                        xs.push(DVector::from_element(1, pair[1]));
                        (pair[0], pair[1])
                    }
                    InitScheme::PaperTransient => {
                        let x1 = sd * dist.standard(rng);
                        xs.push(DVector::from_element(1, x1));
                        (0.0, x1)
                    }
                };
                while xs.len() < horizon {
                    let x = -p.b1 * prev1 - p.b2 * prev2 + sd * dist.standard(rng);
                    xs.push(DVector::from_element(1, x));
                    prev2 = prev1;
                    prev1 = x;
                }
            }
            SignalModel::Ar1 { rho, variance } => {
                let innov_sd = (variance * (1.0 - rho * rho)).sqrt();
                let mut x = match init {
                    InitScheme::Stationary => variance.sqrt() * dist.standard(rng),
                    InitScheme::PaperTransient => innov_sd * dist.standard(rng),
                };
                xs.push(DVector::from_element(1, x));
                while xs.len() < horizon {
                    x = rho * x + innov_sd * dist.standard(rng);
                    xs.push(DVector::from_element(1, x));
                }
            }
            SignalModel::StateSpace {
                transition,
                output,
                initial_cov,
                process_cov,
            } => {
                let q_root = sqrt_psd(process_cov);
                let mut s = dist.correlated(rng, &sqrt_psd(initial_cov));
                xs.push(output * &s);
                while xs.len() < horizon {
                    s = transition * s + dist.correlated(rng, &q_root);
                    xs.push(output * &s);
                }
            }
        }
        xs.truncate(horizon);
        Ok(xs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimulationOptions {
    pub init: InitScheme,
    pub distribution: NoiseDistribution,
}

/// One simulated run; index `k-1` holds time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub gamma: Vec<bool>,
    pub lambda: Vec<bool>,
    pub w: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// CSV dump: `k`, signal, noise, uncorrupted and received observation, indicators.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let cols = |name: &str, n: usize| -> Vec<String> {
            if n == 1 {
                vec![name.to_string()]
            } else {
                (1..=n).map(|i| format!("{name}{i}")).collect()
            }
        };
        let n_x = self.x.first().map_or(1, |v| v.len());
        let n_z = self.y.first().map_or(1, |v| v.len());
        let mut header = vec!["k".to_string()];
        header.extend(cols("x", n_x));
        header.extend(cols("v", n_z));
        header.extend(cols("z", n_z));
        header.extend(cols("y", n_z));
        header.push("gamma".into());
        header.push("lambda".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![(i + 1).to_string()];
            for v in [&self.x[i], &self.v[i], &self.z[i], &self.y[i]] {
                row.extend(v.iter().map(|x| x.to_string()));
            }
            row.push(u8::from(self.gamma[i]).to_string());
            row.push(u8::from(self.lambda[i]).to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Simulates `horizon` steps of
/// `z_k = γ_k h_k(x_k) + v_k`, `v_k = D_{k-1} v_{k-1} + u_{k-1}`,
/// `y_k = (1 - λ_k) z_k + λ_k w_k`.
pub fn simulate_run(
    signal: &SignalModel,
    model: &Model,
    horizon: usize,
    options: SimulationOptions,
    stream: &RngStream,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::ModelValidation("horizon must be at least 1".into()));
    }
    if horizon > MAX_HORIZON {
        return Err(Error::OutOfHorizon { k: horizon, max: MAX_HORIZON });
    }
    if signal.n_x() != model.dims.n_x {
        return Err(Error::shape("signal generator", (model.dims.n_x, 1), (signal.n_x(), 1)));
    }
    let dist = options.distribution;
    let mut signal_rng = stream.substream(StreamLabel::Signal);
    let mut noise_rng = stream.substream(StreamLabel::MeasurementNoise);
    let mut gamma_rng = stream.substream(StreamLabel::Gamma);
    let mut lambda_rng = stream.substream(StreamLabel::Lambda);
    let mut attack_rng = stream.substream(StreamLabel::AttackNoise);

    let x = signal.generate(horizon, options.init, dist, &mut signal_rng)?;
    let n_z = model.dims.n_z;
    let mut traj = Trajectory {
        x,
        v: Vec::with_capacity(horizon),
        z: Vec::with_capacity(horizon),
        y: Vec::with_capacity(horizon),
        gamma: Vec::with_capacity(horizon),
        lambda: Vec::with_capacity(horizon),
        w: Vec::with_capacity(horizon),
    };
    let mut v = dist.correlated(&mut noise_rng, &sqrt_psd(&model.noise.initial_cov));
    for k in 1..=horizon {
        let d = model.noise.transition.at(k - 1)?;
        let u_root = sqrt_psd(model.noise.driving_cov.at(k - 1)?);
        v = d * v + dist.correlated(&mut noise_rng, &u_root);

        let gamma = gamma_rng.random::<f64>() < model.probabilities.gamma_bar(k)?;
        let lambda = lambda_rng.random::<f64>() < model.probabilities.lambda_bar(k)?;
        let w = dist.correlated(&mut attack_rng, &sqrt_psd(model.attack.sigma_w.at(k)?));

        let hx = model.observation.eval(k, &traj.x[k - 1]);
        if hx.len() != n_z {
            return Err(Error::shape("observation value", (n_z, 1), (hx.len(), 1)));
        }
        let z = if gamma { hx + &v } else { v.clone() };
        let y = if lambda { w.clone() } else { z.clone() };
        traj.v.push(v.clone());
        traj.z.push(z);
        traj.y.push(y);
        traj.gamma.push(gamma);
        traj.lambda.push(lambda);
        traj.w.push(w);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
