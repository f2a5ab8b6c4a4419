//! Monte Carlo harness: per-step RMSE of the filter and the fixed-lag
//! smoother over independent runs, and probability sweeps.

pub mod config;
pub mod output;
pub mod plot;

use nalgebra::DVector;
use rayon::prelude::*;

pub use config::{
    AttackParams, EstimatorMode, ExperimentParams, NoiseParams, ObservationParams, PolicyKind, ScenarioConfig,
    SignalParams, SweepSeeding, TailMode, DEFAULT_SEED,
};
pub use output::{write_figure1_csv, write_manifest, write_sweep_csv, Manifest, SweepLayout};

use crate::error::{Error, Result};
use crate::estimator::{estimate, Estimates};
use crate::model::Model;
use crate::simulator::{derive_seed, simulate_run, RngStream, SimulationOptions, Trajectory};

/// Environment variable capping the worker count (0 or unset: all cores).
pub const THREADS_ENV: &str = "CORRFILT_THREADS";

/// Per-step RMSE values (`values[k-1]` for step `k`) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl RmseSeries {
    pub fn from_values(values: Vec<f64>) -> Self {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        RmseSeries { values, mean }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `RMSE_k = sqrt(mean_s errors[s][k]²)`, summed in run order.
///
/// Runs may be shorter than the longest one; step `k` averages over the runs
/// that reach it.
pub fn rmse(errors: &[Vec<f64>]) -> RmseSeries {
    let len = errors.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for run in errors {
        for (k, e) in run.iter().enumerate() {
            sums[k] += e * e;
            counts[k] += 1;
        }
    }
    RmseSeries::from_values(
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| (s / n as f64).sqrt())
            .collect(),
    )
}

/// Filter and smoother RMSE of one probability pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub gamma_bar: f64,
    pub lambda_bar: f64,
    pub lag: usize,
    pub seed: u64,
    pub filter: RmseSeries,
    pub smoother: RmseSeries,
    /// Steps, summed over runs, whose innovation covariance was regularized.
    pub jitter_events: usize,
}

/// Worker count from [`THREADS_ENV`]; 0 means rayon's default.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("{THREADS_ENV}: expected a non-negative integer, got {s:?}"))),
        _ => Ok(0),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parameter(format!("{THREADS_ENV}: cannot start worker pool: {e}")))
}

struct RunErrors {
    filter: Vec<f64>,
    smoother: Vec<f64>,
    jitter: usize,
}

/// Simulates run `run` of a cell seeded with `seed` and estimates it with the
/// configured policy, form and lag.
pub fn simulate_and_estimate(
    config: &ScenarioConfig,
    model: &Model,
    seed: u64,
    run: usize,
) -> Result<(Trajectory, Estimates)> {
    let e = &config.experiment;
    let options = SimulationOptions {
        init: e.init,
        distribution: e.distribution,
    };
    let traj = simulate_run(
        &config.signal_model(),
        model,
        config.simulated_steps(),
        options,
        &RngStream::new(seed, run as u64),
    )?;
    let est = estimate(model, config.policy(), config.form(), &traj.y, e.lag)?;
    Ok((traj, est))
}

fn one_run(config: &ScenarioConfig, model: &Model, seed: u64, run: usize) -> Result<RunErrors> {
    let steps = config.experiment.steps;
    let (traj, est) = simulate_and_estimate(config, model, seed, run)?;
    let err = |xhat: &DVector<f64>, k: usize| (xhat - &traj.x[k]).norm();
    let filter = est.filtered.iter().take(steps).enumerate().map(|(k, x)| err(x, k)).collect();
    let smoother = est.smoothed.iter().take(steps).enumerate().map(|(k, x)| err(x, k)).collect();
    Ok(RunErrors {
        filter,
        smoother,
        jitter: est.jitter_events,
    })
}

/// Runs one cell with the worker count taken from [`THREADS_ENV`].
pub fn run_cell(config: &ScenarioConfig) -> Result<CellResult> {
    run_cell_with_threads(config, threads_from_env()?)
}

/// Simulates `runs` independent trajectories, filters and smooths each, and
/// reduces the per-run errors in run order. The result does not depend on
/// `threads`.
pub fn run_cell_with_threads(config: &ScenarioConfig, threads: usize) -> Result<CellResult> {
    config.validate()?;
    let model = config.model()?;
    let e = &config.experiment;
    let seed = e.seed;
    let per_run: Vec<Result<RunErrors>> = pool(threads)?.install(|| {
        (0..e.runs)
            .into_par_iter()
            .map(|run| {
                one_run(config, &model, seed, run).map_err(|source| Error::Run {
                    run,
                    seed,
                    source: Box::new(source),
                })
            })
            .collect()
    });
    let mut filter = Vec::with_capacity(e.runs);
    let mut smoother = Vec::with_capacity(e.runs);
    let mut jitter_events = 0;
    for r in per_run {
        let r = r?;
        filter.push(r.filter);
        smoother.push(r.smoother);
        jitter_events += r.jitter;
    }
    Ok(CellResult {
        gamma_bar: e.gamma_bar,
        lambda_bar: e.lambda_bar,
        lag: e.lag,
        seed,
        filter: rmse(&filter),
        smoother: rmse(&smoother),
        jitter_events,
    })
}

/// Probability grid; every `(gamma_bar, lambda_bar)` pair is one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub gamma_bars: Vec<f64>,
    pub lambda_bars: Vec<f64>,
}

/// `0.1, 0.2, ..., 0.9`.
pub fn tenths() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

impl SweepGrid {
    pub fn figure2() -> Self {
        SweepGrid {
            gamma_bars: vec![0.7, 0.9],
            lambda_bars: tenths(),
        }
    }

    pub fn figure3() -> Self {
        SweepGrid {
            gamma_bars: tenths(),
            lambda_bars: vec![0.1, 0.3],
        }
    }

    /// Grid of the `sweep` command for `config`.
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let e = &config.experiment;
        SweepGrid {
            gamma_bars: if e.sweep_gamma_bar.is_empty() {
                vec![e.gamma_bar]
            } else {
                e.sweep_gamma_bar.clone()
            },
            lambda_bars: if e.sweep_lambda_bar.is_empty() {
                tenths()
            } else {
                e.sweep_lambda_bar.clone()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.gamma_bars.len() * self.lambda_bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One cell per grid point, ordered by `gamma_bar` then `lambda_bar`, seeded
/// per [`SweepSeeding`].
pub fn run_sweep(base: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<CellResult>> {
    run_sweep_with_threads(base, grid, threads_from_env()?)
}

pub fn run_sweep_with_threads(base: &ScenarioConfig, grid: &SweepGrid, threads: usize) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::Parameter("sweep grid must not be empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    for (gi, &g) in grid.gamma_bars.iter().enumerate() {
        for (li, &l) in grid.lambda_bars.iter().enumerate() {
            let mut cell = base.with_probabilities(g, l);
            if base.experiment.seeding == SweepSeeding::PerCell {
                cell.experiment.seed = derive_seed(base.experiment.seed, &[gi as u64, li as u64]);
            }
            out.push(run_cell_with_threads(&cell, threads)?);
        }
    }
    Ok(out)
}
