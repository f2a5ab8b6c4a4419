//! CSV tables and the run manifest.

use std::io::{self, Write};

use serde::Serialize;

use super::{CellResult, ScenarioConfig};

fn cell(v: Option<&f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `k, rmse_filter, rmse_smoother_h{lag}`, one row per step. Steps without a
/// smoothed estimate leave the last column empty.
pub fn write_figure1_csv<W: Write>(mut out: W, result: &CellResult) -> io::Result<()> {
    writeln!(out, "k,rmse_filter,rmse_smoother_h{}", result.lag)?;
    for (i, f) in result.filter.values.iter().enumerate() {
        writeln!(out, "{},{},{}", i + 1, f, cell(result.smoother.values.get(i)))?;
    }
    Ok(())
}

/// Which probability leads the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepLayout {
    /// `lambda_bar, gamma_bar, ...`
    LambdaFirst,
    /// `gamma_bar, lambda_bar, ...`
    GammaFirst,
}

/// One row per cell with the mean RMSE of each estimator.
pub fn write_sweep_csv<W: Write>(mut out: W, layout: SweepLayout, cells: &[CellResult]) -> io::Result<()> {
    let lag = cells.first().map_or(2, |c| c.lag);
    let lead = match layout {
        SweepLayout::LambdaFirst => "lambda_bar,gamma_bar",
        SweepLayout::GammaFirst => "gamma_bar,lambda_bar",
    };
    writeln!(out, "{lead},mean_rmse_filter,mean_rmse_smoother_h{lag}")?;
    for c in cells {
        let (a, b) = match layout {
            SweepLayout::LambdaFirst => (c.lambda_bar, c.gamma_bar),
            SweepLayout::GammaFirst => (c.gamma_bar, c.lambda_bar),
        };
        writeln!(out, "{a},{b},{},{}", c.filter.mean, c.smoother.mean)?;
    }
    Ok(())
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub figure: Option<u8>,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config: &ScenarioConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            figure: None,
            seed: config.experiment.seed,
            threads: 0,
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
            config: config.clone(),
        }
    }
}

pub fn write_manifest<W: Write>(mut out: W, manifest: &Manifest) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, manifest)?;
    writeln!(out)
}
