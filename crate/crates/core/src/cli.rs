//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a computation fails (numerical failure,
//! oracle mismatch, output error), 2 on invalid arguments or configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::experiment::plot::{gnuplot_script, svg_line_chart, Series};
use crate::experiment::{
    run_cell_with_threads, run_sweep_with_threads, simulate_and_estimate, threads_from_env, write_figure1_csv,
    write_manifest, write_sweep_csv, CellResult, EstimatorMode, Manifest, ScenarioConfig, SweepGrid, SweepLayout,
};
use crate::oracle::{equivalence_suite, kalman_agreement};
use crate::simulator::{simulate_run, InitScheme, RngStream, SimulationOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const ORACLE_TOLERANCE: f64 = 1e-8;
const KALMAN_TOLERANCE: f64 = 1e-6;
const ORACLE_INSTANCES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "corrfilt", version, about = "Covariance-based filtering and smoothing under missing signals and deception attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML file with [experiment], [signal], [observation], [noise] and [attacks] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Monte Carlo runs.
    #[arg(long, global = true, value_name = "N")]
    pub runs: Option<usize>,
    /// Time steps per run.
    #[arg(long, global = true, value_name = "N")]
    pub steps: Option<usize>,
    /// Smoothing lag.
    #[arg(long, global = true, value_name = "N")]
    pub lag: Option<usize>,
    /// Probability that the signal is present.
    #[arg(long = "gamma-bar", global = true, value_name = "F", allow_negative_numbers = true)]
    pub gamma_bar: Option<f64>,
    /// Probability of a deception attack.
    #[arg(long = "lambda-bar", global = true, value_name = "F", allow_negative_numbers = true)]
    pub lambda_bar: Option<f64>,
    /// Innovation covariance form.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Signal initialization.
    #[arg(long, global = true, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long = "out-dir", global = true, value_name = "PATH", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and write them to trajectory.csv.
    Simulate,
    /// Simulate and filter; writes filter.csv.
    Filter,
    /// Simulate, filter and smooth with the configured lag; writes smooth.csv.
    Smooth,
    /// Regenerate one figure's table (figure<N>.csv), plot and manifest.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        figure: u8,
        #[arg(long = "emit-plot", value_enum, default_value_t = PlotArg::Svg)]
        emit_plot: PlotArg,
    },
    /// Mean RMSE over the configured probability grid; writes sweep.csv.
    Sweep {
        #[arg(long = "emit-plot", value_enum, default_value_t = PlotArg::Svg)]
        emit_plot: PlotArg,
    },
    /// Check the recursion against the batch and Kalman references.
    OracleCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Theorem,
    Ekf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Stationary,
    PaperTransient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotArg {
    None,
    Svg,
    Script,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter(_) | Error::ModelValidation(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::failure(format!("cannot write {}: {e}", path.display()))
}

/// Reads the config file (if any), applies flag overrides and validates.
pub fn resolve_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<ScenarioConfig>(&text)
                .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    let e = &mut config.experiment;
    if let Some(v) = cli.seed {
        e.seed = v;
    }
    if let Some(v) = cli.runs {
        e.runs = v;
    }
    if let Some(v) = cli.steps {
        e.steps = v;
    }
    if let Some(v) = cli.lag {
        e.lag = v;
    }
    if let Some(v) = cli.gamma_bar {
        e.gamma_bar = v;
    }
    if let Some(v) = cli.lambda_bar {
        e.lambda_bar = v;
    }
    if let Some(m) = cli.mode {
        e.mode = Some(match m {
            ModeArg::Theorem => EstimatorMode::Theorem,
            ModeArg::Ekf => EstimatorMode::Ekf,
        });
    }
    if let Some(i) = cli.init {
        e.init = match i {
            InitArg::Stationary => InitScheme::Stationary,
            InitArg::PaperTransient => InitScheme::PaperTransient,
        };
    }
    config
        .validate()
        .map_err(|e| CliError::config(format!("invalid configuration: {e}")))?;
    Ok(config)
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Outputs { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    fn manifest(&mut self, mut manifest: Manifest, start: Instant) -> Result<(), CliError> {
        manifest.outputs = self.written.clone();
        manifest.wall_time_seconds = start.elapsed().as_secs_f64();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &manifest).map_err(|e| io_error(&self.dir.join("manifest.json"), e))?;
        self.write("manifest.json", &buf)?;
        Ok(())
    }
}

fn simulate(config: &ScenarioConfig, dir: &Path) -> Result<String, CliError> {
    let model = config.model()?;
    let e = &config.experiment;
    let options = SimulationOptions {
        init: e.init,
        distribution: e.distribution,
    };
    let mut csv = String::new();
    for run in 0..e.runs {
        let traj = simulate_run(&config.signal_model(), &model, e.steps, options, &RngStream::new(e.seed, run as u64))
            .map_err(|source| Error::Run {
                run,
                seed: e.seed,
                source: Box::new(source),
            })?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).expect("writing to memory");
        let text = String::from_utf8(buf).expect("ascii csv");
        for (i, line) in text.lines().enumerate() {
            match (i, run) {
                (0, 0) => {
                    let _ = writeln!(csv, "run,{line}");
                }
                (0, _) => {}
                _ => {
                    let _ = writeln!(csv, "{run},{line}");
                }
            }
        }
    }
    let mut out = Outputs::new(dir)?;
    let path = out.write("trajectory.csv", csv.as_bytes())?;
    Ok(format!(
        "simulate: {} run(s) x {} steps -> {}",
        e.runs,
        e.steps,
        path.display()
    ))
}

/// `filter` and `smooth`: per-step estimates of every run.
fn estimates(config: &ScenarioConfig, dir: &Path, smooth: bool) -> Result<String, CliError> {
    let model = config.model()?;
    let e = &config.experiment;
    let mut csv = String::from(if smooth {
        "run,k,x,y,x_filt,x_smooth\n"
    } else {
        "run,k,x,y,x_filt\n"
    });
    let (mut sse_f, mut sse_s, mut n_f, mut n_s) = (0.0, 0.0, 0usize, 0usize);
    for run in 0..e.runs {
        let (traj, est) = simulate_and_estimate(config, &model, e.seed, run).map_err(|source| Error::Run {
            run,
            seed: e.seed,
            source: Box::new(source),
        })?;
        for k in 0..e.steps {
            let x = traj.x[k][0];
            let xf = est.filtered[k][0];
            sse_f += (x - xf).powi(2);
            n_f += 1;
            let _ = write!(csv, "{run},{},{x},{},{xf}", k + 1, traj.y[k][0]);
            if smooth {
                match est.smoothed.get(k) {
                    Some(xs) => {
                        sse_s += (x - xs[0]).powi(2);
                        n_s += 1;
                        let _ = write!(csv, ",{}", xs[0]);
                    }
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
    }
    let mut out = Outputs::new(dir)?;
    let name = if smooth { "smooth.csv" } else { "filter.csv" };
    let path = out.write(name, csv.as_bytes())?;
    let rmse_f = (sse_f / n_f as f64).sqrt();
    Ok(if smooth {
        format!(
            "smooth: {} run(s) x {} steps, RMSE filter {:.6}, smoother (h={}) {:.6} -> {}",
            e.runs,
            e.steps,
            rmse_f,
            e.lag,
            (sse_s / n_s.max(1) as f64).sqrt(),
            path.display()
        )
    } else {
        format!(
            "filter: {} run(s) x {} steps, RMSE {:.6} -> {}",
            e.runs,
            e.steps,
            rmse_f,
            path.display()
        )
    })
}

fn emit_plot(out: &mut Outputs, stem: &str, plot: PlotArg, title: &str, x_label: &str, series: &[Series], clauses: Vec<String>) -> Result<(), CliError> {
    match plot {
        PlotArg::None => Ok(()),
        PlotArg::Svg => out
            .write(&format!("{stem}.svg"), svg_line_chart(title, x_label, "RMSE", series).as_bytes())
            .map(|_| ()),
        PlotArg::Script => out
            .write(&format!("{stem}.gp"), gnuplot_script(title, x_label, "RMSE", &clauses).as_bytes())
            .map(|_| ()),
    }
}

fn figure1_plot(out: &mut Outputs, res: &CellResult, plot: PlotArg) -> Result<(), CliError> {
    let pts = |v: &[f64]| v.iter().enumerate().map(|(i, y)| ((i + 1) as f64, *y)).collect();
    let series = [
        Series {
            name: "filter".into(),
            points: pts(&res.filter.values),
        },
        Series {
            name: format!("smoother (h={})", res.lag),
            points: pts(&res.smoother.values),
        },
    ];
    let clauses = vec![
        "'figure1.csv' every ::1 using 1:2 with linespoints title 'filter'".to_string(),
        format!("'figure1.csv' every ::1 using 1:3 with linespoints title 'smoother (h={})'", res.lag),
    ];
    let title = format!("RMSE, gamma_bar = {}, lambda_bar = {}", res.gamma_bar, res.lambda_bar);
    emit_plot(out, "figure1", plot, &title, "k", &series, clauses)
}

/// One curve per estimator and per value of the fixed probability. The x
/// variable sits in the first CSV column unless `layout` puts it second.
fn sweep_plot(
    out: &mut Outputs,
    stem: &str,
    cells: &[CellResult],
    x_is_lambda: bool,
    layout: SweepLayout,
    plot: PlotArg,
) -> Result<(), CliError> {
    let x_first = (layout == SweepLayout::LambdaFirst) == x_is_lambda;
    let (xc, gc) = if x_first { (1, 2) } else { (2, 1) };
    let (xname, gname) = if x_is_lambda {
        ("lambda_bar", "gamma_bar")
    } else {
        ("gamma_bar", "lambda_bar")
    };
    let key = |c: &CellResult| if x_is_lambda { c.gamma_bar } else { c.lambda_bar };
    let xval = |c: &CellResult| if x_is_lambda { c.lambda_bar } else { c.gamma_bar };
    let mut groups: Vec<f64> = Vec::new();
    for c in cells {
        if !groups.contains(&key(c)) {
            groups.push(key(c));
        }
    }
    let lag = cells.first().map_or(2, |c| c.lag);
    let mut series = Vec::new();
    let mut clauses = Vec::new();
    let csv = format!("{stem}.csv");
    for g in &groups {
        let members: Vec<&CellResult> = cells.iter().filter(|c| key(c) == *g).collect();
        series.push(Series {
            name: format!("filter, {gname} = {g}"),
            points: members.iter().map(|c| (xval(c), c.filter.mean)).collect(),
        });
        series.push(Series {
            name: format!("smoother (h={lag}), {gname} = {g}"),
            points: members.iter().map(|c| (xval(c), c.smoother.mean)).collect(),
        });
        clauses.push(format!(
            "'{csv}' every ::1 using {xc}:(${gc}=={g} ? $3 : 1/0) with linespoints title 'filter, {gname} = {g}'"
        ));
        clauses.push(format!(
            "'{csv}' every ::1 using {xc}:(${gc}=={g} ? $4 : 1/0) with linespoints title 'smoother, {gname} = {g}'"
        ));
    }
    emit_plot(out, stem, plot, &format!("Mean RMSE versus {xname}"), xname, &series, clauses)
}

fn reproduce(config: &ScenarioConfig, figure: u8, plot: PlotArg, dir: &Path) -> Result<String, CliError> {
    let start = Instant::now();
    let threads = threads_from_env()?;
    let mut manifest = Manifest::new(format!("reproduce --figure {figure}"), config);
    manifest.figure = Some(figure);
    manifest.threads = threads;
    let e = &config.experiment;
    let summary;
    let mut out;
    match figure {
        1 => {
            let res = run_cell_with_threads(config, threads)?;
            let mut csv = Vec::new();
            write_figure1_csv(&mut csv, &res).expect("writing to memory");
            out = Outputs::new(dir)?;
            let path = out.write("figure1.csv", &csv)?;
            figure1_plot(&mut out, &res, plot)?;
            summary = format!(
                "figure 1: {} runs x {} steps, mean RMSE filter {:.6}, smoother (h={}) {:.6} -> {}",
                e.runs,
                e.steps,
                res.filter.mean,
                e.lag,
                res.smoother.mean,
                path.display()
            );
        }
        2 | 3 => {
            let (grid, layout) = if figure == 2 {
                (SweepGrid::figure2(), SweepLayout::LambdaFirst)
            } else {
                (SweepGrid::figure3(), SweepLayout::GammaFirst)
            };
            let cells = run_sweep_with_threads(config, &grid, threads)?;
            let mut csv = Vec::new();
            write_sweep_csv(&mut csv, layout, &cells).expect("writing to memory");
            out = Outputs::new(dir)?;
            let stem = format!("figure{figure}");
            let path = out.write(&format!("{stem}.csv"), &csv)?;
            sweep_plot(&mut out, &stem, &cells, figure == 2, layout, plot)?;
            summary = format!(
                "figure {figure}: {} cells x {} runs x {} steps -> {}",
                cells.len(),
                e.runs,
                e.steps,
                path.display()
            );
        }
        _ => return Err(CliError::config(format!("--figure: expected 1, 2 or 3, got {figure}"))),
    }
    out.manifest(manifest, start)?;
    Ok(summary)
}

fn sweep(config: &ScenarioConfig, plot: PlotArg, dir: &Path) -> Result<String, CliError> {
    let start = Instant::now();
    let threads = threads_from_env()?;
    let grid = SweepGrid::from_config(config);
    let cells = run_sweep_with_threads(config, &grid, threads)?;
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, SweepLayout::GammaFirst, &cells).expect("writing to memory");
    let mut out = Outputs::new(dir)?;
    let path = out.write("sweep.csv", &csv)?;
    // plot against whichever probability actually varies
    let x_is_lambda = grid.lambda_bars.len() > 1 || grid.gamma_bars.len() == 1;
    sweep_plot(&mut out, "sweep", &cells, x_is_lambda, SweepLayout::GammaFirst, plot)?;
    let mut manifest = Manifest::new("sweep", config);
    manifest.threads = threads;
    out.manifest(manifest, start)?;
    Ok(format!(
        "sweep: {} cells x {} runs x {} steps -> {}",
        cells.len(),
        config.experiment.runs,
        config.experiment.steps,
        path.display()
    ))
}

fn oracle_check(config: &ScenarioConfig) -> Result<String, CliError> {
    let seed = config.experiment.seed;
    let report = equivalence_suite(ORACLE_INSTANCES, seed)?;
    let kalman = kalman_agreement(30, seed)?;
    let line = format!(
        "oracle-check: {} instances, {} comparisons, max deviation {:.3e} (filter {:.3e}, smoother {:.3e}); Kalman three-way max {:.3e} over {} steps",
        report.instances,
        report.comparisons,
        report.max_deviation(),
        report.max_filter_deviation,
        report.max_smoother_deviation,
        kalman.max(),
        kalman.steps
    );
    if report.max_deviation() > ORACLE_TOLERANCE || kalman.max() > KALMAN_TOLERANCE {
        return Err(CliError::failure(format!(
            "{line}\noracle mismatch beyond tolerance (worst instance: {})",
            report.worst.unwrap_or_default()
        )));
    }
    Ok(line)
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let config = resolve_config(cli)?;
    let dir = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate => simulate(&config, dir),
        Command::Filter => estimates(&config, dir, false),
        Command::Smooth => estimates(&config, dir, true),
        Command::Reproduce { figure, emit_plot } => reproduce(&config, *figure, *emit_plot, dir),
        Command::Sweep { emit_plot } => sweep(&config, *emit_plot, dir),
        Command::OracleCheck => oracle_check(&config),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. The summary goes to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{summary}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}
