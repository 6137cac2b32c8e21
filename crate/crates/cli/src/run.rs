//! Executes an experiment config and writes its result files.
//!
//! Every run writes `metrics.csv` (long format, one row per sweep point,
//! metric and seed, plus `mean`/`std` rows), one `plot_*.csv` per figure
//! panel with columns `series,x,y,y_std`, task-specific exports and a
//! `manifest.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use qrc_core::analysis::{coherence_sweep, export_distribution, feedback_transform_verify, FEEDBACK_TRANSFORM_MAX_QUBITS, FEEDBACK_TRANSFORM_TOLERANCE};
use qrc_core::learn::{evaluate_narma, evaluate_stm, MetricKind, MetricReport, SeedLabel};
use qrc_core::seeds::SeedStreams;
use qrc_core::stats::Summary;
use qrc_core::tasks::WASHOUT;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Check, ExperimentConfig, SweepPoint, TaskKind};
use crate::error::CliError;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub task: &'static str,
    pub metric: &'static str,
    /// Delay for capacities, order for NMSE, empty otherwise.
    pub n_or_tau: Option<usize>,
    pub a_in: f64,
    pub a_fb: f64,
    pub g: f64,
    pub n_meas: String,
    pub gamma: f64,
    pub feedback_observable: String,
    /// Seed index within the experiment, or `mean` / `std`.
    pub seed: String,
    pub value: f64,
    #[serde(skip)]
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub x: String,
    pub y: f64,
    pub y_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub description: String,
    pub metric: String,
    pub index: Option<usize>,
    pub higher: String,
    pub higher_mean: f64,
    pub lower: String,
    pub lower_mean: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub metric_rows: usize,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    description: &'a str,
    task: &'static str,
    code_version: &'static str,
    config: &'a ExperimentConfig,
    seeds: &'a [SeedStreams],
    points: &'a [SweepPoint],
    threads: usize,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    files: Vec<String>,
    checks: &'a [CheckOutcome],
}

/// Everything a task produces before it is written out.
#[derive(Default)]
struct Output {
    metrics: Vec<MetricRow>,
    plots: Vec<(String, Vec<PlotRow>)>,
    /// Extra CSV files as `(file name, header, rows)`.
    tables: Vec<(String, Vec<String>, Vec<Vec<String>>)>,
    /// Files the task wrote itself.
    written: Vec<PathBuf>,
}

fn metric_name(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Capacity => "capacity",
        MetricKind::TotalCapacity => "total_capacity",
        MetricKind::Nmse => "nmse",
    }
}

fn seed_label(label: SeedLabel) -> String {
    label.to_string()
}

fn row(cfg: &ExperimentConfig, p: &SweepPoint, point: usize, metric: &'static str, index: Option<usize>, seed: String, value: f64) -> MetricRow {
    MetricRow {
        task: cfg.task.name(),
        metric,
        n_or_tau: index,
        a_in: cfg.a_in,
        a_fb: p.a_fb,
        g: p.g,
        n_meas: p.n_meas.to_string(),
        gamma: p.gamma,
        feedback_observable: p.feedback_observable.to_string(),
        seed,
        value,
        point,
    }
}

/// Splits a point into plot series and x value: the first sweep axis is
/// the abscissa, a second axis becomes the series.
fn plot_coords(cfg: &ExperimentConfig, p: &SweepPoint, default_series: &str) -> (String, String) {
    let axes = cfg.axes();
    match axes.len() {
        0 => (default_series.to_string(), p.label.clone()),
        1 => (default_series.to_string(), p.coords[0].clone()),
        _ => (format!("{}={}", axes[1], p.coords[1]), p.coords[0].clone()),
    }
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn reports_to_rows(cfg: &ExperimentConfig, p: &SweepPoint, point: usize, reports: Vec<MetricReport>) -> Vec<MetricRow> {
    reports
        .into_iter()
        .map(|r| row(cfg, p, point, metric_name(r.kind), r.index, seed_label(r.seed), r.value))
        .collect()
}

fn summary_rows(cfg: &ExperimentConfig, p: &SweepPoint, point: usize, metric: &'static str, per_seed: &[(u64, f64)]) -> Vec<MetricRow> {
    let mut out: Vec<MetricRow> = per_seed
        .iter()
        .map(|&(s, v)| row(cfg, p, point, metric, None, s.to_string(), v))
        .collect();
    let s = Summary::of(&per_seed.iter().map(|v| v.1).collect::<Vec<_>>());
    out.push(row(cfg, p, point, metric, None, "mean".into(), s.mean));
    out.push(row(cfg, p, point, metric, None, "std".into(), s.std));
    out
}

fn run_stm(cfg: &ExperimentConfig, points: &[SweepPoint], seeds: &[SeedStreams]) -> Result<Output, CliError> {
    let evals = points
        .par_iter()
        .map(|p| Ok(evaluate_stm(&cfg.reservoir_config(p)?, seeds, cfg.length())?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    let mut totals = Vec::new();
    let mut by_delay = Vec::new();
    for (i, (p, e)) in points.iter().zip(&evals).enumerate() {
        out.metrics.extend(reports_to_rows(cfg, p, i, e.reports()));
        let s = e.total_summary();
        let (series, x) = plot_coords(cfg, p, "total_capacity");
        totals.push(PlotRow { series, x, y: s.mean, y_std: s.std });
        for tau in 0..=cfg.tau_max {
            let s = e.capacity_summary(tau);
            by_delay.push(PlotRow { series: p.label.clone(), x: tau.to_string(), y: s.mean, y_std: s.std });
        }
    }
    out.plots.push(("plot_total_capacity.csv".into(), totals));
    out.plots.push(("plot_capacity_by_delay.csv".into(), by_delay));
    Ok(out)
}

fn run_narma(cfg: &ExperimentConfig, points: &[SweepPoint], seeds: &[SeedStreams]) -> Result<Output, CliError> {
    let orders = cfg.narma_orders();
    let evals = points
        .par_iter()
        .map(|p| Ok(evaluate_narma(&cfg.reservoir_config(p)?, seeds, cfg.length(), &orders)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    for (i, (p, e)) in points.iter().zip(&evals).enumerate() {
        out.metrics.extend(reports_to_rows(cfg, p, i, e.reports()));
    }
    for &order in &orders {
        let rows = points
            .iter()
            .zip(&evals)
            .map(|(p, e)| {
                let s = e.summary(order).expect("evaluated order");
                let (series, x) = plot_coords(cfg, p, &format!("narma{order}"));
                PlotRow { series, x, y: s.mean, y_std: s.std }
            })
            .collect();
        out.plots.push((format!("plot_nmse_narma{order}.csv"), rows));
    }
    Ok(out)
}

fn run_coherence(cfg: &ExperimentConfig, points: &[SweepPoint], seeds: &[SeedStreams]) -> Result<Output, CliError> {
    let traces = points
        .par_iter()
        .map(|p| Ok(coherence_sweep(&cfg.reservoir_config(p)?, &[p.a_fb], seeds, cfg.length(), WASHOUT)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    let mut plot = Vec::new();
    let mut table = Vec::new();
    for (i, (p, t)) in points.iter().zip(&traces).enumerate() {
        let per_seed: Vec<(u64, f64)> = t.iter().map(|t| (t.seed, t.time_average)).collect();
        out.metrics.extend(summary_rows(cfg, p, i, "coherence", &per_seed));
        let s = Summary::of(&per_seed.iter().map(|v| v.1).collect::<Vec<_>>());
        let (series, x) = plot_coords(cfg, p, "coherence");
        plot.push(PlotRow { series, x, y: s.mean, y_std: s.std });
        table.extend(
            t.iter()
                .map(|t| vec![t.a_fb.to_string(), t.g.to_string(), t.seed.to_string(), t.time_average.to_string()]),
        );
    }
    out.plots.push(("plot_coherence.csv".into(), plot));
    let header = ["a_fb", "g", "seed", "qc_mean"].map(String::from).to_vec();
    out.tables.push(("coherence.csv".into(), header, table));
    Ok(out)
}

/// One realization per point (the first seed), as a single trajectory is
/// what the scatter shows.
fn run_distribution(cfg: &ExperimentConfig, points: &[SweepPoint], seeds: &[SeedStreams], dir: &Path) -> Result<Output, CliError> {
    let seed = seeds[0];
    let exports = points
        .par_iter()
        .map(|p| Ok(export_distribution(&cfg.reservoir_config(p)?, &seed, cfg.length(), WASHOUT)?))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    for (i, (p, e)) in points.iter().zip(&exports).enumerate() {
        let path = dir.join(format!("distribution_{}.csv", slug(&p.label)));
        let file = File::create(&path).map_err(|e| CliError::output(&path, e))?;
        e.write_csv(BufWriter::new(file))?;
        out.written.push(path);
        if let Some(proj) = &e.projection {
            let s = seed.index.to_string();
            out.metrics.push(row(cfg, p, i, "participation_ratio", None, s.clone(), proj.participation_ratio));
            out.metrics.push(row(cfg, p, i, "captured_variance", None, s, proj.captured_variance));
        }
    }
    Ok(out)
}

fn run_feedback_verify(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut out = Output::default();
    let mut table = Vec::new();
    for n in 1..=FEEDBACK_TRANSFORM_MAX_QUBITS {
        let r = feedback_transform_verify(n, cfg.trials, cfg.master_seed.wrapping_add(n as u64))?;
        table.push(vec![
            r.n_qubits.to_string(),
            r.trials.to_string(),
            r.strings_checked.to_string(),
            r.max_deviation.to_string(),
            FEEDBACK_TRANSFORM_TOLERANCE.to_string(),
        ]);
    }
    let header = ["n_qubits", "trials", "strings_checked", "max_deviation", "tolerance"].map(String::from).to_vec();
    out.tables.push(("feedback_verify.csv".into(), header, table));
    Ok(out)
}

fn mean_of(rows: &[MetricRow], point: usize, metric: &str, index: Option<usize>) -> Option<f64> {
    rows.iter()
        .find(|r| r.point == point && r.metric == metric && r.n_or_tau == index && r.seed == "mean")
        .map(|r| r.value)
}

fn evaluate_check(c: &Check, points: &[SweepPoint], rows: &[MetricRow]) -> CheckOutcome {
    let find = |sel: &crate::config::Selector| points.iter().position(|p| sel.matches(p));
    let (hi, lo) = (find(&c.higher), find(&c.lower));
    let mean = |i: Option<usize>| i.and_then(|i| mean_of(rows, i, &c.metric, c.index)).unwrap_or(f64::NAN);
    let (higher_mean, lower_mean) = (mean(hi), mean(lo));
    let label = |i: Option<usize>| i.map_or_else(|| "?".to_string(), |i| points[i].label.clone());
    CheckOutcome {
        description: c.description.clone(),
        metric: c.metric.clone(),
        index: c.index,
        higher: label(hi),
        higher_mean,
        lower: label(lo),
        lower_mean,
        passed: higher_mean > lower_mean,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    w.write_record(header).map_err(|e| CliError::output(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// Validates `cfg`, runs it and writes all outputs under `dir`. Nothing is
/// written when validation fails.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let seeds = SeedStreams::list(cfg.master_seed, cfg.seeds);
    let points = cfg.sweep_points();

    let out = match cfg.task {
        TaskKind::Stm => run_stm(cfg, &points, &seeds)?,
        TaskKind::Narma => run_narma(cfg, &points, &seeds)?,
        TaskKind::Coherence => run_coherence(cfg, &points, &seeds)?,
        TaskKind::Distribution => run_distribution(cfg, &points, &seeds, dir)?,
        TaskKind::FeedbackVerify => run_feedback_verify(cfg)?,
    };

    let mut files = out.written;
    if !out.metrics.is_empty() {
        let path = dir.join("metrics.csv");
        write_csv(&path, &out.metrics)?;
        files.push(path);
    }
    for (name, rows) in &out.plots {
        let path = dir.join(name);
        write_csv(&path, rows)?;
        files.push(path);
    }
    for (name, header, rows) in &out.tables {
        let path = dir.join(name);
        write_table(&path, header, rows)?;
        files.push(path);
    }
    let checks: Vec<CheckOutcome> = cfg.checks.iter().map(|c| evaluate_check(c, &points, &out.metrics)).collect();

    let manifest_path = dir.join("manifest.json");
    let manifest = Manifest {
        name: &cfg.name,
        description: &cfg.description,
        task: cfg.task.name(),
        code_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds: &seeds,
        points: &points,
        threads: rayon::current_num_threads(),
        started_unix_seconds: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        files: files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        checks: &checks,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::output(&manifest_path, e))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| CliError::output(&manifest_path, e))?;
    files.push(manifest_path);

    Ok(RunSummary {
        out_dir: dir.to_path_buf(),
        files,
        metric_rows: out.metrics.len(),
        checks,
    })
}
