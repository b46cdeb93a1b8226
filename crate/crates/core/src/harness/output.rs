use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{RunRecord, RunRow};
use crate::error::{ExitlabError, Result};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PLOT_CSV: &str = "plot.csv";

pub const CSV_COLUMNS: [&str; 17] = [
    "epsilon",
    "x",
    "alpha",
    "beta",
    "p_hat",
    "stderr",
    "n_paths",
    "n_survived",
    "rescaled",
    "rescaled_stderr",
    "psi",
    "phi_minus",
    "phi_plus",
    "method",
    "dt",
    "seed",
    "wall_seconds",
];

pub const PLOT_COLUMNS: [&str; 9] =
    ["kind", "alpha", "x", "log_epsilon", "log_p_hat", "fit_log_p_hat", "slope", "intercept", "slope_stderr"];

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub exitlab_version: String,
    pub os: String,
    pub arch: String,
    pub worker_threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            exitlab_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            worker_threads: rayon::current_num_threads(),
        }
    }
}

/// The JSON summary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub rows: Vec<RunRow>,
    pub slope_fits: Vec<super::run::SlopeFitRecord>,
    pub warnings: Vec<String>,
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub environment: Environment,
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        OutputPaths { results: dir.join(RESULTS_CSV), summary: dir.join(SUMMARY_JSON), plot: dir.join(PLOT_CSV) }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> ExitlabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ExitlabError::io(path, io),
        other => ExitlabError::Serialization(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_results_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in &record.rows {
        w.write_record([
            fmt_f64(r.epsilon),
            fmt_point(&r.x),
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            fmt_opt(r.p_hat),
            fmt_opt(r.stderr),
            r.n_paths.map(|n| n.to_string()).unwrap_or_default(),
            r.n_survived.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(r.rescaled),
            fmt_opt(r.rescaled_stderr),
            fmt_f64(r.psi),
            fmt_f64(r.phi_minus),
            fmt_f64(r.phi_plus),
            r.method.clone(),
            fmt_f64(r.dt),
            r.seed.to_string(),
            fmt_f64(r.wall_seconds),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ExitlabError::io(path, e))
}

pub fn write_plot_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(PLOT_COLUMNS).map_err(|e| csv_err(path, e))?;
    let fit_for = |alpha: f64, x: &[f64]| {
        record.slope_fits.iter().find(|f| f.alpha == alpha && f.x == x).and_then(|f| f.fit.as_ref())
    };
    for r in &record.rows {
        let Some(p) = r.p_hat else { continue };
        let log_eps = r.epsilon.ln();
        let fitted = fit_for(r.alpha, &r.x).map(|f| f.predict_log(log_eps));
        let log_p = if p > 0.0 { fmt_f64(p.ln()) } else { String::new() };
        w.write_record([
            "data".to_string(),
            fmt_f64(r.alpha),
            fmt_point(&r.x),
            fmt_f64(log_eps),
            log_p,
            fmt_opt(fitted),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    for f in &record.slope_fits {
        let Some(fit) = &f.fit else { continue };
        w.write_record([
            "fit".to_string(),
            fmt_f64(f.alpha),
            fmt_point(&f.x),
            String::new(),
            String::new(),
            String::new(),
            fmt_f64(fit.slope),
            fmt_f64(fit.intercept),
            fmt_f64(fit.slope_stderr),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| ExitlabError::io(path, e))
}

pub fn summary_of(record: &RunRecord, cfg: &ExperimentConfig) -> Summary {
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config_hash: record.config_hash.clone(),
        config: cfg.echo(),
        rows: record.rows.clone(),
        slope_fits: record.slope_fits.clone(),
        warnings: record.warnings.clone(),
        partial: record.partial,
        failure: record.failure.clone(),
        environment: Environment::current(),
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ExitlabError::Serialization(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| ExitlabError::io(path, e))
}

/// Writes the results CSV, JSON summary and plot CSV into `dir`.
pub fn emit_outputs(record: &RunRecord, cfg: &ExperimentConfig, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| ExitlabError::io(dir, e))?;
    let paths = OutputPaths::in_dir(dir);
    write_results_csv(record, &paths.results)?;
    write_json(&summary_of(record, cfg), &paths.summary)?;
    write_plot_csv(record, &paths.plot)?;
    Ok(paths)
}

/// A results-CSV row read back as strings keyed by column.
pub fn read_results_csv(path: &Path) -> Result<Vec<std::collections::BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        out.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}

/// Checks a parsed summary against the documented schema.
pub fn validate_summary(value: &serde_json::Value) -> Result<()> {
    let bad = |m: &str| ExitlabError::Validation(format!("summary schema: {m}"));
    let obj = value.as_object().ok_or_else(|| bad("top level is not an object"))?;
    for key in ["schema_version", "config_hash", "config", "rows", "slope_fits", "warnings", "partial", "environment"] {
        if !obj.contains_key(key) {
            return Err(bad(&format!("missing key `{key}`")));
        }
    }
    let hash = obj["config_hash"].as_str().ok_or_else(|| bad("config_hash is not a string"))?;
    if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad("config_hash is not a sha256 hex digest"));
    }
    if hash != super::config::config_hash(&obj["config"]) {
        return Err(bad("config_hash does not match the echoed config"));
    }
    let rows = obj["rows"].as_array().ok_or_else(|| bad("rows is not an array"))?;
    for row in rows {
        for key in ["epsilon", "x", "alpha", "beta", "psi", "phi_minus", "phi_plus", "method", "dt", "seed"] {
            if row.get(key).is_none() {
                return Err(bad(&format!("row missing `{key}`")));
            }
        }
    }
    serde_json::from_value::<Summary>(value.clone()).map_err(|e| bad(&e.to_string()))?;
    Ok(())
}
