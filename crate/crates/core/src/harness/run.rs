use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dynamics::{travel_time_bounds, Domain, FlowOptions, DEFAULT_FACE_POINTS};
use crate::error::{ExitlabError, Result};
use crate::estimator::{
    corollary3_estimate, direct_tail_estimate, rescaled_prefactor, slope_regression_raw, splitting_tail_estimate,
    EstimatorMethod, SlopeFit, SplittingPlan, TailEstimate,
};
use crate::exponents::{beta_exponent, mikami_mu, threshold_time, ThresholdSpec};
use crate::gauss::{limit_covariance, phi_bounds, psi_value, PsiBranch};

/// One `(ε, x)` cell of a run. Estimate fields are absent for theory-only rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub epsilon: f64,
    pub x: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub threshold: f64,
    pub p_hat: Option<f64>,
    pub stderr: Option<f64>,
    pub n_paths: Option<u64>,
    pub n_survived: Option<u64>,
    pub rescaled: Option<f64>,
    pub rescaled_stderr: Option<f64>,
    pub psi: f64,
    pub psi_branch: PsiBranch,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub method: String,
    pub dt: f64,
    pub seed: u64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<TailEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFitRecord {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub beta: f64,
    pub fit: Option<SlopeFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub rows: Vec<RunRow>,
    pub slope_fits: Vec<SlopeFitRecord>,
    pub warnings: Vec<String>,
    /// A cell failed; rows up to the failure are kept.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

struct Theory {
    beta: f64,
    mu: f64,
    psi: f64,
    branch: PsiBranch,
    phi_minus: f64,
    phi_plus: f64,
}

fn theory(cfg: &ExperimentConfig, threshold: &ThresholdSpec, travel: Option<(f64, f64)>, x: &[f64]) -> Result<Theory> {
    let spectrum = cfg.model.spectrum();
    let alpha = threshold.alpha;
    let c0 = limit_covariance(cfg.noise.sigma0(), spectrum)?;
    let psi = psi_value(spectrum, &c0, &cfg.box_domain, threshold.r0, alpha, x)?;
    let (phi_minus, phi_plus) = match travel {
        Some((tm, tp)) => phi_bounds(spectrum, &c0, &cfg.box_domain, threshold.r0, alpha, x, tm, tp)?,
        None => (psi.value, psi.value),
    };
    Ok(Theory {
        beta: beta_exponent(spectrum, alpha),
        mu: mikami_mu(spectrum, spectrum.largest() * alpha),
        psi: psi.value,
        branch: psi.branch,
        phi_minus,
        phi_plus,
    })
}

/// `(T₋, T₊)` when both comparison domains are configured.
pub fn configured_travel_times(cfg: &ExperimentConfig) -> Result<Option<(f64, f64)>> {
    match (&cfg.d1, &cfg.d2) {
        (Some(d1), Some(d2)) => Ok(Some(travel_time_bounds(
            &cfg.model,
            &cfg.box_domain,
            d1,
            d2,
            DEFAULT_FACE_POINTS,
            FlowOptions::default(),
        )?)),
        _ => Ok(None),
    }
}

fn threshold_with_alpha(cfg: &ExperimentConfig, alpha: f64) -> Result<ThresholdSpec> {
    ThresholdSpec::new(alpha, cfg.threshold.r0, cfg.threshold.r_coeff, cfg.threshold.q)
}

fn theory_row(cfg: &ExperimentConfig, th: &Theory, threshold: &ThresholdSpec, eps: f64, x: &[f64]) -> Result<RunRow> {
    Ok(RunRow {
        epsilon: eps,
        x: x.to_vec(),
        alpha: threshold.alpha,
        beta: th.beta,
        mu: th.mu,
        threshold: threshold_time(threshold, eps)?,
        p_hat: None,
        stderr: None,
        n_paths: None,
        n_survived: None,
        rescaled: None,
        rescaled_stderr: None,
        psi: th.psi,
        psi_branch: th.branch,
        phi_minus: th.phi_minus,
        phi_plus: th.phi_plus,
        method: "theory".into(),
        dt: cfg.path_config.dt,
        seed: cfg.seed,
        wall_seconds: 0.0,
        estimate: None,
    })
}

/// Theory columns for every `(α, ε, x)`; no simulation.
pub fn run_predict(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<RunRecord> {
    let travel = configured_travel_times(cfg)?;
    let mut rows = Vec::new();
    for &alpha in alphas {
        let threshold = threshold_with_alpha(cfg, alpha)?;
        for x in &cfg.points {
            let th = theory(cfg, &threshold, travel, x)?;
            for &eps in &cfg.epsilons {
                rows.push(theory_row(cfg, &th, &threshold, eps, x)?);
            }
        }
    }
    Ok(RunRecord {
        config_hash: cfg.hash(),
        rows,
        slope_fits: Vec::new(),
        warnings: cfg.warnings.clone(),
        partial: false,
        failure: None,
    })
}

/// Runs the configured estimator on one cell.
pub fn estimate_cell(cfg: &ExperimentConfig, threshold: &ThresholdSpec, eps: f64, x: &[f64]) -> Result<TailEstimate> {
    let domain = Domain::Box(&cfg.box_domain);
    match cfg.method {
        EstimatorMethod::Direct => direct_tail_estimate(
            &cfg.model,
            &cfg.noise,
            domain,
            x,
            eps,
            threshold,
            cfg.n_paths,
            &cfg.path_config,
            cfg.seed,
        ),
        EstimatorMethod::Splitting => {
            let t0 = threshold_time(threshold, eps)?;
            let plan = SplittingPlan::equally_spaced(t0, cfg.splitting_spacing, cfg.splitting_budget)?;
            splitting_tail_estimate(&cfg.model, &cfg.noise, domain, x, eps, threshold, &plan, &cfg.path_config, cfg.seed)
        }
        EstimatorMethod::Corollary3 => {
            let big = cfg.big.as_ref().ok_or_else(|| ExitlabError::Validation("corollary3 needs domain.big".into()))?;
            corollary3_estimate(
                &cfg.model,
                &cfg.noise,
                &cfg.box_domain,
                big,
                x,
                eps,
                threshold,
                cfg.n_paths,
                &cfg.path_config,
                cfg.seed,
            )
        }
    }
}

/// Full sweep over `(α, x, ε)` with the configured estimator, then a slope
/// fit per `(α, x)` when the grid has at least 3 epsilons.
///
/// A failing cell stops the sweep; the returned record is flagged partial
/// and carries the message, so callers can still flush what was computed.
pub fn run_estimate(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<RunRecord> {
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        rows: Vec::new(),
        slope_fits: Vec::new(),
        warnings: cfg.warnings.clone(),
        partial: false,
        failure: None,
    };
    let travel = configured_travel_times(cfg)?;
    'sweep: for &alpha in alphas {
        let threshold = threshold_with_alpha(cfg, alpha)?;
        for x in &cfg.points {
            let th = theory(cfg, &threshold, travel, x)?;
            let mut pts = Vec::new();
            for &eps in &cfg.epsilons {
                let start = Instant::now();
                let est = match estimate_cell(cfg, &threshold, eps, x) {
                    Ok(e) => e,
                    Err(e) => {
                        log::error!("cell eps={eps} x={x:?} alpha={alpha} failed: {e}");
                        record.partial = true;
                        record.failure = Some(format!("eps={eps} x={x:?} alpha={alpha}: {e}"));
                        break 'sweep;
                    }
                };
                let wall = start.elapsed().as_secs_f64();
                let (rescaled, rescaled_se) = rescaled_prefactor(&est, eps, th.beta);
                log::info!(
                    "alpha={alpha} x={x:?} eps={eps}: p_hat={:.6e} ± {:.2e}, rescaled={rescaled:.5} (psi {:.5}), {wall:.1}s",
                    est.p_hat,
                    est.stderr,
                    th.psi
                );
                if est.extinct {
                    record.warnings.push(format!("splitting went extinct at eps={eps}, x={x:?}"));
                }
                if est.n_capped > 0 {
                    record.warnings.push(format!("{} paths capped at eps={eps}, x={x:?}", est.n_capped));
                }
                pts.push((eps, est.p_hat));
                let mut row = theory_row(cfg, &th, &threshold, eps, x)?;
                row.p_hat = Some(est.p_hat);
                row.stderr = Some(est.stderr);
                row.n_paths = Some(est.n_paths);
                row.n_survived = Some(est.n_survived);
                row.rescaled = Some(rescaled);
                row.rescaled_stderr = Some(rescaled_se);
                row.method = est.method.as_str().into();
                row.wall_seconds = wall;
                row.estimate = Some(est);
                record.rows.push(row);
            }
            if cfg.epsilons.len() >= 3 {
                let (fit, error) = match slope_regression_raw(&pts) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                record.slope_fits.push(SlopeFitRecord { alpha, x: x.clone(), beta: th.beta, fit, error });
            }
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    const CFG: &str = r#"
seed = 7
epsilons = [0.3, 0.2, 0.1]

[model]
variant = "identity"
lambdas = [1.0]

[domain]
lower = [-1.0]
upper = [1.0]

[threshold]
alpha = 1.5

[initial]
points = [[0.0]]

[estimator]
n_paths = 2000
"#;

    #[test]
    fn predict_rows() {
        let cfg = parse_config(CFG).unwrap();
        let rec = run_predict(&cfg, &[1.5]).unwrap();
        assert_eq!(rec.rows.len(), 3);
        let r = &rec.rows[0];
        assert!((r.psi - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-14);
        assert_eq!(r.beta, 0.5);
        assert_eq!(r.mu, 0.5);
        assert_eq!(r.phi_minus, r.psi);
        assert!(r.p_hat.is_none());
    }

    #[test]
    fn estimate_rows_and_fit() {
        let cfg = parse_config(CFG).unwrap();
        let rec = run_estimate(&cfg, &[1.5]).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!(!rec.partial);
        assert_eq!(rec.slope_fits.len(), 1);
        assert!(rec.slope_fits[0].fit.is_some());
        for r in &rec.rows {
            assert_eq!(r.p_hat.unwrap(), r.n_survived.unwrap() as f64 / r.n_paths.unwrap() as f64);
        }
        let single = parse_config(&CFG.replace("[0.3, 0.2, 0.1]", "[0.1]")).unwrap();
        let rec = run_estimate(&single, &[1.5]).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert!(rec.slope_fits.is_empty());
    }

    #[test]
    fn corollary3_mode() {
        let text = CFG.replace("[threshold]", "[domain.big]\nshape = \"ball\"\ncenter = [0.0]\nradius = 2.0\n\n[threshold]")
            .replace("n_paths = 2000", "n_paths = 2000\nmethod = \"corollary3\"");
        let cfg = parse_config(&text).unwrap();
        let rec = run_estimate(&cfg, &[1.5]).unwrap();
        assert!(rec.rows.iter().all(|r| r.method == "corollary3"));
    }
}
