use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dynamics::{exit_time_deterministic, flow, Domain, FlowOptions, SmoothDomain};
use crate::error::{ExitlabError, Result};
use crate::estimator::{density_diagnostic, ks_normal_test, sample_covariance, DensityDiagnostic, GridSpec};
use crate::gauss::finite_time_covariance;
use crate::sde::{simulate_conjugated_u, PathConfig, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPointReport {
    pub x0: Vec<f64>,
    pub t_box: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_d1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_big: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_d2: Option<f64>,
    /// `S^t x0` when a time was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_at_t: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub points: Vec<FlowPointReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_plus: Option<f64>,
}

/// Deterministic exit times of the given points and, with D1/D2, the travel-time bounds.
pub fn run_flow(cfg: &ExperimentConfig, points: &[Vec<f64>], t: Option<f64>) -> Result<FlowReport> {
    let opts = FlowOptions::default();
    let exit_of = |dom: &Option<SmoothDomain>, x: &[f64]| -> Result<Option<f64>> {
        dom.as_ref().map(|d| exit_time_deterministic(&cfg.model, Domain::Smooth(d), x, opts)).transpose()
    };
    let mut reports = Vec::new();
    for x in points {
        if x.len() != cfg.dim() {
            return Err(ExitlabError::Validation(format!("point {x:?} has the wrong dimension")));
        }
        reports.push(FlowPointReport {
            x0: x.clone(),
            t_box: exit_time_deterministic(&cfg.model, Domain::Box(&cfg.box_domain), x, opts)?,
            t_d1: exit_of(&cfg.d1, x)?,
            t_big: exit_of(&cfg.big, x)?,
            t_d2: exit_of(&cfg.d2, x)?,
            flow_at_t: t.map(|t| flow(&cfg.model, x, t, opts.dt.min(t.max(f64::MIN_POSITIVE)))).transpose()?,
        });
    }
    let travel = super::run::configured_travel_times(cfg)?;
    Ok(FlowReport { points: reports, t_minus: travel.map(|t| t.0), t_plus: travel.map(|t| t.1) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRow {
    pub epsilon: f64,
    pub t: f64,
    pub n_samples: usize,
    pub sup_diff: f64,
    pub l1_diff: f64,
    /// Per coordinate `(D, p-value)` against `N(0, C_T[j, j])`.
    pub ks: Vec<(f64, f64)>,
    /// `max |Ĉ − C_T| / max |C_T|`.
    pub covariance_rel_error: f64,
    pub density: DensityDiagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub config_hash: String,
    pub y0: Vec<f64>,
    pub c_t: Vec<Vec<f64>>,
    pub rows: Vec<DiagnoseRow>,
}

/// Draws `n` samples of `U_T` from streams `(seed, 0..n)`.
pub fn sample_u(cfg: &ExperimentConfig, y0: &[f64], eps: f64, t: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    let pc = PathConfig::full_exit(cfg.path_config.dt, t.max(cfg.path_config.dt))?;
    (0..n as u64)
        .into_par_iter()
        .map(|id| simulate_conjugated_u(&cfg.model, &cfg.noise, y0, eps, t, &pc, &mut RngStream::new(cfg.seed, id)))
        .collect()
}

/// Compares the law of `U_T` with `N(0, C_T)` at every configured epsilon.
pub fn run_diagnose(cfg: &ExperimentConfig, t: f64, n_samples: usize, y0: Option<Vec<f64>>, bins: usize) -> Result<DiagnoseReport> {
    let d = cfg.dim();
    let y0 = y0.unwrap_or_else(|| vec![0.0; d]);
    let c_t = finite_time_covariance(cfg.noise.sigma0(), cfg.model.spectrum(), t)?;
    let scale = c_t.amax();
    let mut rows = Vec::new();
    for &eps in &cfg.epsilons {
        let samples = sample_u(cfg, &y0, eps, t, n_samples)?;
        let density = density_diagnostic(&samples, &c_t, GridSpec { bins_per_dim: bins, ..GridSpec::default() })?;
        let ks = (0..d)
            .map(|j| {
                let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
                ks_normal_test(&col, c_t[(j, j)])
            })
            .collect();
        let cov = sample_covariance(&samples);
        rows.push(DiagnoseRow {
            epsilon: eps,
            t,
            n_samples,
            sup_diff: density.sup_diff,
            l1_diff: density.l1_diff,
            ks,
            covariance_rel_error: (cov - &c_t).amax() / scale,
            density,
        });
    }
    Ok(DiagnoseReport {
        config_hash: cfg.hash(),
        y0,
        c_t: (0..d).map(|i| (0..d).map(|j| c_t[(i, j)]).collect()).collect(),
        rows,
    })
}
