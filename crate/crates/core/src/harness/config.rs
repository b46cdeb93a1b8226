//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 2024
//! epsilons = [0.2, 0.1, 0.05]
//!
//! [model]
//! variant = "identity"          # or "component_quadratic" with `c = [...]`
//! lambdas = [1.0]
//!
//! [noise]
//! matrix = [[1.0]]              # form = "radial" adds `coeff`
//!
//! [domain]
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [threshold]
//! alpha = 1.5                   # or h = λ₁α
//!
//! [initial]
//! points = [[0.0]]
//!
//! [estimator]
//! method = "direct"
//! ```
//!
//! Optional smooth domains go in `[domain.d1]`, `[domain.big]` and
//! `[domain.d2]`, each with a `shape` key (`ball`, `ellipsoid`, `half_space`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    transversality_check, travel_time_bounds, BoxDomain, ConjugateFieldModel, FlowOptions, LevelSet, NoiseForm,
    NoiseModel, SmoothDomain, DEFAULT_FACE_POINTS,
};
use crate::error::{ExitlabError, Result};
use crate::estimator::{EstimatorMethod, GridSpec, MIN_SPLITTING_BUDGET};
use crate::exponents::{classify_admissible, InitialScaleSpec, Spectrum, ThresholdSpec};
use crate::sde::{PathConfig, MAX_DT};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_PATHS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub model: RawModel,
    #[serde(default)]
    pub noise: Option<RawNoise>,
    pub domain: RawDomain,
    pub threshold: RawThreshold,
    pub initial: RawInitial,
    #[serde(default)]
    pub estimator: RawEstimator,
    #[serde(default)]
    pub diagnose: Option<RawDiagnose>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Identity,
    ComponentQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub variant: ModelVariant,
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFormName {
    #[default]
    Constant,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    #[serde(default)]
    pub form: NoiseFormName,
    /// Rows of `σ(0)`; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<LevelSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big: Option<LevelSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<LevelSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawThreshold {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default)]
    pub r0: f64,
    #[serde(default)]
    pub r_coeff: f64,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEstimator {
    #[serde(default = "default_method")]
    pub method: EstimatorMethod,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<f64>,
    #[serde(default = "default_budget")]
    pub splitting_budget: u64,
    #[serde(default = "default_spacing")]
    pub splitting_spacing: f64,
}

fn default_method() -> EstimatorMethod {
    EstimatorMethod::Direct
}
fn default_n_paths() -> u64 {
    DEFAULT_N_PATHS
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_budget() -> u64 {
    10_000
}
fn default_spacing() -> f64 {
    1.0
}

impl Default for RawEstimator {
    fn default() -> Self {
        RawEstimator {
            method: default_method(),
            n_paths: default_n_paths(),
            dt: default_dt(),
            t_cap: None,
            splitting_budget: default_budget(),
            splitting_spacing: default_spacing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiagnose {
    pub t: f64,
    #[serde(default = "default_diag_samples")]
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_diag_samples() -> usize {
    100_000
}
fn default_bins() -> usize {
    GridSpec::default().bins_per_dim
}

/// A parsed and validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub model: ConjugateFieldModel,
    pub noise: NoiseModel,
    pub box_domain: BoxDomain,
    pub d1: Option<SmoothDomain>,
    pub big: Option<SmoothDomain>,
    pub d2: Option<SmoothDomain>,
    pub threshold: ThresholdSpec,
    pub initial_scale: Option<InitialScaleSpec>,
    pub points: Vec<Vec<f64>>,
    pub epsilons: Vec<f64>,
    pub method: EstimatorMethod,
    pub n_paths: u64,
    pub path_config: PathConfig,
    pub splitting_budget: u64,
    pub splitting_spacing: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn key_of(message: &str) -> String {
    // toml reports offending fields as `name`
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_default()
}

/// Parses TOML text into the raw (unvalidated) document.
pub fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str::<RawConfig>(text).map_err(|e| {
        let mut line = e.span().map_or(0, |s| line_of(text, s.start));
        let message = e.message().trim().to_string();
        let mut key = key_of(&message);
        if !key.is_empty() {
            // table-level errors point at the header; move to the key itself
            let own = text.lines().enumerate().skip(line.saturating_sub(1)).find(|(_, l)| {
                l.trim_start().strip_prefix(key.as_str()).is_some_and(|rest| rest.trim_start().starts_with('='))
            });
            if let Some((i, _)) = own {
                line = i + 1;
            }
        }
        if key.is_empty() {
            // fall back to the key on the reported line
            key = text
                .lines()
                .nth(line.saturating_sub(1))
                .and_then(|l| l.split('=').next())
                .map(|k| k.trim().trim_matches(['[', ']']).to_string())
                .unwrap_or_default();
        }
        ExitlabError::Parse { line, key, message }
    })
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_raw(parse_raw(text)?)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ExitlabError::io(path, e))?;
    parse_config(&text)
}

fn invalid(msg: impl Into<String>) -> ExitlabError {
    ExitlabError::Validation(msg.into())
}

/// Re-tags lower-level errors raised while validating as validation errors.
fn as_validation(e: ExitlabError) -> ExitlabError {
    match e {
        ExitlabError::InvalidInput(m) | ExitlabError::RankDeficient(m) => ExitlabError::Validation(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut warnings = Vec::new();
        let spectrum = Spectrum::new(raw.model.lambdas.clone()).map_err(|e| match e {
            ExitlabError::SpectrumInvalid(m) => ExitlabError::Validation(m),
            other => other,
        })?;
        let d = spectrum.dim();

        let model = match raw.model.variant {
            ModelVariant::Identity => {
                if raw.model.c.is_some() {
                    return Err(invalid("model.c is only valid for variant = \"component_quadratic\""));
                }
                ConjugateFieldModel::identity(spectrum.clone())
            }
            ModelVariant::ComponentQuadratic => {
                let c = raw.model.c.clone().ok_or_else(|| invalid("model.c is required for component_quadratic"))?;
                if c.len() != d {
                    return Err(invalid(format!("model.c has {} entries, spectrum has {d}", c.len())));
                }
                ConjugateFieldModel::component_quadratic(spectrum.clone(), c, raw.model.validity_radius)
                    .map_err(as_validation)?
            }
        };
        if raw.model.variant == ModelVariant::Identity && raw.model.validity_radius.is_some() {
            return Err(invalid("model.validity_radius is only valid for component_quadratic"));
        }

        let noise = match &raw.noise {
            None => NoiseModel::identity(d),
            Some(n) => {
                let sigma0 = match &n.matrix {
                    None => DMatrix::identity(d, d),
                    Some(rows) => {
                        let cols = rows.first().map_or(0, Vec::len);
                        if rows.len() != d || rows.iter().any(|r| r.len() != cols) {
                            return Err(invalid(format!("noise.matrix must have {d} rows of equal length")));
                        }
                        DMatrix::from_row_iterator(d, cols, rows.iter().flatten().copied())
                    }
                };
                let form = match (n.form, n.coeff) {
                    (NoiseFormName::Constant, None) => NoiseForm::Constant,
                    (NoiseFormName::Constant, Some(_)) => return Err(invalid("noise.coeff requires form = \"radial\"")),
                    (NoiseFormName::Radial, c) => NoiseForm::Radial { coeff: c.unwrap_or(0.0) },
                };
                NoiseModel::new(sigma0, form).map_err(as_validation)?
            }
        };

        let l0_cap = raw.domain.l0_cap.unwrap_or_else(|| {
            raw.domain.lower.iter().chain(&raw.domain.upper).fold(0.0f64, |m, v| m.max(v.abs()))
        });
        let box_domain = BoxDomain::new(raw.domain.lower.clone(), raw.domain.upper.clone(), l0_cap).map_err(as_validation)?;
        if box_domain.dim() != d {
            return Err(invalid(format!("domain has dimension {}, spectrum has {d}", box_domain.dim())));
        }
        if model.validity_radius().is_finite() {
            let corners = box_corners(&box_domain);
            let mut x = vec![0.0; d];
            for y in corners {
                model.inverse(&y, &mut x);
                if !model.within_validity(&x) {
                    return Err(invalid(format!(
                        "box corner {y:?} maps outside the conjugacy validity radius {}",
                        model.validity_radius()
                    )));
                }
            }
        }
        let smooth = |ls: &Option<LevelSet>, name: &str| -> Result<Option<SmoothDomain>> {
            match ls {
                None => Ok(None),
                Some(l) => {
                    let dom = SmoothDomain::new(l.clone()).map_err(|e| invalid(format!("domain.{name}: {e}")))?;
                    if dom.dim() != d {
                        return Err(invalid(format!("domain.{name} has dimension {}, expected {d}", dom.dim())));
                    }
                    Ok(Some(dom))
                }
            }
        };
        let d1 = smooth(&raw.domain.d1, "d1")?;
        let big = smooth(&raw.domain.big, "big")?;
        let d2 = smooth(&raw.domain.d2, "d2")?;
        if d1.is_some() != d2.is_some() {
            return Err(invalid("domain.d1 and domain.d2 must be given together"));
        }
        if let Some(b) = &big {
            let (ok, min) = transversality_check(&model, b, 256);
            if !ok {
                return Err(invalid(format!(
                    "drift is not transversal to domain.big (min inner product {min:.3e})"
                )));
            }
        }
        if let (Some(a), Some(b)) = (&d1, &d2) {
            travel_time_bounds(&model, &box_domain, a, b, DEFAULT_FACE_POINTS, FlowOptions::default()).map_err(|e| match e {
                ExitlabError::NoExit { .. } | ExitlabError::OutsideValidity { .. } => {
                    invalid(format!("domain.d1/d2: the flow from the box boundary does not reach them ({e})"))
                }
                other => other,
            })?;
        }

        let alpha = match (raw.threshold.alpha, raw.threshold.h) {
            (Some(a), None) => a,
            (None, Some(h)) => h / spectrum.largest(),
            _ => return Err(invalid("threshold needs exactly one of alpha or h")),
        };
        let threshold =
            ThresholdSpec::new(alpha, raw.threshold.r0, raw.threshold.r_coeff, raw.threshold.q).map_err(as_validation)?;

        if raw.epsilons.is_empty() {
            return Err(invalid("epsilons must not be empty"));
        }
        if raw.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(invalid("every epsilon must lie in (0, 1)"));
        }
        if raw.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("epsilon grid not strictly decreasing"));
        }

        if raw.initial.points.is_empty() {
            return Err(invalid("initial.points must not be empty"));
        }
        if let Some(p) = raw.initial.points.iter().find(|p| p.len() != d) {
            return Err(invalid(format!("initial point {p:?} has dimension {}, expected {d}", p.len())));
        }
        let initial_scale = match (raw.initial.kappa, raw.initial.rho) {
            (None, None) => None,
            (k, r) => Some(InitialScaleSpec::new(k.unwrap_or(1.0), r.unwrap_or(0.0)).map_err(as_validation)?),
        };
        if let Some(k) = &initial_scale {
            if !classify_admissible(k, &spectrum, alpha) {
                warnings.push(format!(
                    "K(eps) = {}*eps^-{} is not admissible for alpha = {alpha}",
                    k.kappa, k.rho
                ));
            }
            for &eps in &raw.epsilons {
                let radius = k.radius(eps);
                for p in &raw.initial.points {
                    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > radius {
                        warnings.push(format!("|x| = {norm} exceeds K({eps}) = {radius} for x = {p:?}"));
                    }
                }
            }
        }

        let est = &raw.estimator;
        if !(est.dt > 0.0 && est.dt <= MAX_DT) {
            return Err(invalid(format!("estimator.dt must lie in (0, {MAX_DT}]")));
        }
        if est.n_paths == 0 {
            return Err(invalid("estimator.n_paths must be >= 1"));
        }
        if est.method == EstimatorMethod::Splitting && est.splitting_budget < MIN_SPLITTING_BUDGET {
            return Err(invalid(format!("estimator.splitting_budget must be >= {MIN_SPLITTING_BUDGET}")));
        }
        if !(est.splitting_spacing > 0.0) {
            return Err(invalid("estimator.splitting_spacing must be > 0"));
        }
        if est.method == EstimatorMethod::Corollary3 && big.is_none() {
            return Err(invalid("method = \"corollary3\" requires [domain.big]"));
        }
        let t_cap = match est.t_cap {
            Some(t) => t,
            None => {
                let t0_max = raw
                    .epsilons
                    .iter()
                    .map(|&e| crate::exponents::threshold_time(&threshold, e))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(0.0f64, f64::max);
                10.0 * (t0_max + 1.0 / spectrum.smallest())
            }
        };
        let path_config = PathConfig::tail(est.dt, t_cap).map_err(as_validation)?;
        if let Some(diag) = &raw.diagnose {
            if !(diag.t >= 0.0) || diag.n_samples < crate::estimator::MIN_DIAGNOSTIC_SAMPLES || diag.bins < 2 {
                return Err(invalid("diagnose needs t >= 0, n_samples >= 1e4 and bins >= 2"));
            }
            if diag.y0.as_ref().is_some_and(|y| y.len() != d) {
                return Err(invalid("diagnose.y0 has the wrong dimension"));
            }
        }

        Ok(ExperimentConfig {
            model,
            noise,
            box_domain,
            d1,
            big,
            d2,
            threshold,
            initial_scale,
            points: raw.initial.points.clone(),
            epsilons: raw.epsilons.clone(),
            method: est.method,
            n_paths: est.n_paths,
            path_config,
            splitting_budget: est.splitting_budget,
            splitting_spacing: est.splitting_spacing,
            seed: raw.seed,
            warnings,
            raw,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.threshold.alpha
    }

    /// Replaces the seed (CLI override); the echo and hash follow.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.raw.seed = seed;
        self
    }

    /// The canonical JSON echo of the configuration (keys sorted).
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(&self.raw).expect("config serializes")
    }

    /// SHA-256 of the compact canonical echo.
    pub fn hash(&self) -> String {
        config_hash(&self.echo())
    }
}

/// Hash of a config echo as recorded in the JSON summary.
pub fn config_hash(echo: &serde_json::Value) -> String {
    let text = serde_json::to_string(echo).expect("json value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn box_corners(bx: &BoxDomain) -> Vec<Vec<f64>> {
    let d = bx.dim();
    (0..1usize << d)
        .map(|mask| (0..d).map(|j| if mask >> j & 1 == 1 { bx.upper()[j] } else { bx.lower()[j] }).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
epsilons = [0.2, 0.1]

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
"#;

    #[test]
    fn unreachable_comparison_domain_is_a_validation_error() {
        let text = MINIMAL.replace("lambdas = [1.0]", "lambdas = [1.0, 0.5]")
            .replace("lower = [-1.0]", "lower = [-1.0, -1.0]")
            .replace("upper = [1.0]", "upper = [1.0, 1.0]\nd1 = { shape = \"ball\", center = [0.0, 0.0], radius = 1.5 }\nd2 = { shape = \"half_space\", normal = [1.0, 0.0], offset = 3.0 }")
            .replace("points = [[0.0]]", "points = [[0.0, 0.0]]");
        match parse_config(&text) {
            Err(ExitlabError::Validation(m)) => assert!(m.contains("d1/d2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.path_config.dt, 1e-3);
        assert_eq!(cfg.n_paths, 100_000);
        assert_eq!(cfg.method, EstimatorMethod::Direct);
        assert!(cfg.warnings.is_empty());
        assert_eq!(cfg.noise.sigma0(), &DMatrix::identity(1, 1));
    }

    #[test]
    fn increasing_spectrum_rejected() {
        let text = MINIMAL.replace("lambdas = [1.0]", "lambdas = [1.0, 2.0]");
        match parse_config(&text) {
            Err(ExitlabError::Validation(m)) => assert!(m.contains("spectrum not strictly decreasing"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn admissibility_warning() {
        let text = MINIMAL.replace("alpha = 1.5", "alpha = 0.5").replace("points = [[0.0]]", "points = [[0.0]]\nrho = 0.6");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("not admissible"));
    }

    #[test]
    fn parse_errors_carry_line_and_key() {
        let text = MINIMAL.replace("alpha = 1.5", "alpha = 1.5\nbogus = 3");
        match parse_config(&text) {
            Err(ExitlabError::Parse { line, key, .. }) => {
                assert_eq!(key, "bogus");
                assert_eq!(line, 14);
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("alpha = 1.5", "alpha = \"x\"");
        assert!(matches!(parse_config(&text), Err(ExitlabError::Parse { line: 13, .. })));
    }

    #[test]
    fn epsilon_grid_and_dimensions() {
        let text = MINIMAL.replace("[0.2, 0.1]", "[0.1, 0.2]");
        assert!(matches!(parse_config(&text), Err(ExitlabError::Validation(_))));
        let text = MINIMAL.replace("points = [[0.0]]", "points = [[0.0, 1.0]]");
        assert!(matches!(parse_config(&text), Err(ExitlabError::Validation(_))));
        let text = MINIMAL.replace("alpha = 1.5", "alpha = 1.5\nh = 1.5");
        assert!(matches!(parse_config(&text), Err(ExitlabError::Validation(_))));
    }

    #[test]
    fn h_maps_to_alpha() {
        let text = MINIMAL.replace("lambdas = [1.0]", "lambdas = [2.0]").replace("alpha = 1.5", "h = 3.0");
        assert_eq!(parse_config(&text).unwrap().alpha(), 1.5);
    }

    #[test]
    fn smooth_domains_and_quadratic() {
        let text = MINIMAL.replace("[threshold]", "[domain.big]\nshape = \"ball\"\ncenter = [0.0]\nradius = 2.0\n\n[threshold]");
        let cfg = parse_config(&text).unwrap();
        assert!(cfg.big.is_some());
        let quad = MINIMAL
            .replace("variant = \"identity\"", "variant = \"component_quadratic\"\nc = [1.0]\nvalidity_radius = 0.2")
            .replace("[-1.0]", "[-0.15]")
            .replace("upper = [1.0]", "upper = [0.15]");
        assert!(parse_config(&quad).is_ok());
        let too_big = quad.replace("[-0.15]", "[-0.3]");
        assert!(matches!(parse_config(&too_big), Err(ExitlabError::Validation(_))));
    }

    #[test]
    fn hash_is_stable_and_seed_sensitive() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), b.with_seed(5).hash());
        assert_eq!(config_hash(&a.echo()), a.hash());
    }
}
