//! Exponents, thresholds and admissibility of initial-condition scales.
//!
//! Everything here is closed-form arithmetic on the ordered spectrum
//! `λ₁ > … > λ_d > 0` of the linearization at the repelling point.

use serde::{Deserialize, Serialize};

use crate::error::{ExitlabError, Result};

/// Relative tolerance used to decide `α = 1/λ_i`.
pub const BOUNDARY_REL_TOL: f64 = 1e-12;

/// Ordered positive eigenvalues of the linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    lambdas: Vec<f64>,
}

impl Spectrum {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(ExitlabError::SpectrumInvalid("spectrum is empty".into()));
        }
        if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(ExitlabError::SpectrumInvalid(format!(
                "eigenvalue {bad} is not a finite positive number"
            )));
        }
        if lambdas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(ExitlabError::SpectrumInvalid(
                "spectrum not strictly decreasing".into(),
            ));
        }
        Ok(Spectrum { lambdas })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `λ_j` with the 1-based conventions `λ₀ = ∞`, `λ_{d+1} = 0`.
    pub fn lambda(&self, j: usize) -> f64 {
        match j {
            0 => f64::INFINITY,
            j if j > self.dim() => 0.0,
            j => self.lambdas[j - 1],
        }
    }

    pub fn largest(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn smallest(&self) -> f64 {
        self.lambdas[self.dim() - 1]
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = ExitlabError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Spectrum::new(v)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Vec<f64> {
        s.lambdas
    }
}

/// `λα − 1` compared against zero with the boundary tolerance: positive only
/// when `α` is strictly above `1/λ`.
fn exceeds(lambda: f64, alpha: f64) -> bool {
    lambda * alpha - 1.0 > BOUNDARY_REL_TOL
}

fn on_boundary(lambda: f64, alpha: f64) -> bool {
    (lambda * alpha - 1.0).abs() <= BOUNDARY_REL_TOL
}

/// The index `i(α) ∈ {1,…,d+1}` with `1/λ_{i−1} < α ≤ 1/λ_i`; `i(0) = 1`.
pub fn critical_index(spectrum: &Spectrum, alpha: f64) -> usize {
    1 + spectrum.lambdas().iter().filter(|&&l| exceeds(l, alpha)).count()
}

/// True when `α = 1/λ_{i(α)}` (within [`BOUNDARY_REL_TOL`]).
pub fn is_boundary_alpha(spectrum: &Spectrum, alpha: f64) -> bool {
    let i = critical_index(spectrum, alpha);
    i <= spectrum.dim() && on_boundary(spectrum.lambda(i), alpha)
}

/// Power-decay exponent `β(α) = Σ_j (λ_j α − 1) ∨ 0`.
pub fn beta_exponent(spectrum: &Spectrum, alpha: f64) -> f64 {
    spectrum
        .lambdas()
        .iter()
        .map(|&l| (l * alpha - 1.0).max(0.0))
        .sum()
}

/// `μ(h) = Σ_j (h λ_j/λ₁ − 1) ∨ 0`, the conjectured exponent of `P(τ > h T_ε)`.
pub fn mikami_mu(spectrum: &Spectrum, h: f64) -> f64 {
    beta_exponent(spectrum, h / spectrum.largest())
}

/// Threshold `T₀(ε) = α log ε⁻¹ + r(ε)` with `r(ε) = r0 + r_coeff·ε^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub alpha: f64,
    pub r0: f64,
    pub r_coeff: f64,
    pub q: f64,
}

impl ThresholdSpec {
    pub fn new(alpha: f64, r0: f64, r_coeff: f64, q: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(ExitlabError::InvalidInput(format!("alpha must be >= 0, got {alpha}")));
        }
        if !r0.is_finite() || !r_coeff.is_finite() {
            return Err(ExitlabError::InvalidInput("r(ε) coefficients must be finite".into()));
        }
        if r_coeff != 0.0 && !(q > 0.0) {
            return Err(ExitlabError::InvalidInput(format!(
                "r exponent q must be > 0 when r_coeff != 0, got {q}"
            )));
        }
        Ok(ThresholdSpec { alpha, r0, r_coeff, q })
    }

    /// `α` only, `r ≡ 0`.
    pub fn pure(alpha: f64) -> Result<Self> {
        ThresholdSpec::new(alpha, 0.0, 0.0, 1.0)
    }

    pub fn r_at(&self, epsilon: f64) -> f64 {
        if self.r_coeff == 0.0 {
            self.r0
        } else {
            self.r0 + self.r_coeff * epsilon.powf(self.q)
        }
    }
}

pub fn threshold_time(spec: &ThresholdSpec, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExitlabError::InvalidInput(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    Ok(spec.alpha * (1.0 / epsilon).ln() + spec.r_at(epsilon))
}

/// Initial-condition scale `K(ε) = κ ε^{−ρ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialScaleSpec {
    pub kappa: f64,
    pub rho: f64,
}

impl InitialScaleSpec {
    pub fn new(kappa: f64, rho: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) || !(rho >= 0.0 && rho.is_finite()) {
            return Err(ExitlabError::InvalidInput(format!(
                "need kappa > 0 and rho >= 0, got kappa={kappa}, rho={rho}"
            )));
        }
        Ok(InitialScaleSpec { kappa, rho })
    }

    pub fn radius(&self, epsilon: f64) -> f64 {
        self.kappa * epsilon.powf(-self.rho)
    }
}

/// Whether `K(ε) = κε^{−ρ}` is admissible for `α`.
///
/// The limit conditions reduce to strict inequalities on `ρ` because `K` is
/// a power law.
pub fn classify_admissible(kspec: &InitialScaleSpec, spectrum: &Spectrum, alpha: f64) -> bool {
    let d = spectrum.dim();
    let i = critical_index(spectrum, alpha);
    if i > d {
        return kspec.rho < 1.0;
    }
    if on_boundary(spectrum.lambda(i), alpha) {
        kspec.rho < 1.0 - spectrum.lambda(i + 1) * alpha
    } else {
        kspec.rho < 1.0 - spectrum.lambda(i) * alpha
    }
}
