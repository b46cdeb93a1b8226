use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ExitlabError, Result};
use crate::exponents::Spectrum;
use crate::gauss::check_full_row_rank;

/// A user-supplied linearizing conjugacy `f` with `f(0) = 0`, `Df(0) = I`.
pub trait CustomConjugacy: Send + Sync {
    fn forward(&self, x: &[f64], y: &mut [f64]);
    fn inverse(&self, y: &[f64], x: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Clone)]
pub enum Conjugacy {
    Identity,
    /// `f_j(x) = x_j + c_j x_j²`.
    ComponentQuadratic(Vec<f64>),
    Custom(Arc<dyn CustomConjugacy>),
}

impl fmt::Debug for Conjugacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conjugacy::Identity => write!(f, "Identity"),
            Conjugacy::ComponentQuadratic(c) => write!(f, "ComponentQuadratic({c:?})"),
            Conjugacy::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

/// Serializable tag of the conjugacy family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugacyVariant {
    Identity,
    ComponentQuadratic,
    Custom,
}

/// Drift `b = (Df)⁻¹ · (λ ∘ f)`, defined by its linearizing conjugacy.
#[derive(Debug, Clone)]
pub struct ConjugateFieldModel {
    spectrum: Spectrum,
    conjugacy: Conjugacy,
    validity_radius: f64,
}

/// Margin `δ` in the default quadratic validity radius `1/(4|c| + δ)`.
pub const QUADRATIC_RADIUS_MARGIN: f64 = 1e-3;

const CHECK_TOL_IDENTITY: f64 = 1e-10;
const CHECK_TOL_RESIDUAL: f64 = 1e-8;

impl ConjugateFieldModel {
    pub fn identity(spectrum: Spectrum) -> Self {
        ConjugateFieldModel { spectrum, conjugacy: Conjugacy::Identity, validity_radius: f64::INFINITY }
    }

    /// Component-wise quadratic conjugacy; `validity_radius` defaults to
    /// `min_j 1/(4|c_j| + δ)` and may only be tightened.
    pub fn component_quadratic(spectrum: Spectrum, c: Vec<f64>, validity_radius: Option<f64>) -> Result<Self> {
        if c.len() != spectrum.dim() {
            return Err(ExitlabError::InvalidInput(format!(
                "quadratic coefficients have length {}, spectrum has dimension {}",
                c.len(),
                spectrum.dim()
            )));
        }
        let default_radius = c
            .iter()
            .map(|cj| 1.0 / (4.0 * cj.abs() + QUADRATIC_RADIUS_MARGIN))
            .fold(f64::INFINITY, f64::min);
        let radius = match validity_radius {
            Some(r) if r > default_radius => {
                return Err(ExitlabError::InvalidInput(format!(
                    "validity radius {r} exceeds the diffeomorphism radius {default_radius}"
                )))
            }
            Some(r) => r,
            None => default_radius,
        };
        Self::checked(spectrum, Conjugacy::ComponentQuadratic(c), radius)
    }

    pub fn custom(spectrum: Spectrum, conjugacy: Arc<dyn CustomConjugacy>, validity_radius: f64) -> Result<Self> {
        Self::checked(spectrum, Conjugacy::Custom(conjugacy), validity_radius)
    }

    fn checked(spectrum: Spectrum, conjugacy: Conjugacy, validity_radius: f64) -> Result<Self> {
        if !(validity_radius > 0.0) {
            return Err(ExitlabError::InvalidInput(format!("validity radius {validity_radius} must be > 0")));
        }
        let model = ConjugateFieldModel { spectrum, conjugacy, validity_radius };
        model.check_invariants()?;
        Ok(model)
    }

    /// `f(0) = 0`, `Df(0) = I`, `f⁻¹∘f = id` and the conjugacy residual on
    /// deterministic sample points.
    pub fn check_invariants(&self) -> Result<()> {
        let d = self.dim();
        let zero = vec![0.0; d];
        let mut y = vec![0.0; d];
        self.forward(&zero, &mut y);
        if y.iter().any(|v| v.abs() > CHECK_TOL_IDENTITY) {
            return Err(ExitlabError::Validation("conjugacy: f(0) != 0".into()));
        }
        let jac0 = self.jacobian(&zero);
        if (jac0 - DMatrix::identity(d, d)).amax() > CHECK_TOL_IDENTITY {
            return Err(ExitlabError::Validation("conjugacy: Df(0) != I".into()));
        }
        let r = if self.validity_radius.is_finite() { self.validity_radius } else { 1.0 };
        let mut back = vec![0.0; d];
        let mut b = vec![0.0; d];
        for p in sample_ball(d, r, 97) {
            self.forward(&p, &mut y);
            self.inverse(&y, &mut back);
            let err = p.iter().zip(&back).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            if err > CHECK_TOL_IDENTITY * r.max(1.0) {
                return Err(ExitlabError::Validation(format!("conjugacy: f_inv(f(x)) != x at {p:?} (err {err:e})")));
            }
            self.drift_into(&p, &mut b);
            let jac = self.jacobian(&p);
            let lhs = &jac * DVector::from_column_slice(&b);
            let res = (0..d)
                .map(|j| (lhs[j] - self.spectrum.lambdas()[j] * y[j]).abs())
                .fold(0.0, f64::max);
            if res > CHECK_TOL_RESIDUAL {
                return Err(ExitlabError::Validation(format!("conjugacy residual {res:e} at {p:?}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn conjugacy(&self) -> &Conjugacy {
        &self.conjugacy
    }

    pub fn variant(&self) -> ConjugacyVariant {
        match self.conjugacy {
            Conjugacy::Identity => ConjugacyVariant::Identity,
            Conjugacy::ComponentQuadratic(_) => ConjugacyVariant::ComponentQuadratic,
            Conjugacy::Custom(_) => ConjugacyVariant::Custom,
        }
    }

    pub fn validity_radius(&self) -> f64 {
        self.validity_radius
    }

    #[inline]
    pub fn within_validity(&self, x: &[f64]) -> bool {
        self.validity_radius.is_infinite() || norm_sq(x) <= self.validity_radius * self.validity_radius
    }

    /// Radial projection onto the validity ball; returns whether it moved.
    #[inline]
    pub fn clamp_to_validity(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(x);
        if self.within_validity(x) {
            return false;
        }
        let s = self.validity_radius / norm_sq(x).sqrt();
        out.iter_mut().for_each(|v| *v *= s);
        true
    }

    #[inline]
    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        match &self.conjugacy {
            Conjugacy::Identity => y.copy_from_slice(x),
            Conjugacy::ComponentQuadratic(c) => {
                for ((yj, &xj), &cj) in y.iter_mut().zip(x).zip(c) {
                    *yj = xj + cj * xj * xj;
                }
            }
            Conjugacy::Custom(f) => f.forward(x, y),
        }
    }

    #[inline]
    pub fn inverse(&self, y: &[f64], x: &mut [f64]) {
        match &self.conjugacy {
            Conjugacy::Identity => x.copy_from_slice(y),
            Conjugacy::ComponentQuadratic(c) => {
                for ((xj, &yj), &cj) in x.iter_mut().zip(y).zip(c) {
                    // root of c x² + x − y nearest 0, cancellation-free
                    *xj = 2.0 * yj / (1.0 + (1.0 + 4.0 * cj * yj).sqrt());
                }
            }
            Conjugacy::Custom(f) => f.inverse(y, x),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.conjugacy {
            Conjugacy::Identity => DMatrix::identity(self.dim(), self.dim()),
            Conjugacy::ComponentQuadratic(c) => {
                DMatrix::from_diagonal(&DVector::from_iterator(self.dim(), x.iter().zip(c).map(|(xj, cj)| 1.0 + 2.0 * cj * xj)))
            }
            Conjugacy::Custom(f) => f.jacobian(x),
        }
    }

    /// `b(x)` without the validity check (hot path).
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let lam = self.spectrum.lambdas();
        match &self.conjugacy {
            Conjugacy::Identity => {
                for ((o, &xj), &l) in out.iter_mut().zip(x).zip(lam) {
                    *o = l * xj;
                }
            }
            Conjugacy::ComponentQuadratic(c) => {
                for (((o, &xj), &l), &cj) in out.iter_mut().zip(x).zip(lam).zip(c) {
                    *o = l * (xj + cj * xj * xj) / (1.0 + 2.0 * cj * xj);
                }
            }
            Conjugacy::Custom(f) => {
                let d = self.dim();
                let mut y = vec![0.0; d];
                f.forward(x, &mut y);
                let rhs = DVector::from_iterator(d, y.iter().zip(lam).map(|(a, l)| a * l));
                let sol = f.jacobian(x).lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(d, f64::NAN));
                out.copy_from_slice(sol.as_slice());
            }
        }
    }

    /// `b(x)`, failing outside the validity radius.
    pub fn drift_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(ExitlabError::InvalidInput(format!("state has length {}, expected {}", x.len(), self.dim())));
        }
        if !self.within_validity(x) {
            return Err(ExitlabError::OutsideValidity { norm: norm_sq(x).sqrt(), radius: self.validity_radius });
        }
        let mut out = vec![0.0; self.dim()];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    /// Smallest `C_q` with `|b(x) − λ∘x| ≤ C_q |x|²` on sample points of the
    /// validity ball (radius 1 when unbounded).
    pub fn fit_quadratic_remainder(&self, n_samples: usize) -> f64 {
        let d = self.dim();
        let r = if self.validity_radius.is_finite() { self.validity_radius } else { 1.0 };
        let mut b = vec![0.0; d];
        sample_ball(d, r, n_samples)
            .into_iter()
            .filter(|p| norm_sq(p) > 0.0)
            .map(|p| {
                self.drift_into(&p, &mut b);
                let rem: f64 = b
                    .iter()
                    .zip(&p)
                    .zip(self.spectrum.lambdas())
                    .map(|((bj, xj), l)| (bj - l * xj).powi(2))
                    .sum::<f64>()
                    .sqrt();
                rem / norm_sq(&p)
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Deterministic points in the closed ball of radius `r` (including the
/// boundary sphere along the coordinate axes).
pub(crate) fn sample_ball(dim: usize, r: f64, n: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(n + 2 * dim);
    for j in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[j] = s * r;
            pts.push(e);
        }
    }
    // additive recurrence with irrational steps, mapped to [-r, r]^d then into the ball
    let steps: Vec<f64> = (0..dim).map(|j| ((j as f64 + 2.0).sqrt()).fract()).collect();
    for k in 1..=n {
        let cube: Vec<f64> = steps.iter().map(|s| (k as f64 * s).fract() * 2.0 - 1.0).collect();
        let norm = norm_sq(&cube).sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        pts.push(cube.iter().map(|v| v * scale * r).collect());
    }
    pts
}

/// Diffusion coefficient `σ(x)` (d × n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum NoiseForm {
    Constant,
    /// `σ(x) = σ(0)·(1 + coeff·|x|²)`.
    Radial { coeff: f64 },
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    sigma0: DMatrix<f64>,
    /// Row-major copy of `σ(0)`.
    flat: Vec<f64>,
    form: NoiseForm,
}

impl NoiseModel {
    pub fn new(sigma0: DMatrix<f64>, form: NoiseForm) -> Result<Self> {
        if sigma0.ncols() < sigma0.nrows() {
            return Err(ExitlabError::RankDeficient(format!(
                "noise matrix is {}x{}; needs n >= d",
                sigma0.nrows(),
                sigma0.ncols()
            )));
        }
        check_full_row_rank(&sigma0)?;
        let (d, n) = sigma0.shape();
        let flat = (0..d).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| sigma0[(r, c)]).collect();
        Ok(NoiseModel { sigma0, flat, form })
    }

    pub fn constant(sigma0: DMatrix<f64>) -> Result<Self> {
        NoiseModel::new(sigma0, NoiseForm::Constant)
    }

    pub fn identity(dim: usize) -> Self {
        NoiseModel::constant(DMatrix::identity(dim, dim)).expect("identity has full rank")
    }

    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.sigma0.ncols()
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn form(&self) -> &NoiseForm {
        &self.form
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.form, NoiseForm::Constant)
    }

    /// Scalar multiplier of `σ(0)` at `x`.
    #[inline]
    pub fn scale_at(&self, x: &[f64]) -> f64 {
        match self.form {
            NoiseForm::Constant => 1.0,
            NoiseForm::Radial { coeff } => 1.0 + coeff * norm_sq(x),
        }
    }

    /// Adds `scale · σ(x) ξ` to `out`.
    #[inline]
    pub fn apply_into(&self, x: &[f64], xi: &[f64], scale: f64, out: &mut [f64]) {
        let s = scale * self.scale_at(x);
        let n = xi.len();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.flat[r * n..(r + 1) * n];
            *o += s * row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn sigma_at(&self, x: &[f64]) -> DMatrix<f64> {
        &self.sigma0 * self.scale_at(x)
    }
}
