//! Gaussian limit objects: the covariance `C₀`, its finite-time version
//! `C_T`, the prefactor `ψ` and the corollary bounds `φ±`.
//!
//! `ψ` is evaluated by Gaussian block marginalization. For `i = i(α)` and
//! `k = i − 1`:
//!
//! * interior (`α < 1/λ_i`): `Π_{j≤k} ΔLʲ e^{−λ_j r0}` times the
//!   `N(0, C₀[..k,..k])` density at `x^{<i}`;
//! * boundary (`α = 1/λ_i`): the same, times the conditional probability
//!   that `zⁱ ∈ e^{−λ_i r0}[L₋ⁱ, L₊ⁱ] − xⁱ` given `z^{<i} = −x^{<i}`;
//! * full (`i = d + 1`): `Π_j ΔLʲ e^{−λ_j r0}` times the full density at `x`.
//!
//! [`psi_mc_oracle`] evaluates the defining integral by importance sampling
//! from the marginal of the free block and never uses the block algebra, so
//! the two can be checked against each other.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::dynamics::BoxDomain;
use crate::error::{ExitlabError, Result};
use crate::exponents::{critical_index, is_boundary_alpha, Spectrum};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky-factored centered Gaussian used by every density evaluation.
#[derive(Debug, Clone)]
pub struct Mvn {
    dim: usize,
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Mvn {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(ExitlabError::InvalidInput(format!(
                "covariance must be square and non-empty, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let sym_err = (cov - cov.transpose()).amax();
        if sym_err > 1e-10 * cov.amax().max(1e-300) {
            return Err(ExitlabError::RankDeficient(format!("covariance not symmetric (asymmetry {sym_err:e})")));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| ExitlabError::RankDeficient("covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut flat = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for r in 0..dim {
            let diag = l[(r, r)];
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(ExitlabError::RankDeficient("Cholesky factor has non-positive diagonal".into()));
            }
            log_det += 2.0 * diag.ln();
            for c in 0..=r {
                flat[r * dim + c] = l[(r, c)];
            }
        }
        Ok(Mvn { dim, chol: flat, log_norm: -0.5 * (dim as f64 * LN_2PI + log_det) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `½ zᵀ C⁻¹ z` via forward substitution.
    #[inline]
    pub fn half_mahalanobis(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let mut u = [0.0f64; 8];
        let mut heap;
        let u: &mut [f64] = if d <= 8 {
            &mut u[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for r in 0..d {
            let row = &self.chol[r * d..r * d + r];
            let s: f64 = row.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            u[r] = (z[r] - s) / self.chol[r * d + r];
            acc += u[r] * u[r];
        }
        0.5 * acc
    }

    #[inline]
    pub fn log_density(&self, z: &[f64]) -> f64 {
        self.log_norm - self.half_mahalanobis(z)
    }

    #[inline]
    pub fn density(&self, z: &[f64]) -> f64 {
        self.log_density(z).exp()
    }

    /// Writes `L ξ` with `ξ` standard normal into `out`.
    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, xi: &mut [f64], out: &mut [f64]) {
        let d = self.dim;
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for (r, o) in out.iter_mut().enumerate().take(d) {
            *o = self.chol[r * d..r * d + r + 1].iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// `N(0, C)` density at `z`, computed through the Cholesky factor.
pub fn gaussian_density(c: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    let mvn = Mvn::new(c)?;
    if z.len() != mvn.dim() {
        return Err(ExitlabError::InvalidInput(format!("point has length {}, expected {}", z.len(), mvn.dim())));
    }
    Ok(mvn.density(z))
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(a ≤ N(mean, sd²) ≤ b)`, evaluated on the tail side to keep relative accuracy.
pub fn normal_interval_probability(mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    let lo = (a - mean) / sd;
    let hi = (b - mean) / sd;
    let s = std::f64::consts::SQRT_2;
    let p = if lo >= 0.0 {
        0.5 * (erfc(lo / s) - erfc(hi / s))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi / s) - erfc(-lo / s))
    } else {
        1.0 - 0.5 * (erfc(-lo / s) + erfc(hi / s))
    };
    p.clamp(0.0, 1.0)
}

fn check_sigma0(sigma0: &DMatrix<f64>, spectrum: &Spectrum) -> Result<()> {
    let d = spectrum.dim();
    if sigma0.nrows() != d {
        return Err(ExitlabError::InvalidInput(format!(
            "sigma(0) has {} rows, spectrum has dimension {d}",
            sigma0.nrows()
        )));
    }
    if sigma0.ncols() < d {
        return Err(ExitlabError::RankDeficient(format!(
            "sigma(0) is {}x{}; needs n >= d columns",
            d,
            sigma0.ncols()
        )));
    }
    check_full_row_rank(sigma0)
}

/// Surjectivity test: smallest singular value above `1e-10 ×` the largest.
pub fn check_full_row_rank(sigma0: &DMatrix<f64>) -> Result<()> {
    let sv = sigma0.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if sv.len() < sigma0.nrows() || !(max > 0.0) || min <= 1e-10 * max {
        return Err(ExitlabError::RankDeficient(format!(
            "sigma(0) not surjective (singular values min {min:e}, max {max:e})"
        )));
    }
    Ok(())
}

fn covariance_entries(sigma0: &DMatrix<f64>, spectrum: &Spectrum, time_factor: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = spectrum.dim();
    let lam = spectrum.lambdas();
    let mut c = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..=j {
            let dot: f64 = (0..sigma0.ncols()).map(|l| sigma0[(j, l)] * sigma0[(k, l)]).sum();
            let rate = lam[j] + lam[k];
            let v = dot * time_factor(rate) / rate;
            c[(j, k)] = v;
            c[(k, j)] = v;
        }
    }
    c
}

/// Limiting covariance `C₀^{jk} = Σ_l σʲ_l(0)σᵏ_l(0)/(λ_j + λ_k)` and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct LimitCovariance {
    matrix: DMatrix<f64>,
    cholesky_factor: DMatrix<f64>,
}

impl LimitCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky_factor
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Leading `k × k` block.
    pub fn leading_block(&self, k: usize) -> DMatrix<f64> {
        self.matrix.view((0, 0), (k, k)).into_owned()
    }
}

pub fn limit_covariance(sigma0: &DMatrix<f64>, spectrum: &Spectrum) -> Result<LimitCovariance> {
    check_sigma0(sigma0, spectrum)?;
    let matrix = covariance_entries(sigma0, spectrum, |_| 1.0);
    let chol = matrix
        .clone()
        .cholesky()
        .ok_or_else(|| ExitlabError::RankDeficient("C0 is not positive definite".into()))?;
    Ok(LimitCovariance { cholesky_factor: chol.l(), matrix })
}

/// Covariance of `Z_T`: `Σ_l σʲ_l σᵏ_l (1 − e^{−(λ_j+λ_k)T})/(λ_j+λ_k)`.
pub fn finite_time_covariance(sigma0: &DMatrix<f64>, spectrum: &Spectrum, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(ExitlabError::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    if sigma0.nrows() != spectrum.dim() {
        return Err(ExitlabError::InvalidInput(format!(
            "sigma(0) has {} rows, spectrum has dimension {}",
            sigma0.nrows(),
            spectrum.dim()
        )));
    }
    Ok(covariance_entries(sigma0, spectrum, |rate| -(-rate * t).exp_m1()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiBranch {
    /// `α < 1/λ_i`, `i ≤ d`.
    Interior,
    /// `α = 1/λ_i`.
    Boundary,
    /// `i = d + 1`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPrediction {
    pub value: f64,
    pub prefactor: f64,
    pub marginal_density: f64,
    pub boundary_probability: f64,
    pub branch: PsiBranch,
    pub critical_index: usize,
}

fn check_psi_inputs(spectrum: &Spectrum, c0: &LimitCovariance, bx: &BoxDomain, x: &[f64]) -> Result<()> {
    let d = spectrum.dim();
    if c0.dim() != d || bx.dim() != d || x.len() != d {
        return Err(ExitlabError::InvalidInput(format!(
            "dimension mismatch: spectrum {d}, C0 {}, box {}, x {}",
            c0.dim(),
            bx.dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ExitlabError::InvalidInput("x must be finite".into()));
    }
    Ok(())
}

fn branch_of(spectrum: &Spectrum, alpha: f64) -> (usize, PsiBranch) {
    let i = critical_index(spectrum, alpha);
    let branch = if i > spectrum.dim() {
        PsiBranch::Full
    } else if is_boundary_alpha(spectrum, alpha) {
        PsiBranch::Boundary
    } else {
        PsiBranch::Interior
    };
    (i, branch)
}

fn prefactor(spectrum: &Spectrum, bx: &BoxDomain, r0: f64, count: usize) -> f64 {
    (0..count)
        .map(|j| bx.width(j) * (-spectrum.lambdas()[j] * r0).exp())
        .product()
}

/// The interval `e^{−λ_i r0}[L₋ⁱ, L₊ⁱ] − xⁱ` (0-based coordinate `k = i − 1`).
fn boundary_interval(spectrum: &Spectrum, bx: &BoxDomain, r0: f64, x: &[f64], k: usize) -> (f64, f64) {
    let scale = (-spectrum.lambdas()[k] * r0).exp();
    (scale * bx.lower()[k] - x[k], scale * bx.upper()[k] - x[k])
}

/// Closed-form `ψ_{α, r0, box}(x)`.
pub fn psi_value(
    spectrum: &Spectrum,
    c0: &LimitCovariance,
    bx: &BoxDomain,
    r0: f64,
    alpha: f64,
    x: &[f64],
) -> Result<PsiPrediction> {
    check_psi_inputs(spectrum, c0, bx, x)?;
    let d = spectrum.dim();
    let (i, branch) = branch_of(spectrum, alpha);
    let k = i - 1;
    let pre = prefactor(spectrum, bx, r0, k.min(d));
    let marginal_density = if k == 0 {
        1.0
    } else {
        gaussian_density(&c0.leading_block(k), &x[..k])?
    };
    let boundary_probability = match branch {
        PsiBranch::Boundary => {
            let (a, b) = boundary_interval(spectrum, bx, r0, x, k);
            let (mean, var) = conditional_moments(c0.matrix(), k, &x[..k].iter().map(|v| -v).collect::<Vec<_>>())?;
            normal_interval_probability(mean, var.sqrt(), a, b)
        }
        _ => 1.0,
    };
    Ok(PsiPrediction {
        value: pre * marginal_density * boundary_probability,
        prefactor: pre,
        marginal_density,
        boundary_probability,
        branch,
        critical_index: i,
    })
}

/// Mean and variance of coordinate `k` given the first `k` coordinates equal `given`.
fn conditional_moments(c: &DMatrix<f64>, k: usize, given: &[f64]) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((0.0, c[(0, 0)]));
    }
    let block = c.view((0, 0), (k, k)).into_owned();
    let cross = c.view((k, 0), (1, k)).transpose();
    let chol = block
        .cholesky()
        .ok_or_else(|| ExitlabError::RankDeficient("leading block of C0 not SPD".into()))?;
    let w = chol.solve(&cross);
    let mean: f64 = w.iter().zip(given).map(|(a, b)| a * b).sum();
    let var = c[(k, k)] - w.dot(&cross);
    if !(var > 0.0) {
        return Err(ExitlabError::RankDeficient("non-positive conditional variance".into()));
    }
    Ok((mean, var))
}

/// Monte Carlo evaluation of the defining integral of `ψ`.
///
/// The free block `z^{≥i}` is drawn from its marginal `N(0, C₀[≥i,≥i])` and
/// weighted by `φ_{C₀}(−x^{<i}, z^{≥i}) / q(z^{≥i})`; the weight is bounded
/// so the estimator has finite variance. Returns `(estimate, stderr)`.
pub fn psi_mc_oracle(
    spectrum: &Spectrum,
    c0: &LimitCovariance,
    bx: &BoxDomain,
    r0: f64,
    alpha: f64,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_psi_inputs(spectrum, c0, bx, x)?;
    if n_samples < 10_000 {
        return Err(ExitlabError::InvalidInput(format!("n_samples must be >= 1e4, got {n_samples}")));
    }
    let d = spectrum.dim();
    let (i, branch) = branch_of(spectrum, alpha);
    let k = i - 1;
    let full = Mvn::new(c0.matrix())?;
    if branch == PsiBranch::Full {
        let pre = prefactor(spectrum, bx, r0, d);
        return Ok((pre * full.density(x), 0.0));
    }
    let pre = prefactor(spectrum, bx, r0, k);
    let free_dim = d - k;
    let free_cov = c0.matrix().view((k, k), (free_dim, free_dim)).into_owned();
    let proposal = Mvn::new(&free_cov)?;
    let interval = (branch == PsiBranch::Boundary).then(|| boundary_interval(spectrum, bx, r0, x, k));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = x[..k].iter().map(|v| -v).chain(std::iter::repeat_n(0.0, free_dim)).collect();
    let mut xi = vec![0.0; free_dim];
    let mut w = vec![0.0; free_dim];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let mut outside = 0usize;
    for _ in 0..n_samples {
        proposal.sample_into(&mut rng, &mut xi, &mut w);
        let inside = interval.is_none_or(|(a, b)| w[0] >= a && w[0] <= b);
        outside += usize::from(!inside);
        let weight = if inside {
            z[k..].copy_from_slice(&w);
            (full.log_density(&z) - proposal.log_density(&w)).exp()
        } else {
            0.0
        };
        sum += weight;
        sum_sq += weight * weight;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let mut se = (var / n).sqrt();
    if interval.is_some() && (outside == 0 || outside == n_samples) {
        // one outcome never observed: the sample variance says nothing about
        // its mass, so fall back to the rule-of-three bound 3/n
        se = se.max(mean.max(1.0) * 3.0 / n);
    }
    Ok((pre * mean, pre * se))
}

/// `φ± = ψ_{α, r0 − T±}`; returns `(φ₋, φ₊)`.
pub fn phi_bounds(
    spectrum: &Spectrum,
    c0: &LimitCovariance,
    bx: &BoxDomain,
    r0: f64,
    alpha: f64,
    x: &[f64],
    t_minus: f64,
    t_plus: f64,
) -> Result<(f64, f64)> {
    if !(t_minus >= 0.0 && t_minus <= t_plus) {
        return Err(ExitlabError::InvalidInput(format!(
            "need 0 <= T- <= T+, got T- = {t_minus}, T+ = {t_plus}"
        )));
    }
    let lo = psi_value(spectrum, c0, bx, r0 - t_minus, alpha, x)?.value;
    let hi = psi_value(spectrum, c0, bx, r0 - t_plus, alpha, x)?.value;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    fn sp(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    fn one_d() -> (Spectrum, LimitCovariance, BoxDomain) {
        let s = sp(&[1.0]);
        let c0 = limit_covariance(&DMatrix::from_element(1, 1, 1.0), &s).unwrap();
        (s, c0, BoxDomain::symmetric(1.0, 1).unwrap())
    }

    /// erf by its Maclaurin series; independent of the erfc used in the crate.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / PI.sqrt() * sum
    }

    /// Trapezoid rule on `[a, b]`.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn limit_covariance_examples() {
        let (_, c0, _) = one_d();
        assert_relative_eq!(c0.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        let s = sp(&[1.0, 0.5]);
        let c = limit_covariance(&DMatrix::identity(2, 2), &s).unwrap();
        assert_relative_eq!(c.matrix()[(0, 0)], 0.5);
        assert_relative_eq!(c.matrix()[(1, 1)], 1.0);
        assert_eq!(c.matrix()[(0, 1)], 0.0);
        // rows (1,0),(1,1): C00 = 1/2, C01 = 1/(1.5), C11 = 2/1
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let c = limit_covariance(&sigma, &s).unwrap();
        assert_relative_eq!(c.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.matrix()[(0, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.matrix()[(1, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.matrix()[(1, 1)], 2.0, epsilon = 1e-15);
        let l = c.cholesky_factor();
        assert_relative_eq!((l * l.transpose() - c.matrix()).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient_sigma_rejected() {
        let s = sp(&[1.0, 0.5]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(limit_covariance(&sigma, &s), Err(ExitlabError::RankDeficient(_))));
        let wide = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(limit_covariance(&wide, &s).is_ok());
    }

    #[test]
    fn finite_time_covariance_examples() {
        let s = sp(&[1.0, 0.5]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(finite_time_covariance(&sigma, &s, 0.0).unwrap().amax(), 0.0);
        let one = sp(&[1.0]);
        let c = finite_time_covariance(&DMatrix::from_element(1, 1, 1.0), &one, 0.5 * LN_2).unwrap();
        assert_relative_eq!(c[(0, 0)], 0.25, epsilon = 1e-15);
        let c0 = limit_covariance(&sigma, &s).unwrap();
        let inf_norm = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        for t in [1.0, 2.0, 4.0, 8.0] {
            let ct = finite_time_covariance(&sigma, &s, t).unwrap();
            let lhs = inf_norm(&(&ct - c0.matrix()));
            let rhs = inf_norm(c0.matrix()) * (-2.0 * 0.5 * t).exp();
            assert!(lhs <= rhs, "T={t}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn finite_time_covariance_monotone_for_diagonal_sigma() {
        let s = sp(&[2.0, 0.7, 0.3]);
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5, 2.0]));
        let mut prev = finite_time_covariance(&sigma, &s, 0.0).unwrap();
        for k in 1..50 {
            let ct = finite_time_covariance(&sigma, &s, 0.2 * k as f64).unwrap();
            assert!(ct.iter().zip(prev.iter()).all(|(a, b)| *a >= *b));
            prev = ct;
        }
    }

    #[test]
    fn gaussian_density_examples() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(gaussian_density(&one, &[0.0]).unwrap(), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        let half = DMatrix::from_element(1, 1, 0.5);
        assert_relative_eq!(gaussian_density(&half, &[1.0]).unwrap(), (-1.0f64).exp() / PI.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(gaussian_density(&half, &[1.0]).unwrap(), 0.207_553_748_710_297_8, epsilon = 1e-14);
        let sd = 0.5f64.sqrt();
        let mass = trapezoid(|z| gaussian_density(&half, &[z]).unwrap(), -8.0 * sd, 8.0 * sd, 4000);
        assert!((mass - 1.0).abs() < 1e-6);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(gaussian_density(&bad, &[0.0, 0.0]), Err(ExitlabError::RankDeficient(_))));
    }

    #[test]
    fn interval_probability_matches_series_oracle() {
        for &x in &[0.1, 0.5, 1.0, 1.7, 2.5] {
            let p = normal_interval_probability(0.0, 1.0 / std::f64::consts::SQRT_2, -x, x);
            assert_relative_eq!(p, erf_series(x), max_relative = 1e-14);
        }
        // deep tail keeps relative precision
        let p = normal_interval_probability(0.0, 1.0, 8.0, 9.0);
        let q = 0.5 * (erfc(8.0 / std::f64::consts::SQRT_2) - erfc(9.0 / std::f64::consts::SQRT_2));
        assert_relative_eq!(p, q, max_relative = 1e-14);
        assert!(p > 0.0);
        assert_eq!(normal_interval_probability(0.0, 1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn psi_one_dimensional_examples() {
        let (s, c0, bx) = one_d();
        // interior i = 2 = d+1: 2 × density of N(0, 1/2) at 0, matches quadrature oracle
        let p = psi_value(&s, &c0, &bx, 0.0, 1.5, &[0.0]).unwrap();
        assert_eq!(p.branch, PsiBranch::Full);
        // (L+ − L−)/√(2π det C0) with C0 = 1/2
        assert_relative_eq!(p.value, 2.0 / (2.0 * PI * 0.5).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p.value, 2.0 / PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p.value, std::f64::consts::FRAC_2_SQRT_PI, max_relative = 1e-14);

        let p = psi_value(&s, &c0, &bx, 0.0, 0.0, &[0.0]).unwrap();
        assert_eq!(p.branch, PsiBranch::Interior);
        assert_eq!(p.value, 1.0);

        let p = psi_value(&s, &c0, &bx, 0.0, 1.0, &[0.0]).unwrap();
        assert_eq!(p.branch, PsiBranch::Boundary);
        assert_relative_eq!(p.value, erf_series(1.0), max_relative = 1e-14);
        assert_relative_eq!(p.value, 0.842_700_792_949_714_9, max_relative = 1e-14);
    }

    #[test]
    fn psi_decomposition_and_positivity() {
        let s = sp(&[1.3, 0.8, 0.4]);
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.1, 0.9, 0.3, 0.0, 0.4, 1.1]);
        let c0 = limit_covariance(&sigma, &s).unwrap();
        let bx = BoxDomain::new(vec![-0.5, -0.7, -0.3], vec![0.6, 0.4, 0.8], 1.0).unwrap();
        for &alpha in &[0.0, 0.5, 1.0 / 0.8, 1.0, 2.0, 3.0] {
            for x in [[0.0, 0.0, 0.0], [0.3, -1.2, 2.0], [-4.0, 0.1, 0.2]] {
                let p = psi_value(&s, &c0, &bx, 0.2, alpha, &x).unwrap();
                assert_relative_eq!(p.value, p.prefactor * p.marginal_density * p.boundary_probability, max_relative = 1e-12);
                assert!(p.value > 0.0);
            }
        }
    }

    #[test]
    fn psi_oracle_one_dimensional_examples() {
        let (s, c0, bx) = one_d();
        let (est, se) = psi_mc_oracle(&s, &c0, &bx, 0.0, 1.5, &[0.0], 10_000, 1).unwrap();
        assert_eq!(se, 0.0);
        assert_relative_eq!(est, 2.0 / PI.sqrt(), max_relative = 1e-14);
        let (est, se) = psi_mc_oracle(&s, &c0, &bx, 0.0, 1.0, &[0.0], 100_000, 2).unwrap();
        assert!((est - erf_series(1.0)).abs() <= 3.0 * se, "{est} ± {se}");
        assert!(psi_mc_oracle(&s, &c0, &bx, 0.0, 1.0, &[0.0], 100, 2).is_err());
    }

    #[test]
    fn psi_is_even_for_centered_boxes() {
        let s = sp(&[1.0, 0.6]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let c0 = limit_covariance(&sigma, &s).unwrap();
        let bx = BoxDomain::symmetric(0.5, 2).unwrap();
        let x = [0.7, -0.4];
        let mx = [-0.7, 0.4];
        for alpha in [1.2, 1.0, 1.0 / 0.6, 2.5] {
            let a = psi_value(&s, &c0, &bx, 0.1, alpha, &x).unwrap().value;
            let b = psi_value(&s, &c0, &bx, 0.1, alpha, &mx).unwrap().value;
            assert_relative_eq!(a, b, max_relative = 1e-13);
            let (oa, sa) = psi_mc_oracle(&s, &c0, &bx, 0.1, alpha, &x, 200_000, 11).unwrap();
            let (ob, sb) = psi_mc_oracle(&s, &c0, &bx, 0.1, alpha, &mx, 200_000, 12).unwrap();
            assert!((oa - ob).abs() <= 3.0 * (sa * sa + sb * sb).sqrt() + 1e-12 * a);
        }
    }

    #[test]
    fn phi_bound_examples() {
        let (s, c0, bx) = one_d();
        let psi = psi_value(&s, &c0, &bx, 0.0, 1.5, &[0.0]).unwrap().value;
        let (lo, hi) = phi_bounds(&s, &c0, &bx, 0.0, 1.5, &[0.0], 0.0, 0.0).unwrap();
        assert_eq!((lo, hi), (psi, psi));
        let (_, hi) = phi_bounds(&s, &c0, &bx, 0.0, 1.5, &[0.0], 0.0, LN_2).unwrap();
        assert_relative_eq!(hi, 4.0 / PI.sqrt(), max_relative = 1e-14);
        let (est, _) = psi_mc_oracle(&s, &c0, &bx, -LN_2, 1.5, &[0.0], 10_000, 3).unwrap();
        assert_relative_eq!(hi, est, max_relative = 1e-14);
        assert!(phi_bounds(&s, &c0, &bx, 0.0, 1.5, &[0.0], 1.0, 0.5).is_err());
    }

    #[test]
    fn phi_monotone_on_grid() {
        let s = sp(&[1.0, 0.5]);
        let c0 = limit_covariance(&DMatrix::identity(2, 2), &s).unwrap();
        let bx = BoxDomain::symmetric(1.0, 2).unwrap();
        for alpha in [0.5, 1.0, 1.2, 2.0, 2.5, 3.0] {
            for tm in [0.0, 0.3, 0.7] {
                for dt in [0.0, 0.2, 1.0] {
                    for x in [[0.0, 0.0], [0.4, -0.3]] {
                        let i = critical_index(&s, alpha);
                        let boundary_at_zero = is_boundary_alpha(&s, alpha) && x == [0.0, 0.0];
                        if i < 2 && !boundary_at_zero {
                            continue;
                        }
                        let (lo, hi) = phi_bounds(&s, &c0, &bx, 0.1, alpha, &x, tm, tm + dt).unwrap();
                        assert!(lo <= hi * (1.0 + 1e-14), "alpha {alpha} x {x:?}: {lo} > {hi}");
                    }
                }
            }
        }
    }

    /// Dense-quadrature check of the block marginalization identity behind
    /// the closed form, for d = 2 and d = 3.
    #[test]
    fn marginalization_identity_against_quadrature() {
        let cases: Vec<DMatrix<f64>> = vec![
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 1.0]),
            DMatrix::from_row_slice(3, 3, &[0.6, 0.1, -0.15, 0.1, 0.9, 0.2, -0.15, 0.2, 1.3]),
        ];
        for c in cases {
            let d = c.nrows();
            let inv = c.clone().try_inverse().unwrap();
            // split after the first coordinate (i = 2)
            let x_lead = [0.35];
            {
                let k = 1;
                let free = d - k;
                // ∫ exp(−½ zᵀC⁻¹z) dz^{≥i} at z^{<i} = −x^{<i}, tensor trapezoid on [−7,7]^free
                let n = if free == 1 { 1400 } else { 280 };
                let (a, b) = (-7.0, 7.0);
                let h = (b - a) / n as f64;
                let wt = |m: usize| if m == 0 || m == n { 0.5 } else { 1.0 };
                let integrand = |w: &[f64]| {
                    let mut z = vec![-x_lead[0]];
                    z.extend_from_slice(w);
                    let q = (0..d).map(|r| (0..d).map(|s| z[r] * inv[(r, s)] * z[s]).sum::<f64>()).sum::<f64>();
                    (-0.5 * q).exp()
                };
                let quad: f64 = if free == 1 {
                    (0..=n).map(|m| wt(m) * integrand(&[a + m as f64 * h])).sum::<f64>() * h
                } else {
                    let mut acc = 0.0;
                    for m1 in 0..=n {
                        for m2 in 0..=n {
                            acc += wt(m1) * wt(m2) * integrand(&[a + m1 as f64 * h, a + m2 as f64 * h]);
                        }
                    }
                    acc * h * h
                };
                let inv_free = inv.view((k, k), (free, free)).into_owned();
                let lead = c.view((0, 0), (k, k)).into_owned().try_inverse().unwrap();
                let closed = (2.0 * PI).powf(free as f64 / 2.0) / inv_free.determinant().sqrt()
                    * (-0.5 * x_lead[0] * lead[(0, 0)] * x_lead[0]).exp();
                assert_relative_eq!(quad, closed, max_relative = 1e-6);
            }
        }
    }
}
