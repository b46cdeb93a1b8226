use serde::{Deserialize, Serialize};

use crate::error::{ExitlabError, Result};

/// Box `∏[L₋ʲ, L₊ʲ]` in conjugated coordinates `y = f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    l0_cap: f64,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, l0_cap: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(ExitlabError::InvalidInput(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
                return Err(ExitlabError::InvalidInput(format!(
                    "box side {}: need L- < 0 < L+, got [{lo}, {hi}]",
                    j + 1
                )));
            }
            if lo.abs() > l0_cap || hi.abs() > l0_cap {
                return Err(ExitlabError::InvalidInput(format!(
                    "box side {}: |L±| exceeds L0 cap {l0_cap}",
                    j + 1
                )));
            }
        }
        Ok(BoxDomain { lower, upper, l0_cap })
    }

    /// Symmetric box `[−L, L]^d` with cap `L`.
    pub fn symmetric(half_width: f64, dim: usize) -> Result<Self> {
        BoxDomain::new(vec![-half_width; dim], vec![half_width; dim], half_width)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn l0_cap(&self) -> f64 {
        self.l0_cap
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    /// Closed-box membership of conjugated coordinates.
    #[inline]
    pub fn contains_y(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    pub fn on_boundary_y(&self, y: &[f64]) -> bool {
        self.contains_y(y)
            && y.iter().zip(self.lower.iter().zip(&self.upper)).any(|(&v, (&lo, &hi))| {
                (v - lo).abs() <= 1e-12 * lo.abs().max(1.0) || (v - hi).abs() <= 1e-12 * hi.abs().max(1.0)
            })
    }

    pub fn max_abs_side(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Shape of a smooth domain `{g < 0}` given by a level function with
/// analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum LevelSet {
    /// `|x − center| − radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// `Σ (x_j / a_j)² − 1`.
    Ellipsoid { semi_axes: Vec<f64> },
    /// `⟨normal, x⟩ − offset`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

/// Domain `{x : g(x) < 0}` containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothDomain {
    level: LevelSet,
    dim: usize,
}

impl SmoothDomain {
    pub fn new(level: LevelSet) -> Result<Self> {
        let dim = match &level {
            LevelSet::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(ExitlabError::InvalidInput(format!("ball radius {radius} must be > 0")));
                }
                center.len()
            }
            LevelSet::Ellipsoid { semi_axes } => {
                if semi_axes.iter().any(|a| !(*a > 0.0)) {
                    return Err(ExitlabError::InvalidInput("ellipsoid semi-axes must be > 0".into()));
                }
                semi_axes.len()
            }
            LevelSet::HalfSpace { normal, .. } => {
                if normal.iter().all(|v| *v == 0.0) {
                    return Err(ExitlabError::InvalidInput("half-space normal is zero".into()));
                }
                normal.len()
            }
        };
        if dim == 0 {
            return Err(ExitlabError::InvalidInput("smooth domain has dimension 0".into()));
        }
        let dom = SmoothDomain { level, dim };
        if !(dom.level_value(&vec![0.0; dim]) < 0.0) {
            return Err(ExitlabError::InvalidInput("origin is not inside the smooth domain".into()));
        }
        Ok(dom)
    }

    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        SmoothDomain::new(LevelSet::Ball { center: vec![0.0; dim], radius })
    }

    /// Open interval `(−r, r)` as a 1-d ball.
    pub fn interval(radius: f64) -> Result<Self> {
        SmoothDomain::ball(radius, 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> &LevelSet {
        &self.level
    }

    #[inline]
    pub fn level_value(&self, x: &[f64]) -> f64 {
        match &self.level {
            LevelSet::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() - radius
            }
            LevelSet::Ellipsoid { semi_axes } => {
                x.iter().zip(semi_axes).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() - 1.0
            }
            LevelSet::HalfSpace { normal, offset } => {
                x.iter().zip(normal).map(|(a, n)| a * n).sum::<f64>() - offset
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.level {
            LevelSet::Ball { center, .. } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if r == 0.0 {
                    return vec![0.0; self.dim];
                }
                x.iter().zip(center).map(|(a, c)| (a - c) / r).collect()
            }
            LevelSet::Ellipsoid { semi_axes } => {
                x.iter().zip(semi_axes).map(|(a, s)| 2.0 * a / (s * s)).collect()
            }
            LevelSet::HalfSpace { normal, .. } => normal.clone(),
        }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.level_value(x) < 0.0
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.level_value(x).abs() <= 1e-12
    }

    /// Boundary point along the ray `s·u`, `s > 0`, for star-shaped domains.
    /// Returns `None` if the ray stays inside up to `max_radius`.
    pub fn boundary_along(&self, direction: &[f64], max_radius: f64) -> Option<Vec<f64>> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let u: Vec<f64> = direction.iter().map(|v| v / norm).collect();
        let at = |s: f64| -> Vec<f64> { u.iter().map(|v| v * s).collect() };
        if self.contains(&at(max_radius)) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, max_radius);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.contains(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        Some(at(0.5 * (lo + hi)))
    }

    /// Largest distance from the origin to the boundary over the given
    /// directions, capped at `max_radius`.
    pub fn outer_radius(&self, max_radius: f64) -> f64 {
        sphere_directions(self.dim, 64)
            .iter()
            .map(|u| {
                self.boundary_along(u, max_radius)
                    .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .unwrap_or(max_radius)
            })
            .fold(0.0, f64::max)
    }
}

/// Exit region: either a conjugated box or a smooth level-set domain.
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    Box(&'a BoxDomain),
    Smooth(&'a SmoothDomain),
}

impl<'a> From<&'a BoxDomain> for Domain<'a> {
    fn from(b: &'a BoxDomain) -> Self {
        Domain::Box(b)
    }
}

impl<'a> From<&'a SmoothDomain> for Domain<'a> {
    fn from(s: &'a SmoothDomain) -> Self {
        Domain::Smooth(s)
    }
}

impl Domain<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box(b) => b.dim(),
            Domain::Smooth(s) => s.dim(),
        }
    }
}

/// Deterministic directions on the unit sphere in `R^dim`.
///
/// `d = 1`: `±1`. `d = 2`: `n` equally spaced angles starting at 0, so the
/// coordinate axes are included whenever `4 | n`. `d ≥ 3`: the `±e_j` axes
/// followed by a Fibonacci-type lattice built from the Halton sequence.
pub fn sphere_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for j in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[j] = s;
                    out.push(e);
                }
            }
            // Gaussian-quantile lattice normalized to the sphere.
            const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
            use statrs::distribution::ContinuousCDF;
            for k in 1..=(n * dim) as u64 {
                let v: Vec<f64> = (0..dim)
                    .map(|j| normal.inverse_cdf(halton(k, PRIMES[j % PRIMES.len()])))
                    .collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    out.push(v.iter().map(|a| a / norm).collect());
                }
            }
            out
        }
    }
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}
