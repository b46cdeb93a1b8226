use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::dynamics::{ConjugateFieldModel, Domain, DomainProbe, NoiseModel};
use crate::error::{ExitlabError, Result};

/// Largest time step accepted by [`PathConfig`].
pub const MAX_DT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Stop at `min(exit, threshold)`.
    TailIndicator,
    /// Run to exit, failing at `t_cap`.
    FullExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub t_cap: f64,
    pub mode: PathMode,
    /// Each Brownian increment is the normalized sum of this many standard
    /// normals. A run at `dt` with 2 draws per step and a run at `dt/2` with
    /// 1 draw per step then consume the same normals and share one Brownian
    /// path.
    pub draws_per_step: u32,
}

impl PathConfig {
    pub fn new(dt: f64, t_cap: f64, mode: PathMode) -> Result<Self> {
        let cfg = PathConfig { dt, t_cap, mode, draws_per_step: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tail(dt: f64, t_cap: f64) -> Result<Self> {
        PathConfig::new(dt, t_cap, PathMode::TailIndicator)
    }

    pub fn full_exit(dt: f64, t_cap: f64) -> Result<Self> {
        PathConfig::new(dt, t_cap, PathMode::FullExit)
    }

    pub fn with_draws_per_step(mut self, k: u32) -> Result<Self> {
        self.draws_per_step = k;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(ExitlabError::InvalidInput(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_cap >= self.dt) {
            return Err(ExitlabError::InvalidInput(format!("t_cap {} smaller than dt {}", self.t_cap, self.dt)));
        }
        if self.draws_per_step == 0 {
            return Err(ExitlabError::InvalidInput("draws_per_step must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of grid steps whose time does not exceed `t`.
    pub fn steps_until(&self, t: f64) -> u64 {
        if t <= 0.0 {
            0
        } else {
            (t / self.dt + 1e-9).floor() as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitObservation {
    /// `τ > threshold` (tail mode); in full-exit mode always false.
    pub survived: bool,
    pub tau: Option<f64>,
    pub exit_state: Option<Vec<f64>>,
    pub exit_y: Option<Vec<f64>>,
    pub steps_used: u64,
    /// The state left the conjugacy validity ball and coefficients were frozen at the radius.
    pub left_validity: bool,
}

pub(crate) enum Advance {
    /// Exited at the given step (time `step · dt`).
    Exited(u64),
    /// Reached the requested end step still inside.
    Reached,
}

/// Euler–Maruyama integrator with reusable buffers.
pub(crate) struct PathRunner<'a> {
    model: &'a ConjugateFieldModel,
    noise: &'a NoiseModel,
    probe: DomainProbe<'a>,
    dt: f64,
    noise_scale: f64,
    draws: u32,
    drift: Vec<f64>,
    eval_at: Vec<f64>,
    xi: Vec<f64>,
    xi_part: Vec<f64>,
    pub(crate) left_validity: bool,
}

impl<'a> PathRunner<'a> {
    pub(crate) fn new(
        model: &'a ConjugateFieldModel,
        noise: &'a NoiseModel,
        domain: Domain<'a>,
        epsilon: f64,
        config: &PathConfig,
    ) -> Self {
        let d = model.dim();
        let n = noise.noise_dim();
        PathRunner {
            model,
            noise,
            probe: DomainProbe::new(model, domain),
            dt: config.dt,
            noise_scale: epsilon * config.dt.sqrt(),
            draws: config.draws_per_step,
            drift: vec![0.0; d],
            eval_at: vec![0.0; d],
            xi: vec![0.0; n],
            xi_part: vec![0.0; n],
            left_validity: false,
        }
    }

    pub(crate) fn set_domain(&mut self, domain: Domain<'a>) {
        self.probe = DomainProbe::new(self.model, domain);
    }

    pub(crate) fn reset_flags(&mut self) {
        self.left_validity = false;
    }

    pub(crate) fn strictly_inside(&mut self, x: &[f64]) -> bool {
        self.probe.strictly_inside(x)
    }

    #[inline]
    fn draw(&mut self, stream: &mut RngStream) {
        if self.draws == 1 {
            stream.fill_normals(&mut self.xi);
        } else {
            self.xi.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..self.draws {
                stream.fill_normals(&mut self.xi_part);
                self.xi.iter_mut().zip(&self.xi_part).for_each(|(a, b)| *a += b);
            }
            let s = 1.0 / (self.draws as f64).sqrt();
            self.xi.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// One Euler–Maruyama step of size `h` (noise scaled by `ε√h`).
    #[inline]
    pub(crate) fn step(&mut self, x: &mut [f64], h: f64, noise_scale: f64, stream: &mut RngStream) {
        if self.model.clamp_to_validity(x, &mut self.eval_at) {
            self.left_validity = true;
        }
        self.model.drift_into(&self.eval_at, &mut self.drift);
        if noise_scale != 0.0 {
            self.draw(stream);
        }
        for (xj, bj) in x.iter_mut().zip(&self.drift) {
            *xj += bj * h;
        }
        if noise_scale != 0.0 {
            self.noise.apply_into(&self.eval_at, &self.xi, noise_scale, x);
        }
    }

    /// Steps `from_step + 1 ..= to_step`, testing the domain after each.
    pub(crate) fn advance(&mut self, x: &mut [f64], from_step: u64, to_step: u64, stream: &mut RngStream) -> Advance {
        let (dt, scale) = (self.dt, self.noise_scale);
        for k in (from_step + 1)..=to_step {
            self.step(x, dt, scale, stream);
            if !self.probe.inside(x) {
                return Advance::Exited(k);
            }
        }
        Advance::Reached
    }
}

fn check_dims(model: &ConjugateFieldModel, noise: &NoiseModel, domain: Domain<'_>, x0: &[f64]) -> Result<()> {
    let d = model.dim();
    if noise.dim() != d || domain.dim() != d || x0.len() != d {
        return Err(ExitlabError::InvalidInput(format!(
            "dimension mismatch: model {d}, noise {}, domain {}, x0 {}",
            noise.dim(),
            domain.dim(),
            x0.len()
        )));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(ExitlabError::InvalidInput(format!("epsilon must lie in [0,1), got {epsilon}")));
    }
    Ok(())
}

/// Simulates `dX = b(X)dt + εσ(X)dW` from `x0` until exit from `domain`.
///
/// Exit is recorded at the first grid time outside the domain. In tail mode
/// the path stops after the last grid time `≤ threshold`.
pub fn simulate_path(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    domain: Domain<'_>,
    x0: &[f64],
    epsilon: f64,
    threshold: f64,
    config: &PathConfig,
    stream: &mut RngStream,
) -> Result<ExitObservation> {
    check_dims(model, noise, domain, x0)?;
    check_epsilon(epsilon)?;
    config.validate()?;
    let mut runner = PathRunner::new(model, noise, domain, epsilon, config);
    let mut x = x0.to_vec();
    let exit_obs = |runner: &PathRunner<'_>, x: &[f64], step: u64, tau: f64| {
        let mut y = vec![0.0; x.len()];
        model.forward(x, &mut y);
        ExitObservation {
            survived: false,
            tau: Some(tau),
            exit_state: Some(x.to_vec()),
            exit_y: Some(y),
            steps_used: step,
            left_validity: runner.left_validity,
        }
    };
    if !runner.strictly_inside(&x) {
        return Ok(exit_obs(&runner, &x, 0, 0.0));
    }
    let end = match config.mode {
        PathMode::TailIndicator => config.steps_until(threshold),
        PathMode::FullExit => (config.t_cap / config.dt).ceil() as u64,
    };
    match runner.advance(&mut x, 0, end, stream) {
        Advance::Exited(k) => Ok(exit_obs(&runner, &x, k, k as f64 * config.dt)),
        Advance::Reached => match config.mode {
            PathMode::TailIndicator => Ok(ExitObservation {
                survived: true,
                tau: None,
                exit_state: None,
                exit_y: None,
                steps_used: end,
                left_validity: runner.left_validity,
            }),
            PathMode::FullExit => Err(ExitlabError::CapReached { t_cap: config.t_cap }),
        },
    }
}

/// Rescaled fluctuation `U_T^j = e^{−λ_j T} f(X_T)^j/ε − y0^j` for
/// `X₀ = f⁻¹(ε y0)`; no exit test is applied.
pub fn simulate_conjugated_u(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    y0: &[f64],
    epsilon: f64,
    t: f64,
    config: &PathConfig,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let d = model.dim();
    if noise.dim() != d || y0.len() != d {
        return Err(ExitlabError::InvalidInput("dimension mismatch between model, noise and y0".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExitlabError::InvalidInput(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if !(t >= 0.0) {
        return Err(ExitlabError::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    config.validate()?;
    if t == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let ey: Vec<f64> = y0.iter().map(|v| epsilon * v).collect();
    let mut x = vec![0.0; d];
    model.inverse(&ey, &mut x);
    if !model.within_validity(&x) {
        return Err(ExitlabError::OutsideValidity {
            norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            radius: model.validity_radius(),
        });
    }
    let x = simulate_trajectory(model, noise, &x, epsilon, t, config, stream)?.pop().expect("path has a start");
    let mut y = vec![0.0; d];
    model.forward(&x, &mut y);
    Ok(y
        .iter()
        .zip(y0)
        .zip(model.spectrum().lambdas())
        .map(|((yj, y0j), l)| (-l * t).exp() * yj / epsilon - y0j)
        .collect())
}

/// The Euler–Maruyama path from `x0` on the grid `0, dt, …, t` (last step
/// shortened to land on `t`), without any exit test.
pub fn simulate_trajectory(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    x0: &[f64],
    epsilon: f64,
    t: f64,
    config: &PathConfig,
    stream: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let d = model.dim();
    if noise.dim() != d || x0.len() != d {
        return Err(ExitlabError::InvalidInput("dimension mismatch between model, noise and x0".into()));
    }
    check_epsilon(epsilon)?;
    config.validate()?;
    if !(t >= 0.0) {
        return Err(ExitlabError::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    let unbounded = crate::dynamics::SmoothDomain::ball(f64::MAX, d)?;
    let mut runner = PathRunner::new(model, noise, Domain::Smooth(&unbounded), epsilon, config);
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    let n = if t == 0.0 { 0 } else { (t / config.dt - 1e-9).ceil().max(1.0) as u64 };
    for k in 0..n {
        let h = if k + 1 == n { t - config.dt * (n - 1) as f64 } else { config.dt };
        runner.step(&mut x, h, epsilon * h.sqrt(), stream);
        out.push(x.clone());
    }
    Ok(out)
}
