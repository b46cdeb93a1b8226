use super::domain::{sphere_directions, BoxDomain, Domain, SmoothDomain};
use super::model::{norm_sq, ConjugateFieldModel};
use crate::error::{ExitlabError, Result};

/// Default number of lattice points per box-face dimension.
pub const DEFAULT_FACE_POINTS: usize = 64;

/// Step size and horizon for deterministic flow queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    /// `None` selects `10/λ_d · ln(diam/|x0|)`.
    pub t_cap: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { dt: 1e-3, t_cap: None }
    }
}

/// Scratch buffers for one RK4 integrator.
pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(d: usize) -> Self {
        Rk4 { k1: vec![0.0; d], k2: vec![0.0; d], k3: vec![0.0; d], k4: vec![0.0; d], tmp: vec![0.0; d] }
    }

    pub(crate) fn step(&mut self, model: &ConjugateFieldModel, x: &[f64], h: f64, out: &mut [f64]) {
        model.drift_into(x, &mut self.k1);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x).zip(&self.k1) {
            *t = xi + 0.5 * h * k;
        }
        model.drift_into(&self.tmp, &mut self.k2);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x).zip(&self.k2) {
            *t = xi + 0.5 * h * k;
        }
        model.drift_into(&self.tmp, &mut self.k3);
        for ((t, xi), k) in self.tmp.iter_mut().zip(x).zip(&self.k3) {
            *t = xi + h * k;
        }
        model.drift_into(&self.tmp, &mut self.k4);
        for (j, o) in out.iter_mut().enumerate() {
            *o = x[j] + h / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
    }
}

fn outside_validity(model: &ConjugateFieldModel, x: &[f64]) -> ExitlabError {
    ExitlabError::OutsideValidity { norm: norm_sq(x).sqrt(), radius: model.validity_radius() }
}

/// RK4 approximation of `S^t x0` with fixed step `dt` (the last step is shortened to land on `t`).
pub fn flow(model: &ConjugateFieldModel, x0: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    if x0.len() != model.dim() {
        return Err(ExitlabError::InvalidInput(format!("x0 has length {}, expected {}", x0.len(), model.dim())));
    }
    if !(t >= 0.0) || !(dt > 0.0) {
        return Err(ExitlabError::InvalidInput(format!("need t >= 0 and dt > 0, got t={t}, dt={dt}")));
    }
    if !model.within_validity(x0) {
        return Err(outside_validity(model, x0));
    }
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    if dt > t {
        return Err(ExitlabError::StepTooLarge { dt, t });
    }
    let d = model.dim();
    let mut rk = Rk4::new(d);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
    for k in 0..n {
        let h = if k + 1 == n { t - dt * (n - 1) as f64 } else { dt };
        rk.step(model, &x, h, &mut next);
        if !model.within_validity(&next) {
            return Err(outside_validity(model, &next));
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// Inside/boundary classification of a state with respect to a domain.
pub(crate) struct DomainProbe<'a> {
    model: &'a ConjugateFieldModel,
    domain: Domain<'a>,
    y: Vec<f64>,
}

impl<'a> DomainProbe<'a> {
    pub(crate) fn new(model: &'a ConjugateFieldModel, domain: Domain<'a>) -> Self {
        DomainProbe { model, domain, y: vec![0.0; model.dim()] }
    }

    /// Membership in the closed box / open smooth domain. States beyond the
    /// validity radius count as outside a box.
    #[inline]
    pub(crate) fn inside(&mut self, x: &[f64]) -> bool {
        match self.domain {
            Domain::Box(b) => {
                if !self.model.within_validity(x) {
                    return false;
                }
                self.model.forward(x, &mut self.y);
                b.contains_y(&self.y)
            }
            Domain::Smooth(s) => s.contains(x),
        }
    }

    pub(crate) fn on_boundary(&mut self, x: &[f64]) -> bool {
        match self.domain {
            Domain::Box(b) => {
                self.model.forward(x, &mut self.y);
                b.on_boundary_y(&self.y)
            }
            Domain::Smooth(s) => s.on_boundary(x),
        }
    }

    /// Strict interior: inside and not on the boundary.
    pub(crate) fn strictly_inside(&mut self, x: &[f64]) -> bool {
        self.inside(x) && !self.on_boundary(x)
    }
}

/// Rough outer radius of a domain in state coordinates.
fn domain_extent(model: &ConjugateFieldModel, domain: Domain<'_>) -> f64 {
    let cap = if model.validity_radius().is_finite() { model.validity_radius() } else { 1e3 };
    match domain {
        Domain::Box(b) => {
            let d = b.dim();
            let mut corner_y = vec![0.0; d];
            let mut corner_x = vec![0.0; d];
            let mut best = 0.0f64;
            for mask in 0..(1usize << d.min(16)) {
                for (j, c) in corner_y.iter_mut().enumerate() {
                    *c = if mask >> j & 1 == 1 { b.upper()[j] } else { b.lower()[j] };
                }
                model.inverse(&corner_y, &mut corner_x);
                best = best.max(norm_sq(&corner_x).sqrt());
            }
            best.min(cap)
        }
        Domain::Smooth(s) => s.outer_radius(cap),
    }
}

/// `10/λ_d · ln(diam/|x0|)`, floored at `10/λ_d`.
pub fn default_t_cap(model: &ConjugateFieldModel, domain: Domain<'_>, x0: &[f64]) -> f64 {
    let diam = 2.0 * domain_extent(model, domain);
    let scale = norm_sq(x0).sqrt();
    let ratio = if scale > 0.0 { (diam / scale).ln() } else { 1.0 };
    10.0 / model.spectrum().smallest() * ratio.max(1.0)
}

/// First exit time `t_D(x0)` of the RK4 flow, refined by bisection on the
/// final step to a bracket of width `dt²`.
pub fn exit_time_deterministic(
    model: &ConjugateFieldModel,
    domain: Domain<'_>,
    x0: &[f64],
    opts: FlowOptions,
) -> Result<f64> {
    let d = model.dim();
    if x0.len() != d || domain.dim() != d {
        return Err(ExitlabError::InvalidInput(format!(
            "dimension mismatch: model {d}, domain {}, x0 {}",
            domain.dim(),
            x0.len()
        )));
    }
    if x0.iter().all(|v| *v == 0.0) {
        return Err(ExitlabError::InvalidInput("the origin is a fixed point and never exits".into()));
    }
    if !(opts.dt > 0.0) {
        return Err(ExitlabError::InvalidInput(format!("dt must be > 0, got {}", opts.dt)));
    }
    let mut probe = DomainProbe::new(model, domain);
    if probe.on_boundary(x0) {
        return Ok(0.0);
    }
    if !probe.inside(x0) {
        return Err(ExitlabError::InvalidInput("starting point lies outside the domain".into()));
    }
    let t_cap = opts.t_cap.unwrap_or_else(|| default_t_cap(model, domain, x0));
    exit_time_from_inside(model, &mut probe, x0, opts.dt, t_cap)
}

pub(crate) fn exit_time_from_inside(
    model: &ConjugateFieldModel,
    probe: &mut DomainProbe<'_>,
    x0: &[f64],
    dt: f64,
    t_cap: f64,
) -> Result<f64> {
    let d = model.dim();
    let mut rk = Rk4::new(d);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut t = 0.0;
    let is_box = matches!(probe.domain, Domain::Box(_));
    let mut k: u64 = 0;
    while t < t_cap {
        rk.step(model, &x, dt, &mut next);
        if !is_box && !model.within_validity(&next) {
            return Err(outside_validity(model, &next));
        }
        if !probe.inside(&next) {
            let (mut lo, mut hi) = (0.0, dt);
            let tol = dt * dt;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                rk.step(model, &x, mid, &mut next);
                if probe.inside(&next) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(t + 0.5 * (lo + hi));
        }
        std::mem::swap(&mut x, &mut next);
        k += 1;
        t = k as f64 * dt;
    }
    Err(ExitlabError::NoExit { t_cap })
}

/// Box-face lattice points in conjugated coordinates, mapped back by `f⁻¹`.
pub fn box_boundary_samples(model: &ConjugateFieldModel, bx: &BoxDomain, points_per_dim: usize) -> Vec<Vec<f64>> {
    let d = bx.dim();
    let n = points_per_dim.max(2);
    let mut out = Vec::new();
    let mut y = vec![0.0; d];
    let mut x = vec![0.0; d];
    // inclusive grid per coordinate plus 0, where slow exits concentrate
    let grids: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut g: Vec<f64> = (0..n).map(|m| bx.lower()[j] + bx.width(j) * m as f64 / (n - 1) as f64).collect();
            if !g.contains(&0.0) {
                g.push(0.0);
                g.sort_by(f64::total_cmp);
            }
            g
        })
        .collect();
    for face in 0..d {
        for side in [bx.lower()[face], bx.upper()[face]] {
            let others: Vec<usize> = (0..d).filter(|&j| j != face).collect();
            let total: usize = others.iter().map(|&j| grids[j].len()).product();
            for idx in 0..total {
                let mut rem = idx;
                for &j in &others {
                    let len = grids[j].len();
                    y[j] = grids[j][rem % len];
                    rem /= len;
                }
                y[face] = side;
                model.inverse(&y, &mut x);
                out.push(x.clone());
            }
        }
    }
    out
}

/// `(T₋, T₊)`: min of `t_{D1}` and max of `t_{D2}` over the box boundary.
pub fn travel_time_bounds(
    model: &ConjugateFieldModel,
    bx: &BoxDomain,
    inner: &SmoothDomain,
    outer: &SmoothDomain,
    points_per_dim: usize,
    opts: FlowOptions,
) -> Result<(f64, f64)> {
    let d = model.dim();
    if bx.dim() != d || inner.dim() != d || outer.dim() != d {
        return Err(ExitlabError::InvalidInput("dimension mismatch between model, box and domains".into()));
    }
    let samples = box_boundary_samples(model, bx, points_per_dim);
    for z in &samples {
        if !inner.contains(z) {
            return Err(ExitlabError::InclusionViolated(format!("box boundary point {z:?} not inside D1")));
        }
        if !outer.contains(z) {
            return Err(ExitlabError::InclusionViolated(format!("box boundary point {z:?} not inside D2")));
        }
    }
    let cap = if model.validity_radius().is_finite() { model.validity_radius() } else { 1e3 };
    for u in sphere_directions(d, 64) {
        if let Some(p) = inner.boundary_along(&u, cap) {
            if !outer.contains(&p) {
                return Err(ExitlabError::InclusionViolated(format!("D1 boundary point {p:?} not inside D2")));
            }
        }
    }
    let mut t_minus = f64::INFINITY;
    let mut t_plus = 0.0f64;
    for z in &samples {
        let t1 = exit_time_deterministic(model, Domain::Smooth(inner), z, opts)?;
        let t2 = exit_time_deterministic(model, Domain::Smooth(outer), z, opts)?;
        t_minus = t_minus.min(t1);
        t_plus = t_plus.max(t2);
    }
    Ok((t_minus, t_plus))
}

/// Transversality `⟨n(x), b(x)⟩ > 0` on sampled boundary points. Returns
/// `(ok, min_inner_product)`.
pub fn transversality_check(model: &ConjugateFieldModel, domain: &SmoothDomain, n_samples: usize) -> (bool, f64) {
    let mut clamped = vec![0.0; model.dim()];
    let cap = if model.validity_radius().is_finite() { model.validity_radius() } else { 1e3 };
    transversality_of(domain, n_samples, cap, |p, b| {
        model.clamp_to_validity(p, &mut clamped);
        model.drift_into(&clamped, b);
    })
}

fn transversality_of(
    domain: &SmoothDomain,
    n_samples: usize,
    max_radius: f64,
    mut drift: impl FnMut(&[f64], &mut [f64]),
) -> (bool, f64) {
    let d = domain.dim();
    let mut b = vec![0.0; d];
    let mut min_ip = f64::INFINITY;
    for u in sphere_directions(d, n_samples.max(4)) {
        let Some(p) = domain.boundary_along(&u, max_radius) else { continue };
        let g = domain.gradient(&p);
        let gn = norm_sq(&g).sqrt();
        if gn == 0.0 {
            return (false, f64::NAN);
        }
        drift(&p, &mut b);
        let ip: f64 = g.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>() / gn;
        min_ip = min_ip.min(ip);
    }
    (min_ip > 0.0 && min_ip.is_finite(), min_ip)
}
