use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    box_boundary_samples, exit_time_deterministic, transversality_check, BoxDomain, ConjugateFieldModel, Domain, FlowOptions, NoiseModel,
    SmoothDomain, DEFAULT_FACE_POINTS,
};
use crate::dynamics::{exit_time_from_inside, DomainProbe};
use crate::error::{ExitlabError, Result};
use crate::exponents::{threshold_time, ThresholdSpec};
use crate::sde::{Advance, PathConfig, PathMode, PathRunner, RngStream};

/// Paths handled by one parallel task; buffers are reused within a chunk.
const CHUNK: u64 = 512;
/// Survivor counts below this get a Wilson interval.
const WILSON_THRESHOLD: u64 = 30;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Direct,
    Splitting,
    Corollary3,
}

impl EstimatorMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorMethod::Direct => "direct",
            EstimatorMethod::Splitting => "splitting",
            EstimatorMethod::Corollary3 => "corollary3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    /// Normal-approximation standard error. When `p_hat == 0` this holds the
    /// one-sided 95% Clopper–Pearson upper bound instead (see `zero_bound`).
    pub stderr: f64,
    pub n_paths: u64,
    pub n_survived: u64,
    pub method: EstimatorMethod,
    pub wilson: Option<Interval>,
    pub zero_bound: bool,
    /// Splitting only: some level had no survivors.
    pub extinct: bool,
    /// Paths dropped because a deterministic travel time could not be computed.
    pub n_capped: u64,
    /// Paths that left the conjugacy validity ball at least once.
    pub n_left_validity: u64,
    pub total_steps: u64,
}

impl TailEstimate {
    /// Binomial summary of `n_survived` out of `n_paths` independent trials.
    pub fn from_counts(method: EstimatorMethod, n_paths: u64, n_survived: u64) -> Self {
        let n = n_paths as f64;
        let p = if n_paths == 0 { 0.0 } else { n_survived as f64 / n };
        let (stderr, zero_bound) = if n_survived == 0 && n_paths > 0 {
            (1.0 - 0.05f64.powf(1.0 / n), true)
        } else if n_paths == 0 {
            (0.0, false)
        } else {
            ((p * (1.0 - p) / n).sqrt(), false)
        };
        let wilson = (n_paths > 0 && n_survived < WILSON_THRESHOLD).then(|| wilson_interval(n_survived, n_paths, Z95));
        TailEstimate {
            p_hat: p,
            stderr,
            n_paths,
            n_survived,
            method,
            wilson,
            zero_bound,
            extinct: false,
            n_capped: 0,
            n_left_validity: 0,
            total_steps: 0,
        }
    }

    pub fn relative_stderr(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.stderr / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Interval {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    Interval { lower, upper: (centre + half).min(1.0) }
}

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Trial {
    pub survived: bool,
    pub steps: u64,
    pub left_validity: bool,
    /// Excluded from the estimate and counted separately.
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    paths: u64,
    survived: u64,
    steps: u64,
    left_validity: u64,
    capped: u64,
}

impl Counts {
    fn add(&mut self, t: Trial) {
        if t.capped {
            self.capped += 1;
        } else {
            self.paths += 1;
            self.survived += t.survived as u64;
        }
        self.steps += t.steps;
        self.left_validity += t.left_validity as u64;
    }

    fn merge(mut self, o: Counts) -> Counts {
        self.paths += o.paths;
        self.survived += o.survived;
        self.steps += o.steps;
        self.left_validity += o.left_validity;
        self.capped += o.capped;
        self
    }
}

/// Runs paths `ids` in parallel chunks. `make` builds per-chunk state once;
/// `trial` runs one path given that state and its stream. Counts are
/// integers, so the result does not depend on scheduling.
fn run_chunked<S, M, F>(seed: u64, ids: std::ops::Range<u64>, make: M, trial: F) -> Result<Counts>
where
    M: Fn() -> S + Sync,
    F: Fn(&mut S, u64, &mut RngStream) -> Result<Trial> + Sync,
{
    let start = ids.start;
    let n = ids.end - ids.start;
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Counts>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = make();
            let mut counts = Counts::default();
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(ids.end);
            for id in lo..hi {
                let mut stream = RngStream::new(seed, id);
                counts.add(trial(&mut state, id, &mut stream)?);
            }
            Ok(counts)
        })
        .collect();
    let mut total = Counts::default();
    for part in parts {
        total = total.merge(part?);
    }
    Ok(total)
}

fn estimate_from(method: EstimatorMethod, c: Counts) -> TailEstimate {
    let mut est = TailEstimate::from_counts(method, c.paths, c.survived);
    est.total_steps = c.steps;
    est.n_left_validity = c.left_validity;
    est.n_capped = c.capped;
    est
}

/// Direct Monte Carlo over arbitrary trials; path `id` draws from stream
/// `(seed, id)`.
pub fn direct_estimate_from_trials<F>(n_paths: u64, seed: u64, trial: F) -> Result<TailEstimate>
where
    F: Fn(u64, &mut RngStream) -> Result<Trial> + Sync,
{
    let counts = run_chunked(seed, 0..n_paths, || (), |_, id, s| trial(id, s))?;
    Ok(estimate_from(EstimatorMethod::Direct, counts))
}

fn check_common(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    domain: Domain<'_>,
    x: &[f64],
    epsilon: f64,
) -> Result<()> {
    let d = model.dim();
    if noise.dim() != d || domain.dim() != d || x.len() != d {
        return Err(ExitlabError::InvalidInput(format!(
            "dimension mismatch: model {d}, noise {}, domain {}, x {}",
            noise.dim(),
            domain.dim(),
            x.len()
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExitlabError::InvalidInput(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

/// Estimate of `P(τ > T₀(ε))` from `X₀ = εx` by independent tail-indicator paths.
pub fn direct_tail_estimate(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    domain: Domain<'_>,
    x: &[f64],
    epsilon: f64,
    threshold: &ThresholdSpec,
    n_paths: u64,
    config: &PathConfig,
    seed: u64,
) -> Result<TailEstimate> {
    check_common(model, noise, domain, x, epsilon)?;
    config.validate()?;
    let t0 = threshold_time(threshold, epsilon)?;
    let cfg = PathConfig { mode: PathMode::TailIndicator, ..*config };
    let x0: Vec<f64> = x.iter().map(|v| epsilon * v).collect();
    let end = cfg.steps_until(t0);
    let start_inside = DomainProbe::new(model, domain).strictly_inside(&x0);
    let counts = run_chunked(
        seed,
        0..n_paths,
        || (PathRunner::new(model, noise, domain, epsilon, &cfg), vec![0.0; x0.len()]),
        |(runner, state), _, stream| {
            if !start_inside {
                return Ok(Trial::default());
            }
            runner.reset_flags();
            state.copy_from_slice(&x0);
            let (survived, steps) = match runner.advance(state, 0, end, stream) {
                Advance::Exited(k) => (false, k),
                Advance::Reached => (true, end),
            };
            Ok(Trial { survived, steps, left_validity: runner.left_validity, capped: false })
        },
    )?;
    Ok(estimate_from(EstimatorMethod::Direct, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingPlan {
    level_times: Vec<f64>,
    budget: u64,
}

pub const MIN_SPLITTING_BUDGET: u64 = 100;

impl SplittingPlan {
    pub fn new(level_times: Vec<f64>, budget: u64) -> Result<Self> {
        if level_times.is_empty() {
            return Err(ExitlabError::InvalidInput("splitting plan needs at least one level".into()));
        }
        if !(level_times[0] > 0.0) || level_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ExitlabError::InvalidInput(format!(
                "level times must be positive and strictly increasing: {level_times:?}"
            )));
        }
        if budget < MIN_SPLITTING_BUDGET {
            return Err(ExitlabError::InvalidInput(format!(
                "splitting budget must be >= {MIN_SPLITTING_BUDGET}, got {budget}"
            )));
        }
        Ok(SplittingPlan { level_times, budget })
    }

    /// `m = ⌈T₀ / spacing⌉` equally spaced levels ending at `T₀`.
    pub fn equally_spaced(t0: f64, spacing: f64, budget: u64) -> Result<Self> {
        if !(t0 > 0.0 && spacing > 0.0) {
            return Err(ExitlabError::InvalidInput(format!("need T0 > 0 and spacing > 0, got {t0}, {spacing}")));
        }
        let m = (t0 / spacing).ceil().max(1.0) as usize;
        let times = (1..=m).map(|k| if k == m { t0 } else { t0 * k as f64 / m as f64 }).collect();
        SplittingPlan::new(times, budget)
    }

    pub fn level_times(&self) -> &[f64] {
        &self.level_times
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn levels(&self) -> usize {
        self.level_times.len()
    }
}

fn level_sim_domain(level: usize) -> u64 {
    2 * level as u64 + 1
}

fn level_resample_domain(level: usize) -> u64 {
    2 * level as u64 + 2
}

/// Fixed-effort multilevel splitting estimate of `P(τ > T₀)`.
///
/// The last level time must equal `T₀(ε)`. Level `k` runs `budget` paths
/// from `s_{k−1}` to `s_k`, each restarted from a survivor of level `k−1`
/// chosen by the stream `(seed, level, slot)`.
pub fn splitting_tail_estimate(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    domain: Domain<'_>,
    x: &[f64],
    epsilon: f64,
    threshold: &ThresholdSpec,
    plan: &SplittingPlan,
    config: &PathConfig,
    seed: u64,
) -> Result<TailEstimate> {
    check_common(model, noise, domain, x, epsilon)?;
    config.validate()?;
    let t0 = threshold_time(threshold, epsilon)?;
    let last = *plan.level_times.last().expect("plan has levels");
    if (last - t0).abs() > 1e-9 * t0.abs().max(1.0) {
        return Err(ExitlabError::InvalidInput(format!("last level time {last} differs from T0 = {t0}")));
    }
    let cfg = PathConfig { mode: PathMode::TailIndicator, ..*config };
    let d = x.len();
    let budget = plan.budget;
    let x0: Vec<f64> = x.iter().map(|v| epsilon * v).collect();
    // survivors in conjugated coordinates
    let mut y_start = vec![0.0; d];
    model.forward(&x0, &mut y_start);
    let mut survivors: Vec<f64> = y_start;
    // level-0 slot each survivor descends from
    let mut roots: Vec<u64> = vec![0];
    let mut n_survivors = 1usize;

    let mut p_hat = 1.0;
    let mut rel_var = 0.0;
    let mut total_steps = 0u64;
    let mut left_validity = 0u64;
    let mut extinct = false;
    let mut last_survived = 0u64;
    let start_inside = DomainProbe::new(model, domain).strictly_inside(&x0);
    let mut from_step = 0u64;
    for (level, &s) in plan.level_times.iter().enumerate() {
        let to_step = cfg.steps_until(s);
        let parent = &survivors;
        let parent_roots = &roots;
        let parts: Vec<(Vec<f64>, Vec<u64>, Counts)> = (0..budget.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut runner = PathRunner::new(model, noise, domain, epsilon, &cfg);
                let mut state = vec![0.0; d];
                let mut y = vec![0.0; d];
                let mut kept = Vec::new();
                let mut kept_roots = Vec::new();
                let mut counts = Counts::default();
                let lo = c * CHUNK;
                for slot in lo..(lo + CHUNK).min(budget) {
                    let pick = if n_survivors == 1 {
                        0
                    } else {
                        RngStream::in_domain(seed, level_resample_domain(level), slot).index(n_survivors)
                    };
                    model.inverse(&parent[pick * d..(pick + 1) * d], &mut state);
                    let mut stream = RngStream::in_domain(seed, level_sim_domain(level), slot);
                    runner.reset_flags();
                    let trial = if level == 0 && !start_inside {
                        Trial::default()
                    } else {
                        match runner.advance(&mut state, from_step, to_step, &mut stream) {
                            Advance::Exited(k) => Trial { survived: false, steps: k - from_step, ..Trial::default() },
                            Advance::Reached => Trial { survived: true, steps: to_step - from_step, ..Trial::default() },
                        }
                    };
                    if trial.survived {
                        model.forward(&state, &mut y);
                        kept.extend_from_slice(&y);
                        kept_roots.push(if level == 0 { slot } else { parent_roots[pick] });
                    }
                    counts.add(Trial { left_validity: runner.left_validity, ..trial });
                }
                (kept, kept_roots, counts)
            })
            .collect();
        let mut next = Vec::new();
        let mut next_roots = Vec::new();
        let mut counts = Counts::default();
        for (kept, r, c) in parts {
            next.extend(kept);
            next_roots.extend(r);
            counts = counts.merge(c);
        }
        total_steps += counts.steps;
        left_validity += counts.left_validity;
        last_survived = counts.survived;
        let pk = counts.survived as f64 / budget as f64;
        if counts.survived == 0 {
            extinct = true;
            break;
        }
        p_hat *= pk;
        rel_var += (1.0 - pk) / (pk * budget as f64);
        survivors = next;
        roots = next_roots;
        n_survivors = counts.survived as usize;
        from_step = to_step;
    }
    let n_paths = budget * plan.levels() as u64;
    let (stderr, zero_bound) = if extinct {
        // completed levels times the one-sided bound of the extinct one
        (p_hat * (1.0 - 0.05f64.powf(1.0 / budget as f64)), true)
    } else {
        (p_hat * rel_var.max(genealogy_rel_var(&roots, budget)).sqrt(), false)
    };
    Ok(TailEstimate {
        p_hat: if extinct { 0.0 } else { p_hat },
        stderr,
        n_paths,
        n_survived: if extinct { 0 } else { last_survived },
        method: EstimatorMethod::Splitting,
        wilson: None,
        zero_bound,
        extinct,
        n_capped: 0,
        n_left_validity: left_validity,
        total_steps,
    })
}

/// Relative variance from the ancestry of the final survivors:
/// `N⁻² Σ_j (N D_j / S − 1)²` over level-0 slots `j`, where `D_j` counts the
/// final survivors descending from slot `j` and `S = Σ D_j`.
///
/// The product-form `Σ (1 − p_k)/(p_k N)` ignores that resampled paths share
/// ancestors and can understate the error several-fold; this estimator does
/// not, and reduces to the binomial variance for a single level.
fn genealogy_rel_var(final_roots: &[u64], budget: u64) -> f64 {
    let n = budget as f64;
    let s = final_roots.len() as f64;
    let mut per_root = vec![0u64; budget as usize];
    for &r in final_roots {
        per_root[r as usize] += 1;
    }
    per_root.iter().map(|&d| (n * d as f64 / s - 1.0).powi(2)).sum::<f64>() / (n * n)
}

/// Travel-time adjusted estimate of `P(τ_𝔇 − t_𝔇(X_{τ_𝔯}) > T₀)`.
///
/// Each path runs to exit from the box, then `t_𝔇` of the exit state is
/// computed from the deterministic flow, and the same path continues until
/// it leaves `big` or passes `T₀ + t_𝔇`.
pub fn corollary3_estimate(
    model: &ConjugateFieldModel,
    noise: &NoiseModel,
    bx: &BoxDomain,
    big: &SmoothDomain,
    x: &[f64],
    epsilon: f64,
    threshold: &ThresholdSpec,
    n_paths: u64,
    config: &PathConfig,
    seed: u64,
) -> Result<TailEstimate> {
    check_common(model, noise, Domain::Box(bx), x, epsilon)?;
    if big.dim() != model.dim() {
        return Err(ExitlabError::InvalidInput("big domain dimension differs from the model".into()));
    }
    config.validate()?;
    let (ok, min) = transversality_check(model, big, 256);
    if !ok {
        return Err(ExitlabError::Validation(format!(
            "drift not transversal to the big domain boundary (min inner product {min:.3e})"
        )));
    }
    let flow_opts = FlowOptions::default();
    let t_plus = sup_travel_time(model, bx, big, flow_opts)?;
    let t0 = threshold_time(threshold, epsilon)?;
    let cfg = PathConfig { mode: PathMode::TailIndicator, ..*config };
    // a path still in the box here has certainly survived
    let box_end = cfg.steps_until(t0 + 1.1 * t_plus + 1.0);
    let x0: Vec<f64> = x.iter().map(|v| epsilon * v).collect();
    let start_inside = DomainProbe::new(model, Domain::Box(bx)).strictly_inside(&x0);
    let flow_cap = 10.0 * (t_plus + 1.0);

    let counts = run_chunked(
        seed,
        0..n_paths,
        || (PathRunner::new(model, noise, Domain::Box(bx), epsilon, &cfg), DomainProbe::new(model, Domain::Smooth(big)), vec![0.0; x0.len()]),
        |(runner, big_probe, state), _, stream| {
            runner.reset_flags();
            runner.set_domain(Domain::Box(bx));
            state.copy_from_slice(&x0);
            let k_exit = if start_inside {
                match runner.advance(state, 0, box_end, stream) {
                    Advance::Exited(k) => k,
                    Advance::Reached => {
                        return Ok(Trial { survived: true, steps: box_end, left_validity: runner.left_validity, capped: false })
                    }
                }
            } else {
                0
            };
            let tau_box = k_exit as f64 * cfg.dt;
            if !big_probe.strictly_inside(state) {
                // τ_𝔇 = τ_𝔯 and t_𝔇 = 0
                return Ok(Trial { survived: tau_box > t0, steps: k_exit, left_validity: runner.left_validity, capped: false });
            }
            let t_big = match exit_time_from_inside(model, big_probe, state, flow_opts.dt, flow_cap) {
                Ok(t) => t,
                Err(ExitlabError::NoExit { .. }) | Err(ExitlabError::OutsideValidity { .. }) => {
                    return Ok(Trial { capped: true, steps: k_exit, ..Trial::default() })
                }
                Err(e) => return Err(e),
            };
            let end = cfg.steps_until(t0 + t_big);
            runner.set_domain(Domain::Smooth(big));
            let (survived, steps) = if k_exit >= end {
                (true, k_exit)
            } else {
                match runner.advance(state, k_exit, end, stream) {
                    Advance::Exited(k) => (false, k),
                    Advance::Reached => (true, end),
                }
            };
            Ok(Trial { survived, steps, left_validity: runner.left_validity, capped: false })
        },
    )?;
    Ok(estimate_from(EstimatorMethod::Corollary3, counts))
}

/// Largest `t_𝔇` over the box-face lattice. Unlike `travel_time_bounds`
/// the box may touch `∂𝔇` (those points contribute 0), but not leave it.
fn sup_travel_time(model: &ConjugateFieldModel, bx: &BoxDomain, big: &SmoothDomain, opts: FlowOptions) -> Result<f64> {
    let mut sup = 0.0f64;
    for z in box_boundary_samples(model, bx, DEFAULT_FACE_POINTS) {
        if big.on_boundary(&z) {
            continue;
        }
        if !big.contains(&z) {
            return Err(ExitlabError::InclusionViolated(format!("box boundary point {z:?} outside the big domain")));
        }
        sup = sup.max(exit_time_deterministic(model, Domain::Smooth(big), &z, opts)?);
    }
    Ok(sup)
}

/// `(ε^{−β} p̂, ε^{−β} stderr)`.
pub fn rescaled_prefactor(estimate: &TailEstimate, epsilon: f64, beta: f64) -> (f64, f64) {
    let s = epsilon.powf(-beta);
    (s * estimate.p_hat, s * estimate.stderr)
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(ExitlabError::InvalidInput("workers must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ExitlabError::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
