//! Statistical properties of the simulator and estimators on models with known laws.

use nalgebra::DMatrix;

use exitlab::dynamics::{BoxDomain, ConjugateFieldModel, Domain, NoiseModel};
use exitlab::estimator::{
    density_diagnostic, direct_tail_estimate, ks_normal_test, splitting_tail_estimate, GridSpec, SplittingPlan,
};
use exitlab::exponents::{Spectrum, ThresholdSpec};
use exitlab::gauss::{finite_time_covariance, gaussian_density, limit_covariance};
use exitlab::sde::{simulate_conjugated_u, simulate_trajectory, PathConfig, RngStream};

fn linear(lambdas: &[f64]) -> (ConjugateFieldModel, NoiseModel) {
    let s = Spectrum::new(lambdas.to_vec()).unwrap();
    (ConjugateFieldModel::identity(s), NoiseModel::identity(lambdas.len()))
}

fn quadratic() -> (ConjugateFieldModel, NoiseModel) {
    let s = Spectrum::new(vec![1.0]).unwrap();
    (ConjugateFieldModel::component_quadratic(s, vec![1.0], Some(0.2)).unwrap(), NoiseModel::identity(1))
}

#[test]
fn ou_marginal_passes_ks() {
    let (model, noise) = linear(&[1.0]);
    let eps = 0.05;
    let cfg = PathConfig::full_exit(1e-3, 1.0).unwrap();
    let samples: Vec<f64> = (0..10_000)
        .map(|id| {
            let path = simulate_trajectory(&model, &noise, &[0.0], eps, 1.0, &cfg, &mut RngStream::new(17, id)).unwrap();
            (-1.0f64).exp() * path.last().unwrap()[0] / eps
        })
        .collect();
    let (d, p) = ks_normal_test(&samples, (1.0 - (-2.0f64).exp()) / 2.0);
    assert!(p > 1e-3, "KS D = {d}, p = {p}");
}

#[test]
fn paths_stay_in_small_noise_tube() {
    let (model, noise) = linear(&[1.0]);
    let (eps, x0, t): (f64, f64, f64) = (0.05, 0.5, 1.0);
    let cfg = PathConfig::full_exit(1e-3, t).unwrap();
    let tube = eps.powf(0.4);
    let n = 10_000;
    let escaped = (0..n)
        .filter(|&id| {
            let path = simulate_trajectory(&model, &noise, &[x0], eps, t, &cfg, &mut RngStream::new(3, id)).unwrap();
            path.iter().enumerate().any(|(k, x)| {
                let s = (k as f64 * cfg.dt).min(t);
                (x[0] - x0 * s.exp()).abs() > tube
            })
        })
        .count();
    let frac = escaped as f64 / n as f64;
    assert!(frac <= 0.01, "escape fraction {frac}");
}

#[test]
fn trajectory_ends_on_requested_time() {
    let (model, noise) = linear(&[1.0]);
    let cfg = PathConfig::full_exit(0.003, 1.0).unwrap();
    let path = simulate_trajectory(&model, &noise, &[0.1], 0.01, 0.01, &cfg, &mut RngStream::new(0, 0)).unwrap();
    // steps 0.003, 0.003, 0.003, 0.001
    assert_eq!(path.len(), 5);
    assert_eq!(path[0], vec![0.1]);
    let path = simulate_trajectory(&model, &noise, &[0.1], 0.01, 0.0, &cfg, &mut RngStream::new(0, 0)).unwrap();
    assert_eq!(path, vec![vec![0.1]]);
}

fn u_samples(model: &ConjugateFieldModel, noise: &NoiseModel, eps: f64, t: f64, n: u64, seed: u64) -> Vec<Vec<f64>> {
    let cfg = PathConfig::full_exit(1e-3, t).unwrap();
    let y0 = vec![0.0; model.dim()];
    (0..n)
        .map(|id| simulate_conjugated_u(model, noise, &y0, eps, t, &cfg, &mut RngStream::new(seed, id)).unwrap())
        .collect()
}

#[test]
fn linear_fluctuation_density_matches_exact_law() {
    let (model, noise) = linear(&[1.0]);
    let t = 1.0;
    let c_t = finite_time_covariance(noise.sigma0(), model.spectrum(), t).unwrap();
    let samples = u_samples(&model, &noise, 0.1, t, 100_000, 9);
    let diag = density_diagnostic(&samples, &c_t, GridSpec::default()).unwrap();
    assert!(diag.l1_diff <= 0.02, "L1 = {}", diag.l1_diff);
}

#[test]
fn quadratic_fluctuation_approaches_gaussian() {
    let (model, noise) = quadratic();
    let t = 1.0;
    let c_t = finite_time_covariance(noise.sigma0(), model.spectrum(), t).unwrap();
    let mut ks = Vec::new();
    let mut l1 = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let samples = u_samples(&model, &noise, eps, t, 20_000, 21);
        let col: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        ks.push(ks_normal_test(&col, c_t[(0, 0)]).0);
        l1.push(density_diagnostic(&samples, &c_t, GridSpec::default()).unwrap().l1_diff);
    }
    assert!(ks.windows(2).all(|w| w[1] < w[0]), "KS distances {ks:?}");
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "L1 distances {l1:?}");
}

#[test]
fn finite_time_density_converges_to_limit() {
    // d=2 example; T = θ' ln(1/ε) with θ' = 1
    let (model, noise) = linear(&[1.0, 0.5]);
    let c0 = limit_covariance(noise.sigma0(), model.spectrum()).unwrap();
    let grid: Vec<[f64; 2]> = (-20..=20)
        .flat_map(|i| (-20..=20).map(move |j| [i as f64 * 0.15, j as f64 * 0.15]))
        .collect();
    let sup_at = |t: f64| {
        let c_t = finite_time_covariance(noise.sigma0(), model.spectrum(), t).unwrap();
        grid.iter()
            .map(|z| (gaussian_density(&c_t, z).unwrap() - gaussian_density(c0.matrix(), z).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let sups: Vec<f64> = [0.2, 0.1, 0.05, 0.025, 0.0125].iter().map(|e: &f64| sup_at(e.recip().ln())).collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
}

#[test]
fn splitting_is_more_efficient_in_deep_tail() {
    let (model, noise) = linear(&[1.0]);
    let bx = BoxDomain::symmetric(1.0, 1).unwrap();
    let (eps, alpha): (f64, f64) = (0.05, 2.5);
    let th = ThresholdSpec::pure(alpha).unwrap();
    let t0 = alpha * eps.recip().ln();
    let cfg = PathConfig::tail(1e-3, 2.0 * t0).unwrap();
    let plan = SplittingPlan::equally_spaced(t0, 1.0, 4_000).unwrap();
    let split = splitting_tail_estimate(&model, &noise, Domain::Box(&bx), &[0.0], eps, &th, &plan, &cfg, 1).unwrap();
    // direct run sized to the same number of path-steps
    let pilot = direct_tail_estimate(&model, &noise, Domain::Box(&bx), &[0.0], eps, &th, 2_000, &cfg, 2).unwrap();
    let n = (split.total_steps as f64 * 2_000.0 / pilot.total_steps as f64).round() as u64;
    let direct = direct_tail_estimate(&model, &noise, Domain::Box(&bx), &[0.0], eps, &th, n, &cfg, 1).unwrap();
    let combined = (direct.stderr.powi(2) + split.stderr.powi(2)).sqrt();
    assert!((direct.p_hat - split.p_hat).abs() <= 3.0 * combined, "{} vs {}", direct.p_hat, split.p_hat);
    assert!(
        split.relative_stderr() < direct.relative_stderr(),
        "relative stderr: splitting {} ({} steps) vs direct {} ({} steps)",
        split.relative_stderr(),
        split.total_steps,
        direct.relative_stderr(),
        direct.total_steps
    );
}

#[test]
fn splitting_agrees_with_direct_in_two_dimensions() {
    let (model, noise) = linear(&[1.0, 0.5]);
    let bx = BoxDomain::symmetric(1.0, 2).unwrap();
    let eps: f64 = 0.1;
    let th = ThresholdSpec::pure(1.2).unwrap();
    let t0 = 1.2 * eps.recip().ln();
    let cfg = PathConfig::tail(1e-3, 2.0 * t0).unwrap();
    let x = [0.0, 0.0];
    let direct = direct_tail_estimate(&model, &noise, Domain::Box(&bx), &x, eps, &th, 20_000, &cfg, 4).unwrap();
    let plan = SplittingPlan::equally_spaced(t0, 1.0, 10_000).unwrap();
    let split = splitting_tail_estimate(&model, &noise, Domain::Box(&bx), &x, eps, &th, &plan, &cfg, 4).unwrap();
    let combined = (direct.stderr.powi(2) + split.stderr.powi(2)).sqrt();
    assert!((direct.p_hat - split.p_hat).abs() <= 3.0 * combined, "{} vs {}", direct.p_hat, split.p_hat);
}

#[test]
fn rescaled_tail_deviation_shrinks_along_epsilon() {
    let (model, noise) = linear(&[1.0]);
    let bx = BoxDomain::symmetric(1.0, 1).unwrap();
    let th = ThresholdSpec::pure(1.5).unwrap();
    let psi = 2.0 / std::f64::consts::PI.sqrt();
    let mut devs = Vec::new();
    for eps in [0.2f64, 0.1, 0.05] {
        let cfg = PathConfig::tail(1e-3, 10.0).unwrap();
        let est = direct_tail_estimate(&model, &noise, Domain::Box(&bx), &[0.0], eps, &th, 100_000, &cfg, 8).unwrap();
        let scale = eps.powf(-0.5);
        devs.push(((est.p_hat * scale - psi).abs(), est.stderr * scale));
    }
    for w in devs.windows(2) {
        let combined = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[1].0 <= w[0].0 + 2.0 * combined, "{devs:?}");
    }
}

#[test]
fn sample_covariance_two_dimensional_exact_law() {
    let s = Spectrum::new(vec![1.0, 0.5]).unwrap();
    let model = ConjugateFieldModel::identity(s);
    let noise = NoiseModel::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
    let t = 1.5;
    let c_t = finite_time_covariance(noise.sigma0(), model.spectrum(), t).unwrap();
    let n = 50_000;
    let samples = u_samples(&model, &noise, 0.05, t, n, 12);
    let cov = exitlab::estimator::sample_covariance(&samples);
    for i in 0..2 {
        for j in 0..2 {
            // sampling sd of a covariance entry is at most sqrt(C_ii C_jj + C_ij^2) / sqrt(n)
            let sd = ((c_t[(i, i)] * c_t[(j, j)] + c_t[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((cov[(i, j)] - c_t[(i, j)]).abs() <= 4.0 * sd, "({i},{j}): {} vs {}", cov[(i, j)], c_t[(i, j)]);
        }
    }
}
