use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ExitlabError, Result};
use crate::gauss::{std_normal_cdf, Mvn};

pub const MIN_DIAGNOSTIC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bins_per_dim: usize,
    /// Grid half-width in reference standard deviations.
    pub half_width_sd: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { bins_per_dim: 40, half_width_sd: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    /// Joint histogram (d = 1, 2).
    Histogram,
    /// Per-coordinate Gaussian-kernel marginals (d ≥ 3).
    MarginalKde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostic {
    pub mode: DensityMode,
    /// Cell centres (histogram) or `(coordinate, value)` pairs (marginal KDE).
    pub grid: Vec<Vec<f64>>,
    pub empirical: Vec<f64>,
    pub reference: Vec<f64>,
    pub sup_diff: f64,
    pub l1_diff: f64,
    /// `∫ empirical` over the grid (per coordinate, worst case, for KDE).
    pub empirical_mass: f64,
}

/// Compares the empirical density of `samples` with `N(0, c_ref)`.
pub fn density_diagnostic(samples: &[Vec<f64>], c_ref: &DMatrix<f64>, grid: GridSpec) -> Result<DensityDiagnostic> {
    if samples.len() < MIN_DIAGNOSTIC_SAMPLES {
        return Err(ExitlabError::InvalidInput(format!(
            "density diagnostic needs >= {MIN_DIAGNOSTIC_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let d = c_ref.nrows();
    if samples.iter().any(|s| s.len() != d) {
        return Err(ExitlabError::InvalidInput("sample dimension differs from the reference covariance".into()));
    }
    if grid.bins_per_dim < 2 || !(grid.half_width_sd > 0.0) {
        return Err(ExitlabError::InvalidInput("grid needs >= 2 bins and a positive half-width".into()));
    }
    let mvn = Mvn::new(c_ref)?;
    if d <= 2 {
        Ok(histogram(samples, c_ref, &mvn, grid))
    } else {
        Ok(marginal_kde(samples, c_ref, grid))
    }
}

fn histogram(samples: &[Vec<f64>], c_ref: &DMatrix<f64>, mvn: &Mvn, spec: GridSpec) -> DensityDiagnostic {
    let d = c_ref.nrows();
    let m = spec.bins_per_dim;
    let half: Vec<f64> = (0..d).map(|j| spec.half_width_sd * c_ref[(j, j)].sqrt()).collect();
    let width: Vec<f64> = half.iter().map(|h| 2.0 * h / m as f64).collect();
    let cell_volume: f64 = width.iter().product();
    let cells = m.pow(d as u32);
    let mut counts = vec![0u64; cells];
    'outer: for s in samples {
        let mut idx = 0usize;
        for j in (0..d).rev() {
            let k = ((s[j] + half[j]) / width[j]).floor();
            if !(k >= 0.0 && k < m as f64) {
                continue 'outer;
            }
            idx = idx * m + k as usize;
        }
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let mut grid = Vec::with_capacity(cells);
    let mut empirical = Vec::with_capacity(cells);
    let mut reference = Vec::with_capacity(cells);
    let (mut sup, mut l1, mut mass) = (0.0f64, 0.0f64, 0.0f64);
    for (idx, &c) in counts.iter().enumerate() {
        let mut rem = idx;
        let centre: Vec<f64> = (0..d)
            .map(|j| {
                let k = rem % m;
                rem /= m;
                -half[j] + (k as f64 + 0.5) * width[j]
            })
            .collect();
        let emp = c as f64 / (n * cell_volume);
        let r = mvn.density(&centre);
        sup = sup.max((emp - r).abs());
        l1 += (emp - r).abs() * cell_volume;
        mass += emp * cell_volume;
        grid.push(centre);
        empirical.push(emp);
        reference.push(r);
    }
    DensityDiagnostic { mode: DensityMode::Histogram, grid, empirical, reference, sup_diff: sup, l1_diff: l1, empirical_mass: mass }
}

fn marginal_kde(samples: &[Vec<f64>], c_ref: &DMatrix<f64>, spec: GridSpec) -> DensityDiagnostic {
    let d = c_ref.nrows();
    let m = spec.bins_per_dim;
    let n = samples.len() as f64;
    let mut out = DensityDiagnostic {
        mode: DensityMode::MarginalKde,
        grid: Vec::new(),
        empirical: Vec::new(),
        reference: Vec::new(),
        sup_diff: 0.0,
        l1_diff: 0.0,
        empirical_mass: 1.0,
    };
    let mut worst_mass_err = 0.0f64;
    for j in 0..d {
        let sd = c_ref[(j, j)].sqrt();
        let half = spec.half_width_sd * sd;
        let step = 2.0 * half / m as f64;
        // Silverman's rule on the reference scale
        let bw = 1.06 * sd * n.powf(-0.2);
        let mut values: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        values.sort_by(f64::total_cmp);
        let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
        let (mut l1, mut mass) = (0.0f64, 0.0f64);
        for k in 0..m {
            let z = -half + (k as f64 + 0.5) * step;
            let lo = values.partition_point(|v| *v < z - 8.0 * bw);
            let hi = values.partition_point(|v| *v <= z + 8.0 * bw);
            let emp: f64 = values[lo..hi].iter().map(|v| (-0.5 * ((z - v) / bw).powi(2)).exp()).sum::<f64>() * norm;
            let r = (-0.5 * (z / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            out.sup_diff = out.sup_diff.max((emp - r).abs());
            l1 += (emp - r).abs() * step;
            mass += emp * step;
            out.grid.push(vec![j as f64, z]);
            out.empirical.push(emp);
            out.reference.push(r);
        }
        out.l1_diff = out.l1_diff.max(l1);
        if (mass - 1.0).abs() > worst_mass_err {
            worst_mass_err = (mass - 1.0).abs();
            out.empirical_mass = mass;
        }
    }
    out
}

/// Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value `P(D_n ≥ d)` from the Kolmogorov distribution, with
/// the usual small-sample correction `√n + 0.12 + 0.11/√n`.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of one coordinate against `N(0, var)`; returns `(D, p-value)`.
pub fn ks_normal_test(samples: &[f64], var: f64) -> (f64, f64) {
    let sd = var.sqrt();
    let d = ks_statistic(samples, |x| std_normal_cdf(x / sd));
    (d, kolmogorov_p_value(d, samples.len()))
}

/// Unbiased sample covariance of `samples` (rows are draws).
pub fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let d = samples.first().map_or(0, Vec::len);
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
    }
    let mut c = DMatrix::zeros(d, d);
    for s in samples {
        for a in 0..d {
            for b in 0..=a {
                c[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = c[(a, b)] / (n - 1.0);
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::RngStream;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_samples(c: &DMatrix<f64>, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mvn = Mvn::new(c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = c.nrows();
        let (mut xi, mut out) = (vec![0.0; d], vec![0.0; d]);
        (0..n)
            .map(|_| {
                mvn.sample_into(&mut rng, &mut xi, &mut out);
                out.clone()
            })
            .collect()
    }

    #[test]
    fn exact_samples_one_d() {
        let c = DMatrix::from_element(1, 1, 0.5);
        let s = gaussian_samples(&c, 100_000, 4);
        let diag = density_diagnostic(&s, &c, GridSpec::default()).unwrap();
        assert!(diag.l1_diff <= 0.02, "L1 {}", diag.l1_diff);
        assert!((diag.empirical_mass - 1.0).abs() <= 1e-3);
        assert_eq!(diag.grid.len(), 40);
    }

    #[test]
    fn sup_diff_shrinks_with_samples() {
        let c = DMatrix::from_element(1, 1, 1.0);
        let small = density_diagnostic(&gaussian_samples(&c, 10_000, 1), &c, GridSpec::default()).unwrap();
        let large = density_diagnostic(&gaussian_samples(&c, 1_000_000, 1), &c, GridSpec::default()).unwrap();
        assert!(large.sup_diff < small.sup_diff);
    }

    #[test]
    fn two_d_and_kde_modes() {
        let c2 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let d2 = density_diagnostic(&gaussian_samples(&c2, 50_000, 2), &c2, GridSpec::default()).unwrap();
        assert_eq!(d2.mode, DensityMode::Histogram);
        assert!((d2.empirical_mass - 1.0).abs() <= 1e-3);
        let c3 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.4, 0.2]));
        let d3 = density_diagnostic(&gaussian_samples(&c3, 20_000, 3), &c3, GridSpec::default()).unwrap();
        assert_eq!(d3.mode, DensityMode::MarginalKde);
        assert!(d3.l1_diff < 0.05, "{}", d3.l1_diff);
        assert!((d3.empirical_mass - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn rejects_small_samples() {
        let c = DMatrix::from_element(1, 1, 1.0);
        assert!(density_diagnostic(&gaussian_samples(&c, 100, 1), &c, GridSpec::default()).is_err());
    }

    #[test]
    fn ks_on_normal_and_shifted() {
        let mut s = RngStream::new(11, 0);
        let v: Vec<f64> = (0..10_000).map(|_| s.normal()).collect();
        let (_, p) = ks_normal_test(&v, 1.0);
        assert!(p > 1e-3);
        let shifted: Vec<f64> = v.iter().map(|x| x + 0.1).collect();
        let (_, p) = ks_normal_test(&shifted, 1.0);
        assert!(p < 1e-3);
        assert!((kolmogorov_p_value(1.36 / 100.0, 10_000) - 0.05).abs() < 0.005);
    }

    #[test]
    fn covariance_of_known_samples() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let est = sample_covariance(&gaussian_samples(&c, 200_000, 9));
        assert!((est - &c).amax() < 0.02);
    }
}
