use serde::{Deserialize, Serialize};

use super::tail::TailEstimate;
use crate::error::{ExitlabError, Result};

/// OLS fit of `log p̂` against `log ε`; the slope estimates `β(α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// `(log ε, log p̂)`
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
}

impl SlopeFit {
    pub fn predict_log(&self, log_eps: f64) -> f64 {
        self.intercept + self.slope * log_eps
    }
}

pub fn slope_regression(points: &[(f64, TailEstimate)]) -> Result<SlopeFit> {
    let raw: Vec<(f64, f64)> = points.iter().map(|(e, est)| (*e, est.p_hat)).collect();
    slope_regression_raw(&raw)
}

/// As [`slope_regression`] on bare `(ε, p)` pairs. Points with `p ≤ 0` or a
/// repeated `ε` are dropped; fewer than 3 remaining is a [`ExitlabError::DegenerateFit`].
pub fn slope_regression_raw(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut usable: Vec<(f64, f64)> = Vec::new();
    for &(eps, p) in points {
        if !(eps > 0.0) || !(p > 0.0) || !p.is_finite() {
            continue;
        }
        if usable.iter().any(|(le, _)| *le == eps.ln()) {
            continue;
        }
        usable.push((eps.ln(), p.ln()));
    }
    if usable.len() < 3 {
        return Err(ExitlabError::DegenerateFit(format!(
            "need at least 3 distinct epsilons with p > 0, have {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = usable.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, slope_stderr, intercept, points: usable, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::EstimatorMethod;
    use crate::sde::RngStream;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e: &f64| (e, 2.0 * e.powf(0.5))).collect();
        let fit = slope_regression_raw(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut s = RngStream::new(3, 0);
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&e: &f64| (e, 2.0 * e.powf(0.5) * (1.0 + 0.01 * s.normal())))
            .collect();
        let fit = slope_regression_raw(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(slope_regression_raw(&[(0.1, 0.2), (0.05, 0.1)]), Err(ExitlabError::DegenerateFit(_))));
        let with_zero = [(0.2, 0.3), (0.1, 0.2), (0.05, 0.0)];
        assert!(matches!(slope_regression_raw(&with_zero), Err(ExitlabError::DegenerateFit(_))));
        let repeated = [(0.2, 0.3), (0.2, 0.31), (0.1, 0.2)];
        assert!(slope_regression_raw(&repeated).is_err());
    }

    #[test]
    fn from_estimates() {
        let pts: Vec<(f64, TailEstimate)> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e: &f64| {
                let mut t = TailEstimate::from_counts(EstimatorMethod::Direct, 1000, 1);
                t.p_hat = e.powf(1.5);
                (e, t)
            })
            .collect();
        assert!((slope_regression(&pts).unwrap().slope - 1.5).abs() < 1e-12);
    }
}
