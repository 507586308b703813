//! Goodness-of-fit statistics.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitMetrics {
    pub rmse: f64,
    /// Σ((o − p)/σ)² / n; `None` unless every uncertainty is positive.
    pub chi2_nu: Option<f64>,
    pub r2: f64,
    /// `rmse / max(observed)`.
    pub peak_rrmse: f64,
}

pub fn fit_metrics(observed: &[f64], predicted: &[f64], uncertainties: &[f64]) -> Result<FitMetrics> {
    let n = observed.len();
    if n == 0 || predicted.len() != n || uncertainties.len() != n {
        return Err(Error::domain(format!(
            "metric inputs must be non-empty and equal length ({n}, {}, {})",
            predicted.len(),
            uncertainties.len()
        )));
    }
    let nf = n as f64;
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    let mean = observed.iter().sum::<f64>() / nf;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let rmse = (ss_res / nf).sqrt();
    let chi2_nu = uncertainties.iter().all(|s| *s > 0.0).then(|| {
        observed
            .iter()
            .zip(predicted)
            .zip(uncertainties)
            .map(|((o, p), s)| ((o - p) / s).powi(2))
            .sum::<f64>()
            / nf
    });
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let peak = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::NotApplicable(
            "peak-relative RMSE needs max(observed) > 0".into(),
        ));
    }
    Ok(FitMetrics {
        rmse,
        chi2_nu,
        r2,
        peak_rrmse: rmse / peak,
    })
}
