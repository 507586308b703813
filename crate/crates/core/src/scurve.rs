//! Heaviside-stimulus response curves averaged over a pixel ensemble, and
//! the bias-setting maps.
//!
//! A step from `I0` to `I0·e^c` is evaluated with `λ0 = α·I0` and
//! `λ = λ0·e^c`. Non-negative contrasts use the positive polarity, negative
//! contrasts the negative one.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Trigger;
use crate::par;
use crate::params::{IntensityPair, Method, ModelParams, Polarity};
use crate::synth::{draw_pixel, pixel_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SCurveRequest {
    pub baseline_lux: Vec<f64>,
    pub contrast_grid: Vec<f64>,
    pub n_pixels: usize,
    pub seed: u64,
    pub sigma_b: f64,
    pub method: Method,
    pub apply_floor: bool,
}

impl SCurveRequest {
    /// 60 contrasts on `[0, 1]`, 1000 pixels.
    pub fn new(baseline_lux: Vec<f64>) -> Self {
        Self {
            baseline_lux,
            contrast_grid: default_contrast_grid(),
            n_pixels: 1000,
            seed: 0,
            sigma_b: 0.0045,
            method: Method::Saddle,
            apply_floor: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_pixels < 1 {
            return Err(Error::domain("ensemble needs at least one pixel"));
        }
        if !(self.sigma_b >= 0.0 && self.sigma_b.is_finite()) {
            return Err(Error::domain(format!("sigma_B must be >= 0, got {}", self.sigma_b)));
        }
        if let Some(c) = self.contrast_grid.iter().find(|c| !c.is_finite()) {
            return Err(Error::domain(format!("non-finite contrast {c}")));
        }
        if let Some(b) = self.baseline_lux.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::domain(format!("baseline must be >= 0, got {b}")));
        }
        Ok(())
    }
}

pub fn default_contrast_grid() -> Vec<f64> {
    (0..60).map(|i| i as f64 / 59.0).collect()
}

/// Ensemble mean and standard deviation per (baseline, contrast), row-major
/// over baselines. `None` marks a point with a degenerate saddle.
#[derive(Debug, Clone, PartialEq)]
pub struct SCurveFamily {
    pub baseline_lux: Vec<f64>,
    pub contrast_grid: Vec<f64>,
    pub mean: Vec<Option<f64>>,
    pub std: Vec<Option<f64>>,
}

impl SCurveFamily {
    pub fn get(&self, baseline: usize, contrast: usize) -> Option<(f64, f64)> {
        let i = baseline * self.contrast_grid.len() + contrast;
        Some((self.mean[i]?, self.std[i]?))
    }

    /// Mean curve for one baseline.
    pub fn curve(&self, baseline: usize) -> &[Option<f64>] {
        let n = self.contrast_grid.len();
        &self.mean[baseline * n..(baseline + 1) * n]
    }

    pub fn render_csv(&self) -> String {
        let mut text = String::from("baseline_lux,log_contrast,prob_mean,prob_std\n");
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for (bi, b) in self.baseline_lux.iter().enumerate() {
            for (ci, c) in self.contrast_grid.iter().enumerate() {
                let i = bi * self.contrast_grid.len() + ci;
                text.push_str(&format!("{b:e},{c:e},{},{}\n", fmt(self.mean[i]), fmt(self.std[i])));
            }
        }
        text
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Probability of the step response for one pixel threshold.
pub fn step_prob(
    params: &ModelParams,
    baseline_lux: f64,
    contrast: f64,
    b: f64,
    method: Method,
    apply_floor: bool,
) -> Result<f64> {
    let lambda0 = params.photons(baseline_lux);
    let pair = IntensityPair::new(lambda0 * contrast.exp(), lambda0)?;
    let pol = if contrast >= 0.0 {
        Polarity::Positive
    } else {
        Polarity::Negative
    };
    let mut tr: Trigger = params.trigger(pair, pol);
    tr.b = b;
    let mut v = tr.eval(method)?.value;
    if apply_floor {
        v += params.cv(pol);
    }
    Ok(v.clamp(0.0, 1.0))
}

pub fn scurve_family(params: &ModelParams, req: &SCurveRequest) -> Result<SCurveFamily> {
    req.validate()?;
    let thresholds: Vec<f64> = (0..req.n_pixels)
        .map(|i| draw_pixel(&mut pixel_rng(req.seed, i as u64), params.b, req.sigma_b, 0.0).0)
        .collect();
    let nc = req.contrast_grid.len();
    let points = par::map_range(req.baseline_lux.len() * nc, |k| -> Result<Option<(f64, f64)>> {
        let (base, c) = (req.baseline_lux[k / nc], req.contrast_grid[k % nc]);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for &b in &thresholds {
            let v = match step_prob(params, base, c, b, req.method, req.apply_floor) {
                Ok(v) => v,
                Err(Error::SaddleDegenerate { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            sum += v;
            sq += v * v;
        }
        let n = thresholds.len() as f64;
        let mean = (sum / n).clamp(0.0, 1.0);
        let var = if thresholds.len() > 1 {
            ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        // Identical members give exactly zero spread.
        let std = if thresholds.windows(2).all(|w| w[0] == w[1]) {
            0.0
        } else {
            var.sqrt()
        };
        Ok(Some((mean, std)))
    });
    let mut mean = Vec::with_capacity(points.len());
    let mut std = Vec::with_capacity(points.len());
    for p in points {
        let p = p?;
        mean.push(p.map(|v| v.0));
        std.push(p.map(|v| v.1));
    }
    let missing = mean.iter().filter(|m| m.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} S-curve point(s) missing (degenerate saddle point)");
    }
    Ok(SCurveFamily {
        baseline_lux: req.baseline_lux.clone(),
        contrast_grid: req.contrast_grid.clone(),
        mean,
        std,
    })
}

/// Threshold for a `bias_diff` offset `k`.
pub fn bias_to_b(k: i64) -> f64 {
    8.21e-4 * k as f64 + 0.15
}

/// Refractory time in microseconds for a `bias_refr` setting.
pub fn refractory_time(b_r: i64) -> Result<f64> {
    let d = b_r as f64 + 22.97;
    if d <= 0.0 {
        return Err(Error::domain(format!("bias_refr {b_r} at or below the pole at -22.97")));
    }
    Ok(1530.72 / d + 12.45)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bias_map_examples() {
        assert_eq!(bias_to_b(0), 0.15);
        assert_relative_eq!(bias_to_b(105), 0.236205, max_relative = 1e-12);
        assert_relative_eq!(bias_to_b(-105), 0.063795, max_relative = 1e-12);
        for k in -200..200 {
            assert!(bias_to_b(k + 1) > bias_to_b(k));
        }
    }

    #[test]
    fn refractory_examples() {
        let r0 = refractory_time(0).unwrap();
        assert_relative_eq!(r0, 1530.72 / 22.97 + 12.45, max_relative = 1e-14);
        assert!((r0 - 79.0).abs() <= 1.0);
        let r200 = refractory_time(200).unwrap();
        assert!((r200 - 20.0).abs() <= 1.0);
        assert_relative_eq!(r200, 19.32, epsilon = 0.01);
        assert!(refractory_time(-23).is_err());
        assert!(refractory_time(-22).is_ok());
        for b in -22..300 {
            assert!(refractory_time(b + 1).unwrap() < refractory_time(b).unwrap());
        }
    }

    #[test]
    fn zero_spread_gives_zero_std() {
        let p = ModelParams::default_bias();
        let mut req = SCurveRequest::new(vec![10.0]);
        req.sigma_b = 0.0;
        req.n_pixels = 20;
        req.contrast_grid = vec![0.0, 0.3, 0.6];
        let f = scurve_family(&p, &req).unwrap();
        assert!(f.std.iter().all(|s| *s == Some(0.0)));
    }

    #[test]
    fn zero_contrast_is_static_probability() {
        let p = ModelParams::default_bias();
        let mut req = SCurveRequest::new(vec![2.0]);
        req.sigma_b = 0.0;
        req.n_pixels = 1;
        req.contrast_grid = vec![0.0];
        let f = scurve_family(&p, &req).unwrap();
        let pair = IntensityPair::fixed(p.photons(2.0)).unwrap();
        let stat = crate::model::saddle_prob(&p, pair, Polarity::Positive).unwrap().value;
        assert_eq!(f.mean[0], Some(stat));
        assert!(stat <= 1e-5);
    }

    #[test]
    fn csv_has_empty_fields_for_missing() {
        let f = SCurveFamily {
            baseline_lux: vec![1.0],
            contrast_grid: vec![0.0, 0.5],
            mean: vec![Some(1e-7), None],
            std: vec![Some(0.0), None],
        };
        let text = f.render_csv();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "baseline_lux,log_contrast,prob_mean,prob_std");
        assert_eq!(lines[1], "1e0,0e0,1e-7,0e0");
        assert_eq!(lines[2], "1e0,5e-1,,");
    }

    #[test]
    fn invalid_requests() {
        let p = ModelParams::default_bias();
        let mut req = SCurveRequest::new(vec![1.0]);
        req.n_pixels = 0;
        assert!(scurve_family(&p, &req).is_err());
        let mut req = SCurveRequest::new(vec![1.0]);
        req.contrast_grid = vec![f64::NAN];
        assert!(scurve_family(&p, &req).is_err());
    }
}
