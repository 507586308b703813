//! Parameter estimation from measured noise curves and, optionally, S-curves.
//!
//! The search runs over `(B, α, c1+, c2+, c3+, c1−, c2−, c3−)` with each
//! coordinate mapped into its box by a logistic, so the simplex moves in an
//! unbounded space. Starts come from a coarse `(B, α)` grid: at each node θ
//! is inverted point by point and the parametric form is regressed onto it.

mod metrics;
pub mod simplex;

pub use metrics::{fit_metrics, FitMetrics};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ingest::{check_header, csv_error, csv_reader, field, EmpiricalCurve};
use crate::kv::KvDoc;
use crate::par;
use crate::params::{IntensityPair, Method, ModelParams, Polarity, ThetaCoefficients};
use crate::scurve::step_prob;
use simplex::{minimize, to_bounded, to_unbounded, SimplexOptions};

const N_COORDS: usize = 8;

/// Upper end of the doubling search in [`invert_theta`].
pub const THETA_SEARCH_MAX: f64 = 1e9;

/// Constant θ that reproduces `observed_p` for a static scene at
/// `intensity_lux`, to 0.1 % in probability.
pub fn invert_theta(
    b: f64,
    alpha: f64,
    intensity_lux: f64,
    observed_p: f64,
    pol: Polarity,
    method: Method,
) -> Result<f64> {
    if method == Method::Gaussian {
        return Err(Error::domain("theta inversion uses the Poisson or saddle-point model"));
    }
    if !(observed_p > 0.0 && observed_p < 1.0) {
        return Err(Error::domain(format!(
            "observed probability must lie in (0, 1), got {observed_p}"
        )));
    }
    if !(b > 0.0 && alpha > 0.0 && intensity_lux >= 0.0) {
        return Err(Error::domain("B and alpha must be > 0 and intensity >= 0"));
    }
    let pair = IntensityPair::fixed(alpha * intensity_lux)?;
    let prob = |theta: f64| -> Result<f64> {
        let mut p = ModelParams::default_bias();
        p.b = b;
        p.alpha = alpha;
        *p.theta_mut(pol) = ThetaCoefficients::constant(theta);
        Ok(p.trigger(pair, pol).eval(method)?.value)
    };
    let close = |v: f64| (v - observed_p).abs() < 1e-3 * observed_p;
    let p0 = prob(0.0)?;
    if close(p0) {
        return Ok(0.0);
    }
    if observed_p > p0 {
        return Err(Error::NoSolution(format!(
            "observed {observed_p:e} exceeds the zero-leakage probability {p0:e}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    loop {
        let v = prob(hi)?;
        if close(v) {
            return Ok(hi);
        }
        if v < observed_p {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > THETA_SEARCH_MAX {
            return Err(Error::NoSolution(format!(
                "observed {observed_p:e} not reached for theta <= {THETA_SEARCH_MAX:e}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = prob(mid)?;
        if close(v) {
            return Ok(mid);
        }
        if v > observed_p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            // The Poisson probability is a step function of θ.
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaFit {
    pub coeffs: ThetaCoefficients,
    pub residual_rms: f64,
}

/// Least squares of θ against `{1, √λ, λ}`.
pub fn fit_theta_form(samples: &[(f64, f64)]) -> Result<ThetaFit> {
    if samples.len() < 3 {
        return Err(Error::SingularFit(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some((l, t)) = samples
        .iter()
        .find(|(l, t)| !(*l >= 0.0 && l.is_finite() && t.is_finite()))
    {
        return Err(Error::domain(format!("invalid theta sample ({l}, {t})")));
    }
    let n = samples.len();
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => samples[i].0.sqrt(),
        _ => samples[i].0,
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::SingularFit(format!(
            "design matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let x = svd.solve(&y, 0.0).map_err(|e| Error::SingularFit(e.to_string()))?;
    let resid = &a * &x - &y;
    Ok(ThetaFit {
        coeffs: ThetaCoefficients {
            c1: x[0],
            c2: x[1],
            c3: x[2],
        },
        residual_rms: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// One observed S-curve sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SCurveObs {
    pub baseline_lux: f64,
    pub log_contrast: f64,
    pub prob: f64,
}

/// Reads an S-curve table with a `prob_observed` column.
pub fn read_scurve_obs(path: &Path) -> Result<Vec<SCurveObs>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &["baseline_lux", "log_contrast"])?;
    let col = headers
        .iter()
        .position(|h| h == "prob_observed")
        .ok_or_else(|| Error::parse(path, 1, "missing `prob_observed` column"))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let o = SCurveObs {
            baseline_lux: field(path, &rec, 0, "baseline_lux")?,
            log_contrast: field(path, &rec, 1, "log_contrast")?,
            prob: field(path, &rec, col, "prob_observed")?,
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if !(0.0..=1.0).contains(&o.prob) || !(o.baseline_lux >= 0.0) || !o.log_contrast.is_finite() {
            return Err(Error::parse(path, line, "S-curve sample out of range"));
        }
        out.push(o);
    }
    Ok(out)
}

pub fn write_scurve_obs(path: &Path, obs: &[SCurveObs]) -> Result<()> {
    let mut text = String::from("baseline_lux,log_contrast,prob_observed\n");
    for o in obs {
        text.push_str(&format!("{:e},{:e},{:e}\n", o.baseline_lux, o.log_contrast, o.prob));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDataset {
    pub noise: EmpiricalCurve,
    pub scurves: Vec<SCurveObs>,
    /// Relative weights of the noise and S-curve terms.
    pub weights: (f64, f64),
}

impl FitDataset {
    pub fn new(noise: EmpiricalCurve) -> Self {
        Self {
            noise,
            scurves: Vec::new(),
            weights: (1.0, 1.0),
        }
    }

    pub fn with_scurves(mut self, obs: Vec<SCurveObs>) -> Self {
        self.scurves = obs;
        self
    }

    /// Fewer than 5 noise points or less than two decades of intensity.
    pub fn is_underdetermined(&self) -> bool {
        let pts = &self.noise.points;
        if pts.len() < 5 {
            return true;
        }
        let lo = pts.iter().map(|p| p.intensity_lux).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.intensity_lux).fold(0.0, f64::max);
        hi < 100.0 * lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    pub b: (f64, f64),
    pub alpha: (f64, f64),
    pub c1: (f64, f64),
    pub c2: (f64, f64),
    pub c3: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            b: (0.0, 1.0),
            alpha: (0.1, 100.0),
            c1: (0.0, 1000.0),
            c2: (0.0, 500.0),
            c3: (-5.0, 5.0),
        }
    }
}

impl FitBounds {
    const KEYS: [&'static str; 5] = ["b", "alpha", "c1", "c2", "c3"];

    fn pairs(&self) -> [(f64, f64); 5] {
        [self.b, self.alpha, self.c1, self.c2, self.c3]
    }

    /// Box for each search coordinate.
    fn boxes(&self) -> [(f64, f64); N_COORDS] {
        [self.b, self.alpha, self.c1, self.c2, self.c3, self.c1, self.c2, self.c3]
    }

    pub fn validate(&self) -> Result<()> {
        for (k, (lo, hi)) in Self::KEYS.iter().zip(self.pairs()) {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::domain(format!(
                    "bounds for {k} must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if self.b.0 < 0.0 || self.b.1 > 1.0 {
            return Err(Error::domain("B bounds must lie within (0, 1]"));
        }
        if self.alpha.0 < 0.0 || self.c1.0 < 0.0 || self.c2.0 < 0.0 {
            return Err(Error::domain("alpha, c1 and c2 bounds must be non-negative"));
        }
        Ok(())
    }

    /// Keys `<name>_lo` / `<name>_hi`; missing keys keep their defaults.
    pub fn from_kv(doc: &KvDoc, origin: &Path) -> Result<Self> {
        let mut v = Self::default().pairs();
        for (k, pair) in Self::KEYS.iter().zip(v.iter_mut()) {
            if let Some(lo) = doc.optional::<f64>(origin, &format!("{k}_lo"))? {
                pair.0 = lo;
            }
            if let Some(hi) = doc.optional::<f64>(origin, &format!("{k}_hi"))? {
                pair.1 = hi;
            }
        }
        let b = Self {
            b: v[0],
            alpha: v[1],
            c1: v[2],
            c2: v[3],
            c3: v[4],
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub bounds: FitBounds,
    pub method: Method,
    pub n_starts: usize,
    pub simplex: SimplexOptions,
    pub seed: u64,
    /// Residuals on log probabilities instead of probabilities.
    pub log_residuals: bool,
    /// Spatial rather than temporal spread in χ²ν.
    pub spatial_uncertainty: bool,
    pub b_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub refractory_us: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: FitBounds::default(),
            method: Method::Saddle,
            n_starts: 8,
            simplex: SimplexOptions::default(),
            seed: 0,
            log_residuals: false,
            spatial_uncertainty: false,
            b_grid: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.45, 0.7],
            alpha_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            refractory_us: ModelParams::default_bias().refractory_us,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// Start index; `None` for the final polishing runs.
    pub start: Option<usize>,
    pub evals: usize,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    /// Positive, then negative polarity.
    pub metrics: [FitMetrics; 2],
    pub objective: f64,
    /// Curve points where the objective fell back to the Gaussian model.
    pub fallback_points: usize,
    pub underdetermined: bool,
    pub trace: Vec<TraceEntry>,
}

impl FitResult {
    pub fn metrics_for(&self, pol: Polarity) -> &FitMetrics {
        match pol {
            Polarity::Positive => &self.metrics[0],
            Polarity::Negative => &self.metrics[1],
        }
    }

    pub fn render_metrics_csv(&self) -> String {
        let mut text = String::from("polarity,rmse,chi2_nu,r2,peak_rrmse\n");
        for (pol, m) in Polarity::BOTH.iter().zip(&self.metrics) {
            let chi = m.chi2_nu.map(|v| format!("{v:e}")).unwrap_or_default();
            text.push_str(&format!(
                "{},{:e},{chi},{:e},{:e}\n",
                pol.as_str(),
                m.rmse,
                m.r2,
                m.peak_rrmse
            ));
        }
        text
    }

    pub fn render_trace_csv(&self) -> String {
        let mut text = String::from("start,evals,objective,converged\n");
        for t in &self.trace {
            let s = t.start.map(|s| s.to_string()).unwrap_or_else(|| "polish".into());
            text.push_str(&format!("{s},{},{:e},{}\n", t.evals, t.objective, t.converged));
        }
        text
    }
}

/// Model probability (without floor) for a static scene. Degenerate or
/// failed saddle evaluations fall back to the Gaussian; the flag reports it.
pub fn predict_point(params: &ModelParams, lux: f64, pol: Polarity, method: Method) -> Result<(f64, bool)> {
    let pair = IntensityPair::fixed(params.photons(lux))?;
    let tr = params.trigger(pair, pol);
    match tr.eval(method) {
        Ok(r) => Ok((r.value, false)),
        Err(Error::SaddleDegenerate { .. } | Error::NoSaddle { .. } | Error::Range { .. }) => {
            Ok((tr.gaussian()?.value, true))
        }
        Err(e) => Err(e),
    }
}

/// Predicted `(p_pos, p_neg)` including each polarity's floor.
pub fn predict_curve(params: &ModelParams, lux: &[f64], method: Method) -> Result<Vec<(f64, f64)>> {
    lux.iter()
        .map(|&l| {
            let p = predict_point(params, l, Polarity::Positive, method)?.0 + params.cv_pos;
            let n = predict_point(params, l, Polarity::Negative, method)?.0 + params.cv_neg;
            Ok((p.min(1.0), n.min(1.0)))
        })
        .collect()
}

/// Dataset in canonical order plus the scales used by the objective.
struct Problem {
    lux: Vec<f64>,
    obs: [Vec<f64>; 2],
    scurves: Vec<SCurveObs>,
    noise_peak: f64,
    scurve_peak: f64,
    weights: (f64, f64),
    lux_min: f64,
    lux_max: f64,
    method: Method,
    log_residuals: bool,
    bounds: FitBounds,
    refractory_us: f64,
}

struct Evaluation {
    objective: f64,
    fallbacks: usize,
}

impl Problem {
    fn new(data: &FitDataset, cfg: &FitConfig) -> Result<Self> {
        if data.noise.is_empty() {
            return Err(Error::InsufficientData("noise curve has no points".into()));
        }
        let (wn, ws) = data.weights;
        if !(wn >= 0.0 && ws >= 0.0 && wn + ws > 0.0) {
            return Err(Error::domain("source weights must be >= 0 and not both zero"));
        }
        let mut pts = data.noise.points.clone();
        pts.sort_by(|a, b| {
            (a.intensity_lux, a.p_pos, a.p_neg)
                .partial_cmp(&(b.intensity_lux, b.p_pos, b.p_neg))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut sc = data.scurves.clone();
        sc.sort_by(|a, b| {
            (a.baseline_lux, a.log_contrast, a.prob)
                .partial_cmp(&(b.baseline_lux, b.log_contrast, b.prob))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let lux: Vec<f64> = pts.iter().map(|p| p.intensity_lux).collect();
        let obs = [
            pts.iter().map(|p| p.p_pos).collect::<Vec<_>>(),
            pts.iter().map(|p| p.p_neg).collect::<Vec<_>>(),
        ];
        let noise_peak = obs.iter().flatten().copied().fold(0.0, f64::max);
        if !(noise_peak > 0.0) {
            return Err(Error::InsufficientData("all observed probabilities are zero".into()));
        }
        let scurve_peak = sc.iter().map(|o| o.prob).fold(0.0, f64::max);
        if !sc.is_empty() && !(scurve_peak > 0.0) {
            return Err(Error::InsufficientData(
                "all observed S-curve probabilities are zero".into(),
            ));
        }
        let mut lux_min = lux[0];
        let mut lux_max = lux[lux.len() - 1];
        for o in &sc {
            for l in [o.baseline_lux, o.baseline_lux * o.log_contrast.exp()] {
                lux_min = lux_min.min(l);
                lux_max = lux_max.max(l);
            }
        }
        Ok(Self {
            lux,
            obs,
            scurves: sc,
            noise_peak,
            scurve_peak,
            weights: if data.scurves.is_empty() { (1.0, 0.0) } else { (wn, ws) },
            lux_min,
            lux_max,
            method: cfg.method,
            log_residuals: cfg.log_residuals,
            bounds: cfg.bounds,
            refractory_us: cfg.refractory_us,
        })
    }

    fn params_from(&self, x: &[f64; N_COORDS], cv: (f64, f64)) -> ModelParams {
        ModelParams {
            b: x[0],
            alpha: x[1],
            theta_pos: ThetaCoefficients {
                c1: x[2],
                c2: x[3],
                c3: x[4],
            },
            theta_neg: ThetaCoefficients {
                c1: x[5],
                c2: x[6],
                c3: x[7],
            },
            cv_pos: cv.0,
            cv_neg: cv.1,
            refractory_us: self.refractory_us,
            lambda_max: x[1] * self.lux_max,
        }
    }

    fn coords_of(p: &ModelParams) -> [f64; N_COORDS] {
        [
            p.b,
            p.alpha,
            p.theta_pos.c1,
            p.theta_pos.c2,
            p.theta_pos.c3,
            p.theta_neg.c1,
            p.theta_neg.c2,
            p.theta_neg.c3,
        ]
    }

    fn to_u(&self, p: &ModelParams) -> Vec<f64> {
        Self::coords_of(p)
            .iter()
            .zip(self.bounds.boxes())
            .map(|(x, (lo, hi))| to_unbounded(*x, lo, hi))
            .collect()
    }

    fn params_at(&self, u: &[f64], cv: (f64, f64)) -> ModelParams {
        let mut x = [0.0; N_COORDS];
        for ((xi, ui), (lo, hi)) in x.iter_mut().zip(u).zip(self.bounds.boxes()) {
            *xi = to_bounded(*ui, lo, hi);
        }
        self.params_from(&x, cv)
    }

    /// Total negative θ over the data's photon range.
    fn theta_violation(&self, p: &ModelParams) -> f64 {
        let mut v = 0.0;
        for pol in Polarity::BOTH {
            for l in [self.lux_min, self.lux_max] {
                v += (-p.theta(pol).eval_unchecked(p.alpha * l)).max(0.0);
            }
        }
        v
    }

    fn residual(&self, pred: f64, obs: f64) -> f64 {
        if self.log_residuals {
            const EPS: f64 = 1e-12;
            (pred + EPS).ln() - (obs + EPS).ln()
        } else {
            pred - obs
        }
    }

    /// Noise-curve RMSE over both polarities, in probability units.
    fn noise_rmse(&self, p: &ModelParams) -> Result<(f64, usize)> {
        let mut ss = 0.0;
        let mut fallbacks = 0;
        for (k, pol) in Polarity::BOTH.into_iter().enumerate() {
            for (l, o) in self.lux.iter().zip(&self.obs[k]) {
                let (v, fb) = predict_point(p, *l, pol, self.method)?;
                fallbacks += fb as usize;
                ss += self.residual(v + p.cv(pol), *o).powi(2);
            }
        }
        Ok(((ss / (2 * self.lux.len()) as f64).sqrt(), fallbacks))
    }

    fn scurve_rmse(&self, p: &ModelParams) -> Result<f64> {
        let mut ss = 0.0;
        for o in &self.scurves {
            let v = step_prob(p, o.baseline_lux, o.log_contrast, p.b, self.method, true)?;
            ss += self.residual(v, o.prob).powi(2);
        }
        Ok((ss / self.scurves.len() as f64).sqrt())
    }

    fn evaluate(&self, p: &ModelParams) -> Evaluation {
        let inner = || -> Result<Evaluation> {
            let (noise, fallbacks) = self.noise_rmse(p)?;
            let (wn, ws) = self.weights;
            let scale = |v: f64, peak: f64| if self.log_residuals { v } else { v / peak };
            let mut obj = wn * scale(noise, self.noise_peak);
            if ws > 0.0 {
                obj += ws * scale(self.scurve_rmse(p)?, self.scurve_peak);
            }
            obj /= wn + ws;
            let viol = self.theta_violation(p);
            if viol > 0.0 {
                obj += 1.0 + viol;
            }
            Ok(Evaluation {
                objective: obj,
                fallbacks,
            })
        };
        inner().unwrap_or(Evaluation {
            objective: f64::INFINITY,
            fallbacks: 0,
        })
    }

    /// Unweighted linear-space noise RMSE used for the c_V decision.
    fn total_rmse(&self, p: &ModelParams) -> f64 {
        let mut ss = 0.0;
        for (k, pol) in Polarity::BOTH.into_iter().enumerate() {
            for (l, o) in self.lux.iter().zip(&self.obs[k]) {
                match predict_point(p, *l, pol, self.method) {
                    Ok((v, _)) => ss += (v + p.cv(pol) - o).powi(2),
                    Err(_) => return f64::INFINITY,
                }
            }
        }
        (ss / (2 * self.lux.len()) as f64).sqrt()
    }

    /// Grid-scan starting points, best objective first.
    fn initial_candidates(&self, cfg: &FitConfig, cv: (f64, f64)) -> Vec<(f64, ModelParams)> {
        let inv_method = if cfg.method == Method::Gaussian {
            Method::Saddle
        } else {
            cfg.method
        };
        let nodes: Vec<(f64, f64)> = cfg
            .b_grid
            .iter()
            .filter(|b| **b > cfg.bounds.b.0 && **b < cfg.bounds.b.1)
            .flat_map(|&b| {
                cfg.alpha_grid
                    .iter()
                    .filter(|a| **a > cfg.bounds.alpha.0 && **a < cfg.bounds.alpha.1)
                    .map(move |&a| (b, a))
            })
            .collect();
        let found = par::map(&nodes, |&(b, alpha)| -> Option<(f64, ModelParams)> {
            let mut thetas = [ThetaCoefficients::ZERO; 2];
            for (k, pol) in Polarity::BOTH.into_iter().enumerate() {
                let floor = [cv.0, cv.1][k];
                let peak = self.obs[k].iter().copied().fold(0.0, f64::max) - floor;
                let samples: Vec<(f64, f64)> = self
                    .lux
                    .iter()
                    .zip(self.obs[k].iter().map(|o| o - floor))
                    .filter(|(_, o)| *o >= 0.05 * peak && *o > 0.0 && *o < 1.0)
                    .filter_map(|(l, o)| {
                        invert_theta(b, alpha, *l, o, pol, inv_method)
                            .ok()
                            .map(|t| (alpha * l, t))
                    })
                    .collect();
                let c = fit_theta_form(&samples).ok()?.coeffs;
                thetas[k] = ThetaCoefficients {
                    c1: c.c1.clamp(self.bounds.c1.0, self.bounds.c1.1),
                    c2: c.c2.clamp(self.bounds.c2.0, self.bounds.c2.1),
                    c3: c.c3.clamp(self.bounds.c3.0, self.bounds.c3.1),
                };
            }
            let x = [
                b,
                alpha,
                thetas[0].c1,
                thetas[0].c2,
                thetas[0].c3,
                thetas[1].c1,
                thetas[1].c2,
                thetas[1].c3,
            ];
            let p = self.params_from(&x, cv);
            let e = self.evaluate(&p);
            e.objective.is_finite().then_some((e.objective, p))
        });
        let mut out: Vec<(f64, ModelParams)> = found.into_iter().flatten().collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    fn fallback_start(&self, cv: (f64, f64)) -> ModelParams {
        let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
        let d = ModelParams::default_bias();
        let inside = |v: f64, (lo, hi): (f64, f64)| if v > lo && v < hi { v } else { mid((lo, hi)) };
        let mut x = Self::coords_of(&d);
        for (xi, bx) in x.iter_mut().zip(self.bounds.boxes()) {
            *xi = inside(*xi, bx);
        }
        self.params_from(&x, cv)
    }

    fn run(&self, start: &ModelParams, cv: (f64, f64), opt: &SimplexOptions) -> (ModelParams, simplex::SimplexResult) {
        let r = minimize(
            |u| self.evaluate(&self.params_at(u, cv)).objective,
            &self.to_u(start),
            opt,
        );
        (self.params_at(&r.x, cv), r)
    }
}

/// Chooses each polarity's floor: the minimum observed probability, kept
/// only if it lowers the total RMSE.
pub fn apply_cv(data: &FitDataset, params: &ModelParams, method: Method) -> Result<ModelParams> {
    let cfg = FitConfig {
        method,
        ..FitConfig::default()
    };
    let prob = Problem::new(data, &cfg)?;
    Ok(choose_cv(&prob, params))
}

fn choose_cv(prob: &Problem, params: &ModelParams) -> ModelParams {
    let mut best = *params;
    best.cv_pos = 0.0;
    best.cv_neg = 0.0;
    let mut score = prob.total_rmse(&best);
    let cands = floor_candidates(prob);
    for (cand, pol) in [cands.0, cands.1].into_iter().zip(Polarity::BOTH) {
        if cand == 0.0 {
            continue;
        }
        let mut trial = best;
        trial.set_cv(pol, cand);
        let s = prob.total_rmse(&trial);
        if s < score {
            best = trial;
            score = s;
        }
    }
    best
}

/// Pushes c3 up just enough for θ to stay non-negative at the top of the
/// data range.
fn repair_theta(p: &mut ModelParams, c3_hi: f64) {
    let lmax = p.lambda_max;
    for pol in Polarity::BOTH {
        let t = p.theta_mut(pol);
        if t.eval_unchecked(lmax) < 0.0 {
            t.c3 = (-(t.c1 + t.c2 * lmax.sqrt()) / lmax).min(c3_hi);
        }
    }
}

/// Minimum observed probability per polarity, or 0 if any observation is 0.
fn floor_candidates(prob: &Problem) -> (f64, f64) {
    let m = |k: usize| {
        let v = prob.obs[k].iter().copied().fold(f64::INFINITY, f64::min);
        if v > 0.0 && v < 1.0 {
            v
        } else {
            0.0
        }
    };
    (m(0), m(1))
}

struct Branch {
    params: ModelParams,
    objective: f64,
    converged: bool,
}

/// Multi-start search with the floors held at `cv`; trace entries are
/// numbered from `first_index`.
fn multistart(
    prob: &Problem,
    cfg: &FitConfig,
    cv: (f64, f64),
    first_index: usize,
    trace: &mut Vec<TraceEntry>,
) -> Branch {
    let cands = prob.initial_candidates(cfg, cv);
    log::info!("{} grid candidates with floors {:e}, {:e}", cands.len(), cv.0, cv.1);
    let starts: Vec<ModelParams> = (0..cfg.n_starts)
        .map(|k| {
            if k < cands.len() && k < cfg.n_starts.div_ceil(2) {
                return cands[k].1;
            }
            // Remaining starts jitter the best candidate.
            let base = cands.first().map_or_else(|| prob.fallback_start(cv), |c| c.1);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((first_index + k) as u64 + 1);
            let u: Vec<f64> = prob
                .to_u(&base)
                .iter()
                .map(|u| u + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            prob.params_at(&u, cv)
        })
        .collect();
    let runs = par::map_range(starts.len(), |k| prob.run(&starts[k], cv, &cfg.simplex));
    trace.extend(runs.iter().enumerate().map(|(k, (_, r))| TraceEntry {
        start: Some(first_index + k),
        evals: r.evals,
        objective: r.f,
        converged: r.converged,
    }));
    let best_k = (0..runs.len())
        .min_by(|&a, &b| runs[a].1.f.total_cmp(&runs[b].1.f).then(a.cmp(&b)))
        .unwrap_or(0);
    let mut out = Branch {
        params: runs[best_k].0,
        objective: runs[best_k].1.f,
        converged: runs.iter().any(|r| r.1.converged),
    };
    // One restart from the winner.
    let (p, r) = prob.run(&out.params, cv, &cfg.simplex);
    trace.push(TraceEntry {
        start: None,
        evals: r.evals,
        objective: r.f,
        converged: r.converged,
    });
    if r.f < out.objective {
        out.params = p;
        out.objective = r.f;
    }
    out
}

/// Joint fit. The search runs once without floors and once with each
/// polarity's floor at its minimum observation; the floors are kept only if
/// that branch ends with the lower objective.
pub fn fit_params(data: &FitDataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.bounds.validate()?;
    if cfg.n_starts == 0 {
        return Err(Error::domain("need at least one start"));
    }
    let prob = Problem::new(data, cfg)?;
    let underdetermined = data.is_underdetermined();
    if underdetermined {
        log::warn!("noise curve has too few points or too narrow a range; parameters are under-determined");
    }

    let mut trace = Vec::new();
    let mut best = multistart(&prob, cfg, (0.0, 0.0), 0, &mut trace);
    let cv = floor_candidates(&prob);
    if cv.0 > 0.0 || cv.1 > 0.0 {
        let floored = multistart(&prob, cfg, cv, cfg.n_starts, &mut trace);
        if floored.objective < best.objective {
            best = Branch {
                converged: best.converged || floored.converged,
                ..floored
            };
        } else {
            best.converged |= floored.converged;
        }
    }
    if !best.converged {
        return Err(Error::NonConvergence {
            best_objective: best.objective,
        });
    }
    let mut params = best.params;
    repair_theta(&mut params, cfg.bounds.c3.1);
    params.validate()?;
    let eval = prob.evaluate(&params);
    let metrics = polarity_metrics(&prob, data, &params, cfg.spatial_uncertainty)?;
    Ok(FitResult {
        params,
        metrics,
        objective: eval.objective,
        fallback_points: eval.fallbacks,
        underdetermined,
        trace,
    })
}

fn polarity_metrics(prob: &Problem, data: &FitDataset, p: &ModelParams, spatial: bool) -> Result<[FitMetrics; 2]> {
    let mut pts = data.noise.points.clone();
    pts.sort_by(|a, b| a.intensity_lux.total_cmp(&b.intensity_lux));
    let mut out = [FitMetrics {
        rmse: 0.0,
        chi2_nu: None,
        r2: 0.0,
        peak_rrmse: 0.0,
    }; 2];
    for (k, pol) in Polarity::BOTH.into_iter().enumerate() {
        let obs: Vec<f64> = pts.iter().map(|c| c.p(pol)).collect();
        let pred: Vec<f64> = pts
            .iter()
            .map(|c| Ok(predict_point(p, c.intensity_lux, pol, prob.method)?.0 + p.cv(pol)))
            .collect::<Result<_>>()?;
        let unc: Vec<f64> = pts.iter().map(|c| c.std(pol, spatial).unwrap_or(0.0)).collect();
        out[k] = fit_metrics(&obs, &pred, &unc)?;
    }
    Ok(out)
}
