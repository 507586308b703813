//! Event probabilities under the photon-counting trigger model.
//!
//! A pixel compares the current photon count `n ~ Pois(λ)` against a
//! reference count `n0 ~ Pois(λ0)`; with leakage θ the detection variable is
//!
//! ```text
//! Z± = n − e^{±B}·(n0 + θ(λ0)) + θ(λ)
//! ```
//!
//! and a positive (negative) event fires when `Z+ > 0` (`Z− < 0`).
//! [`Trigger`] holds one fully resolved condition; the three evaluators
//! (exact Poisson, Gaussian, saddle point) live in submodules.

mod gaussian;
mod poisson;
mod saddle;

pub use saddle::{CgfValue, SADDLE_DEGENERATE_THRESHOLD, SADDLE_SEARCH_LIMIT};

use crate::error::{Error, Result};
use crate::params::{IntensityPair, Method, ModelParams, Polarity, ProbResult};

/// Tail tolerance used by [`event_prob`] for the exact Poisson sums.
pub const DEFAULT_POISSON_TOL: f64 = 1e-13;

/// A resolved trigger condition for one pixel, polarity and intensity pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub b: f64,
    pub lambda: f64,
    pub lambda0: f64,
    /// θ evaluated at the current level.
    pub theta: f64,
    /// θ evaluated at the reference level.
    pub theta0: f64,
    pub polarity: Polarity,
}

impl Trigger {
    /// `e^{±B}`.
    #[inline]
    pub fn gain(&self) -> f64 {
        (self.polarity.sign() * self.b).exp()
    }

    pub fn poisson(&self, tol: f64) -> Result<ProbResult> {
        poisson::probability(self, tol)
    }

    pub fn gaussian(&self) -> Result<ProbResult> {
        gaussian::probability(self)
    }

    pub fn saddle(&self) -> Result<ProbResult> {
        saddle::probability(self)
    }

    pub fn cgf(&self, t: f64) -> Result<CgfValue> {
        saddle::cgf(self, t)
    }

    pub fn eval(&self, method: Method) -> Result<ProbResult> {
        match method {
            Method::Poisson => self.poisson(DEFAULT_POISSON_TOL),
            Method::Gaussian => self.gaussian(),
            Method::Saddle => self.saddle(),
        }
    }

    /// Mean of the detection variable.
    pub fn mean(&self) -> f64 {
        let g = self.gain();
        self.lambda - g * (self.lambda0 + self.theta0) + self.theta
    }
}

impl ModelParams {
    /// Resolves the trigger condition for `pair` and `pol` using this
    /// parameter set's threshold and leakage.
    pub fn trigger(&self, pair: IntensityPair, pol: Polarity) -> Trigger {
        let coeffs = self.theta(pol);
        Trigger {
            b: self.b,
            lambda: pair.lambda,
            lambda0: pair.lambda0,
            theta: coeffs.eval_unchecked(pair.lambda),
            theta0: coeffs.eval_unchecked(pair.lambda0),
            polarity: pol,
        }
    }
}

/// Exact Poisson double sum (no floor applied).
pub fn poisson_prob(params: &ModelParams, pair: IntensityPair, pol: Polarity, tol: f64) -> Result<ProbResult> {
    params.trigger(pair, pol).poisson(tol)
}

pub fn gaussian_prob(params: &ModelParams, pair: IntensityPair, pol: Polarity) -> Result<ProbResult> {
    params.trigger(pair, pol).gaussian()
}

pub fn saddle_prob(params: &ModelParams, pair: IntensityPair, pol: Polarity) -> Result<ProbResult> {
    params.trigger(pair, pol).saddle()
}

/// κ±(t) and its first two derivatives.
pub fn saddle_cgf(params: &ModelParams, pair: IntensityPair, pol: Polarity, t: f64) -> Result<CgfValue> {
    params.trigger(pair, pol).cgf(t)
}

/// Dispatches to `method`; with `apply_floor` the polarity's c_V is added.
pub fn event_prob(
    params: &ModelParams,
    pair: IntensityPair,
    pol: Polarity,
    method: Method,
    apply_floor: bool,
) -> Result<ProbResult> {
    let mut r = params.trigger(pair, pol).eval(method)?;
    if apply_floor {
        r.value = (r.value + params.cv(pol)).clamp(0.0, 1.0);
    }
    Ok(r)
}

/// Probability that neither polarity fires, `max(0, 1 − P+ − P−)`.
pub fn null_prob(params: &ModelParams, pair: IntensityPair, method: Method) -> Result<f64> {
    let pos = event_prob(params, pair, Polarity::Positive, method, false)?;
    let neg = event_prob(params, pair, Polarity::Negative, method, false)?;
    Ok((1.0 - pos.value - neg.value).max(0.0))
}

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 2.997_924_58e8;

/// Photon rate per lux per microsecond for a square pixel of side
/// `pixel_side_um` under light of luminous efficacy `efficacy_lm_per_w` at
/// mean wavelength `wavelength_nm`.
pub fn radiometric_alpha(pixel_side_um: f64, efficacy_lm_per_w: f64, wavelength_nm: f64) -> Result<f64> {
    for (name, v) in [
        ("pixel side", pixel_side_um),
        ("luminous efficacy", efficacy_lm_per_w),
        ("wavelength", wavelength_nm),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be > 0, got {v}")));
        }
    }
    let area_m2 = (pixel_side_um * 1e-6).powi(2);
    let per_second = area_m2 * (wavelength_nm * 1e-9) / (efficacy_lm_per_w * PLANCK * LIGHT_SPEED);
    Ok(per_second * 1e-6)
}
