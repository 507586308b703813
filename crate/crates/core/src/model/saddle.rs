//! Leading-order saddle-point tail approximation.
//!
//! The cumulant generating function of the detection variable is
//!
//! ```text
//! κ(t) = λ(e^t − 1) + λ0(e^{−t·g} − 1) + t·θ(λ) − t·g·θ(λ0),   g = e^{±B}
//! ```
//!
//! and the tail beyond zero is `e^{κ(s)} / (|s|·√(2π κ''(s)))` at the root
//! `κ'(s) = 0`. When the root falls on the far side of the polarity's tail
//! the requested probability exceeds one half and the complement is used.

use super::Trigger;
use crate::error::{Error, Result};
use crate::params::{Method, Polarity, ProbResult};

/// Saddle points closer to the origin than this are rejected.
pub const SADDLE_DEGENERATE_THRESHOLD: f64 = 1e-6;
/// Bracket expansion stops at `|t|` equal to this.
pub const SADDLE_SEARCH_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfValue {
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
}

pub(super) fn cgf(tr: &Trigger, t: f64) -> Result<CgfValue> {
    let g = tr.gain();
    let et = t.exp();
    let em = (-t * g).exp();
    if !et.is_finite() || !em.is_finite() {
        return Err(Error::Range { t });
    }
    let k = tr.lambda * (et - 1.0) + tr.lambda0 * (em - 1.0) + t * tr.theta - t * g * tr.theta0;
    let k1 = tr.lambda * et - tr.lambda0 * g * em + tr.theta - g * tr.theta0;
    let k2 = tr.lambda * et + tr.lambda0 * g * g * em;
    if !(k.is_finite() && k1.is_finite() && k2.is_finite()) {
        return Err(Error::Range { t });
    }
    Ok(CgfValue { k, k1, k2 })
}

/// Root of the monotone κ'. Searches away from zero in the direction where
/// κ' changes sign.
fn solve(tr: &Trigger) -> Result<f64> {
    let k1_0 = cgf(tr, 0.0)?.k1;
    if k1_0 == 0.0 {
        return Ok(0.0);
    }
    let dir = if k1_0 < 0.0 { 1.0 } else { -1.0 };
    let mut near = 0.0f64;
    let mut far = 1e-4f64;
    loop {
        let v = cgf(tr, dir * far)?.k1;
        if v == 0.0 {
            return Ok(dir * far);
        }
        if v.signum() != k1_0.signum() {
            break;
        }
        if far >= SADDLE_SEARCH_LIMIT {
            return Err(Error::NoSaddle {
                limit: SADDLE_SEARCH_LIMIT,
            });
        }
        near = far;
        far = (if far < 1.0 { 1.0 } else { far * 2.0 }).min(SADDLE_SEARCH_LIMIT);
    }
    // Safeguarded Newton on [near, far] (in |t|).
    let (mut a, mut b) = (dir * near, dir * far);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    // κ' increases in t: κ'(a) < 0 < κ'(b).
    let mut t = 0.5 * (a + b);
    for _ in 0..200 {
        let c = cgf(tr, t)?;
        if c.k1 == 0.0 {
            return Ok(t);
        }
        if c.k1 < 0.0 {
            a = t;
        } else {
            b = t;
        }
        let mut next = t - c.k1 / c.k2;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - t).abs() <= 1e-15 * t.abs().max(1e-300) || b - a <= 1e-15 * b.abs().max(a.abs()) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

pub(super) fn probability(tr: &Trigger) -> Result<ProbResult> {
    let result = |value: f64| ProbResult {
        value,
        method: Method::Saddle,
        truncation_error: 0.0,
    };
    if tr.lambda == 0.0 && tr.lambda0 == 0.0 {
        let z = tr.mean();
        let fires = match tr.polarity {
            Polarity::Positive => z > 0.0,
            Polarity::Negative => z < 0.0,
        };
        return Ok(result(if fires { 1.0 } else { 0.0 }));
    }
    let s = solve(tr)?;
    if s.abs() < SADDLE_DEGENERATE_THRESHOLD {
        return Err(Error::SaddleDegenerate { s });
    }
    let c = cgf(tr, s)?;
    let tail = c.k.exp() / (s.abs() * (2.0 * std::f64::consts::PI * c.k2).sqrt());
    let on_tail_side = match tr.polarity {
        Polarity::Positive => s > 0.0,
        Polarity::Negative => s < 0.0,
    };
    let value = if on_tail_side {
        tail.clamp(0.0, 0.5)
    } else {
        (1.0 - tail).clamp(0.5, 1.0)
    };
    Ok(result(value))
}
