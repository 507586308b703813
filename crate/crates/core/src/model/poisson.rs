//! Exact evaluation by summing over the reference count.

use super::Trigger;
use crate::error::{Error, Result};
use crate::params::{Method, Polarity, ProbResult};
use crate::special::{chernoff_lower, chernoff_upper, poisson_cdf, poisson_pmf, poisson_sf_from, snap};

/// Neumaier compensated sum.
#[derive(Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Index window `[lo, hi]` over `n0 ~ Pois(λ0)` whose omitted mass is
/// bounded by `tol`; returns the window and that bound.
fn window(lambda0: f64, tol: f64) -> (u64, u64, f64) {
    if lambda0 == 0.0 {
        return (0, 0, 0.0);
    }
    let spread = 12.0 * (lambda0 + 1.0).sqrt() + 30.0;
    let mut hi = (lambda0 + spread).ceil() as u64;
    while chernoff_upper((hi + 1) as f64, lambda0) > 0.5 * tol {
        hi = hi + 1 + hi / 8;
    }
    let mut lo = (lambda0 - spread).floor().max(0.0) as u64;
    while lo > 0 && chernoff_lower((lo - 1) as f64, lambda0) > 0.5 * tol {
        lo -= (lo / 8).max(1).min(lo);
    }
    let lower = if lo == 0 {
        0.0
    } else {
        chernoff_lower((lo - 1) as f64, lambda0)
    };
    (lo, hi, lower + chernoff_upper((hi + 1) as f64, lambda0))
}

pub(super) fn probability(tr: &Trigger, tol: f64) -> Result<ProbResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::domain(format!("tolerance must be in (0, 1), got {tol}")));
    }
    let g = tr.gain();
    let (lo, hi, trunc) = window(tr.lambda0, tol);
    let mut acc = Sum::default();
    for n0 in lo..=hi {
        let w = poisson_pmf(n0, tr.lambda0);
        if w == 0.0 {
            continue;
        }
        let edge = snap(g * (n0 as f64 + tr.theta0) - tr.theta);
        let inner = match tr.polarity {
            // n > edge
            Polarity::Positive => poisson_sf_from(edge.floor() as i64 + 1, tr.lambda),
            // n < edge
            Polarity::Negative => poisson_cdf(edge.ceil() as i64 - 1, tr.lambda),
        };
        acc.add(w * inner);
    }
    Ok(ProbResult {
        value: acc.value().clamp(0.0, 1.0),
        method: Method::Poisson,
        truncation_error: trunc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{IntensityPair, ModelParams, ThetaCoefficients};

    fn trig(b: f64, lambda: f64, lambda0: f64, theta: f64, pol: Polarity) -> Trigger {
        Trigger {
            b,
            lambda,
            lambda0,
            theta,
            theta0: theta,
            polarity: pol,
        }
    }

    /// Brute-force double sum over a generous square.
    fn brute(tr: &Trigger) -> f64 {
        let g = tr.gain();
        let mut s = 0.0;
        for n0 in 0..400u64 {
            for n in 0..400u64 {
                let z = n as f64 - g * (n0 as f64 + tr.theta0) + tr.theta;
                let hit = match tr.polarity {
                    Polarity::Positive => z > 1e-9,
                    Polarity::Negative => z < -1e-9,
                };
                if hit {
                    s += poisson_pmf(n0, tr.lambda0) * poisson_pmf(n, tr.lambda);
                }
            }
        }
        s
    }

    #[test]
    fn matches_brute_force() {
        for &(b, l, l0, th) in &[
            (0.15, 20.0, 20.0, 3.0),
            (0.5, 5.0, 7.0, 0.0),
            (0.05, 60.0, 40.0, 12.5),
            (std::f64::consts::LN_2, 10.0, 10.0, 0.0),
        ] {
            for pol in Polarity::BOTH {
                let tr = trig(b, l, l0, th, pol);
                let got = tr.poisson(1e-15).unwrap().value;
                assert!((got - brute(&tr)).abs() < 1e-13, "{tr:?}: {got} vs {}", brute(&tr));
            }
        }
    }

    #[test]
    fn static_zero_leakage_equal_polarities() {
        let mut p = ModelParams::default_bias();
        p.b = 0.15;
        p.theta_pos = ThetaCoefficients::ZERO;
        p.theta_neg = ThetaCoefficients::ZERO;
        let pair = IntensityPair::fixed(10.0).unwrap();
        let pos = p.trigger(pair, Polarity::Positive).poisson(1e-15).unwrap();
        let neg = p.trigger(pair, Polarity::Negative).poisson(1e-15).unwrap();
        let bound = 2.0 * (pos.truncation_error + neg.truncation_error) + 1e-14;
        assert!((pos.value - neg.value).abs() <= bound);
        assert!(pos.value > 0.3 && pos.value < 0.5);
    }

    #[test]
    fn zero_intensity_gives_zero() {
        for pol in Polarity::BOTH {
            let tr = trig(0.15, 0.0, 0.0, 18.92, pol);
            assert_eq!(tr.poisson(1e-12).unwrap().value, 0.0);
        }
    }

    #[test]
    fn truncation_bound_reported() {
        let tr = trig(0.15, 1e4, 1e4, 50.0, Polarity::Positive);
        let r = tr.poisson(1e-12).unwrap();
        assert!(r.truncation_error <= 1e-12);
        assert!(tr.poisson(0.0).is_err());
    }
}
