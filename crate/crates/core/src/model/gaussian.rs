//! Normal approximation to the detection variable.

use libm::erfc;

use super::Trigger;
use crate::error::{Error, Result};
use crate::params::{Method, Polarity, ProbResult};

pub(super) fn probability(tr: &Trigger) -> Result<ProbResult> {
    let g = tr.gain();
    let num = tr.lambda - g * (tr.lambda0 + tr.theta0) + tr.theta;
    let var = tr.lambda + g * g * tr.lambda0;
    let value = if var > 0.0 {
        let x = num / (2.0 * var).sqrt();
        match tr.polarity {
            Polarity::Positive => 0.5 * erfc(-x),
            Polarity::Negative => 0.5 * erfc(x),
        }
    } else if num == 0.0 {
        return Err(Error::Degenerate(format!(
            "zero variance and zero mean at λ = {}, λ0 = {}",
            tr.lambda, tr.lambda0
        )));
    } else {
        // Deterministic: Z takes the value `num`.
        let fires = match tr.polarity {
            Polarity::Positive => num > 0.0,
            Polarity::Negative => num < 0.0,
        };
        if fires {
            1.0
        } else {
            0.0
        }
    };
    Ok(ProbResult {
        value,
        method: Method::Gaussian,
        truncation_error: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

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

    #[test]
    fn half_at_zero_mean() {
        // λ − e^B λ0 = 0 with θ = 0.
        let b: f64 = 0.2;
        let tr = trig(b, 10.0 * b.exp(), 10.0, 0.0, Polarity::Positive);
        assert_relative_eq!(tr.gaussian().unwrap().value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn known_value() {
        // num = 100 − e^0.1·100 ≈ −10.517, var = 100 + e^0.2·100.
        let tr = trig(0.1, 100.0, 100.0, 0.0, Polarity::Positive);
        let num = 100.0 - 0.1f64.exp() * 100.0;
        let sd = (100.0 + 0.2f64.exp() * 100.0).sqrt();
        let expect = crate::special::normal_sf(-num / sd);
        assert_relative_eq!(tr.gaussian().unwrap().value, expect, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_and_deterministic() {
        let tr = trig(0.15, 0.0, 0.0, 0.0, Polarity::Positive);
        assert!(matches!(tr.gaussian(), Err(Error::Degenerate(_))));
        for pol in Polarity::BOTH {
            let tr = trig(0.15, 0.0, 0.0, 5.0, pol);
            assert_eq!(tr.gaussian().unwrap().value, 0.0);
        }
    }
}
