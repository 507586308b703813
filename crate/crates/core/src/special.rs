//! Poisson tail sums, Chernoff bounds and the normal quantile.
//!
//! Tail probabilities are evaluated through the regularized incomplete gamma
//! functions, always computing the *smaller* of the two complementary tails
//! directly so tiny probabilities keep their relative accuracy.

use libm::erfc;
use libm::lgamma as ln_gamma;

const EPS: f64 = 1e-17;
const MAX_ITER: usize = 1_000_000;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// ln k! − ((k + ½)·ln k − k + ln√(2π)), the Stirling remainder.
fn stirlerr(k: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = k as f64;
    if k <= 15 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// x·ln(x/m) + m − x, evaluated without cancellation when x ≈ m.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// P(N = k) for N ~ Poisson(λ), accurate to a few ulps in relative terms.
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-lambda).exp();
    }
    let kf = k as f64;
    (-stirlerr(k) - bd0(kf, lambda)).exp() / (2.0 * std::f64::consts::PI * kf).sqrt()
}

/// ln P(N = k) for N ~ Poisson(λ).
pub fn ln_poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -lambda;
    }
    let kf = k as f64;
    -stirlerr(k) - bd0(kf, lambda) - 0.5 * (2.0 * std::f64::consts::PI * kf).ln()
}

/// P(k, x) for integer k >= 1 by its power series; for x < k + 1.
fn gamma_p_series(k: u64, x: f64) -> f64 {
    let mut ap = k as f64;
    let mut del = 1.0;
    let mut sum = 1.0;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del < sum * EPS {
            break;
        }
    }
    poisson_pmf(k, x) * sum
}

/// Q(k, x) for integer k >= 1 by modified Lentz continued fraction; for
/// x >= k + 1.
fn gamma_q_cf(k: u64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let a = k as f64;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // e^{-x} x^k / Γ(k) = k · P(N = k)
    a * poisson_pmf(k, x) * h
}

/// P(N >= k) for N ~ Poisson(λ).
pub fn poisson_sf_from(k: i64, lambda: f64) -> f64 {
    if k <= 0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.0;
    }
    let k = k as u64;
    if lambda < k as f64 + 1.0 {
        gamma_p_series(k, lambda)
    } else {
        1.0 - gamma_q_cf(k, lambda)
    }
}

/// P(N <= k) for N ~ Poisson(λ).
pub fn poisson_cdf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return 1.0;
    }
    let a = k as u64 + 1;
    if lambda < a as f64 + 1.0 {
        1.0 - gamma_p_series(a, lambda)
    } else {
        gamma_q_cf(a, lambda)
    }
}

/// Chernoff bound on P(N >= m), m > λ.
pub fn chernoff_upper(m: f64, lambda: f64) -> f64 {
    if m <= lambda {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.0;
    }
    (-lambda + m - m * (m / lambda).ln()).exp().min(1.0)
}

/// Chernoff bound on P(N <= m), m < λ.
pub fn chernoff_lower(m: f64, lambda: f64) -> f64 {
    if m >= lambda {
        return 1.0;
    }
    if m < 0.0 {
        return 0.0;
    }
    if m == 0.0 {
        return (-lambda).exp();
    }
    (-lambda + m - m * (m / lambda).ln()).exp().min(1.0)
}

/// Standard normal upper-tail probability S(x) = 1 - Φ(x).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse survival function S⁻¹(q) of the standard normal, i.e.
/// Φ⁻¹(1 - q), evaluated without forming 1 - q.
pub fn normal_isf(q: f64) -> f64 {
    debug_assert!(q > 0.0 && q < 1.0);
    if q > 0.5 {
        return -normal_isf(1.0 - q);
    }
    // Acklam's rational approximation for the lower quantile of q, then
    // Halley refinement against erfc.
    let mut x = -acklam_lower(q);
    for _ in 0..3 {
        let e = normal_sf(x) - q;
        let u = -e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Rounds `x` to the nearest integer when it sits within `1e-9` of one.
#[inline]
pub(crate) fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}
