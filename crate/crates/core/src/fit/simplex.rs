//! Nelder-Mead simplex minimization with dimension-adaptive coefficients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Converged when the spread of simplex values is below `ftol·|f_best|`.
    pub ftol: f64,
    /// ...and the simplex diameter is below this.
    pub xtol: f64,
    /// Initial edge length along each coordinate.
    pub step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 8000,
            ftol: 1e-7,
            xtol: 1e-4,
            step: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn minimize<F>(f: F, x0: &[f64], opt: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opt.step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut converged = false;
    while evals.get() < opt.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diam = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opt.ftol * vals[0].abs() && diam <= opt.xtol {
            converged = true;
            break;
        }

        let mut c = vec![0.0; n];
        for p in &pts[..n] {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> { c.iter().zip(&pts[n]).map(|(ci, wi)| ci + t * (ci - wi)).collect() };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(alpha * beta);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(alpha * gamma);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(vals[n]) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + delta * (x - b)).collect();
            vals[i] = eval(&p);
            pts[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        f: vals[best],
        evals: evals.get(),
        converged,
    }
}

/// Maps an unbounded coordinate into `(lo, hi)` by a logistic.
pub fn to_bounded(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

/// Inverse of [`to_bounded`]; values on or past a bound are pulled inside.
pub fn to_unbounded(x: f64, lo: f64, hi: f64) -> f64 {
    let eps = 1e-9 * (hi - lo);
    let x = x.clamp(lo + eps, hi - eps);
    ((x - lo) / (hi - x)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(
            f,
            &[-1.2, 1.0],
            &SimplexOptions {
                max_evals: 5000,
                ftol: 1e-10,
                xtol: 1e-8,
                step: 0.5,
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn quadratic_8d() {
        let target = [0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.9];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                .sum()
        };
        let r = minimize(f, &[0.0; 8], &SimplexOptions::default());
        for (a, b) in r.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let r = minimize(
            f,
            &[5.0; 4],
            &SimplexOptions {
                max_evals: 10,
                ..Default::default()
            },
        );
        assert!(!r.converged);
        assert!(r.evals >= 10);
    }

    #[test]
    fn bounded_transform_round_trip() {
        for &x in &[0.001, 0.15, 0.99] {
            let u = to_unbounded(x, 0.0, 1.0);
            assert!((to_bounded(u, 0.0, 1.0) - x).abs() < 1e-12);
        }
        assert!(to_bounded(1e6, -2.0, 3.0) <= 3.0);
        assert!(to_bounded(-1e6, -2.0, 3.0) >= -2.0);
    }
}
