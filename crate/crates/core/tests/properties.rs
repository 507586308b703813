use std::collections::BTreeSet;

use evnoise::fit::fit_theta_form;
use evnoise::ingest::{estimate_probability, EventRecord, Recording};
use evnoise::outliers::runs_from_sequence;
use evnoise::scurve::{scurve_family, SCurveRequest};
use evnoise::synth::{effective_probability, pixel_rng, truncated_normal};
use evnoise::{
    gaussian_prob, poisson_prob, saddle_cgf, saddle_prob, IntensityPair, Method, ModelParams, Polarity,
    ThetaCoefficients,
};
use proptest::prelude::*;

fn base() -> ModelParams {
    let mut p = ModelParams::default_bias();
    p.lambda_max = 1e5;
    p
}

fn with_theta(b: f64, theta: f64) -> ModelParams {
    let mut p = base();
    p.b = b;
    p.theta_pos = ThetaCoefficients::constant(theta);
    p.theta_neg = ThetaCoefficients::constant(theta);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn static_polarities_agree(b in 0.01..1.0f64, theta in 0.0..300.0f64, lambda in 0.05..2000.0f64) {
        let p = with_theta(b, theta);
        let pair = IntensityPair::fixed(lambda).unwrap();
        let pos = poisson_prob(&p, pair, Polarity::Positive, 1e-15).unwrap();
        let neg = poisson_prob(&p, pair, Polarity::Negative, 1e-15).unwrap();
        prop_assert!((pos.value - neg.value).abs() <= pos.truncation_error + neg.truncation_error + 1e-14);
    }

    #[test]
    fn cgf_derivatives_match_differences(
        b in 0.05..0.8f64,
        lambda in 0.5..500.0f64,
        ratio in 0.5..2.0f64,
        t in -0.5..0.5f64,
        neg in any::<bool>(),
    ) {
        let p = base();
        let pol = if neg { Polarity::Negative } else { Polarity::Positive };
        let mut q = p;
        q.b = b;
        let pair = IntensityPair::new(lambda * ratio, lambda).unwrap();
        let h = 1e-5;
        let at = |s: f64| saddle_cgf(&q, pair, pol, s).unwrap();
        let c = at(t);
        let (lo, hi) = (at(t - h), at(t + h));
        let scale = 1.0 + c.k1.abs() + c.k.abs();
        prop_assert!(((hi.k - lo.k) / (2.0 * h) - c.k1).abs() <= 1e-5 * scale);
        prop_assert!(((hi.k1 - lo.k1) / (2.0 * h) - c.k2).abs() <= 1e-5 * (1.0 + c.k2.abs() + c.k1.abs()));
        prop_assert!(c.k2 > 0.0);
    }

    #[test]
    fn leakage_and_threshold_suppress_events(
        b in 0.05..0.5f64,
        theta in 0.0..200.0f64,
        dtheta in 1.0..100.0f64,
        lambda in 0.2..200.0f64,
    ) {
        let pair = IntensityPair::fixed(lambda).unwrap();
        for pol in Polarity::BOTH {
            let lo = saddle_prob(&with_theta(b, theta), pair, pol).unwrap().value;
            let hi = saddle_prob(&with_theta(b, theta + dtheta), pair, pol).unwrap().value;
            prop_assert!(hi <= lo);
            let higher_b = saddle_prob(&with_theta(b * 1.2, theta), pair, pol).unwrap().value;
            prop_assert!(higher_b <= lo);
            let g_lo = gaussian_prob(&with_theta(b, theta), pair, pol).unwrap().value;
            let g_hi = gaussian_prob(&with_theta(b, theta + dtheta), pair, pol).unwrap().value;
            prop_assert!(g_hi <= g_lo);
        }
    }

    #[test]
    fn theta_form_recovers_coefficients(
        c1 in 0.0..100.0f64,
        c2 in 0.0..100.0f64,
        c3 in -0.5..2.0f64,
        n in 3usize..40,
    ) {
        let c = ThetaCoefficients { c1, c2, c3 };
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let l = 10f64.powf(-1.0 + 4.0 * i as f64 / (n - 1) as f64);
                (l, c1 + c2 * l.sqrt() + c3 * l)
            })
            .collect();
        let f = fit_theta_form(&samples).unwrap();
        prop_assert!((f.coeffs.c1 - c.c1).abs() <= 1e-6 * (1.0 + c1));
        prop_assert!((f.coeffs.c2 - c.c2).abs() <= 1e-6 * (1.0 + c2));
        prop_assert!((f.coeffs.c3 - c.c3).abs() <= 1e-6 * (1.0 + c3.abs()));
    }

    #[test]
    fn dead_time_never_raises_probability(pp in 0.0..0.49f64, pn in 0.0..0.49f64, r in 0.0..500.0f64) {
        let (ep, en) = effective_probability(pp, pn, r).unwrap();
        prop_assert!(ep <= pp && en <= pn);
        prop_assert!(ep >= 0.0 && en >= 0.0);
    }

    #[test]
    fn ensemble_thresholds_are_non_negative(seed in any::<u64>(), mu in 0.0..0.3f64, sigma in 0.0..0.5f64) {
        let mut rng = pixel_rng(seed, 3);
        for _ in 0..50 {
            prop_assert!(truncated_normal(&mut rng, mu, sigma) >= 0.0);
        }
    }

    #[test]
    fn run_lengths_conserve_events(seq in prop::collection::vec((0u64..40, any::<bool>()), 0..60)) {
        let mut seq: Vec<(u64, Polarity)> = seq
            .into_iter()
            .map(|(t, p)| (t, if p { Polarity::Positive } else { Polarity::Negative }))
            .collect();
        seq.sort_by_key(|e| e.0);
        let runs = runs_from_sequence(&seq);
        for pol in Polarity::BOTH {
            let n = seq.iter().filter(|e| e.1 == pol).count() as u64;
            prop_assert_eq!(runs.events(pol), n);
        }
    }

    #[test]
    fn estimates_ignore_event_order(
        raw in prop::collection::vec((0u32..8, 0u32..4, 0u64..10_000, any::<bool>()), 1..200),
        rot in 0usize..200,
    ) {
        let events: Vec<EventRecord> = raw
            .iter()
            .map(|&(x, y, t, p)| EventRecord {
                x,
                y,
                t,
                p: if p { Polarity::Positive } else { Polarity::Negative },
            })
            .collect();
        let mut rotated = events.clone();
        rotated.rotate_left(rot % events.len());
        rotated.reverse();
        let mk = |ev: Vec<EventRecord>| Recording::new(ev, 10_000, 8, 4, 2.0, 1.0, BTreeSet::new()).unwrap();
        let (a, b) = (mk(events), mk(rotated));
        let total = |r: &Recording| {
            estimate_probability(r, Polarity::Positive).unwrap() + estimate_probability(r, Polarity::Negative).unwrap()
        };
        for pol in Polarity::BOTH {
            prop_assert_eq!(estimate_probability(&a, pol).unwrap(), estimate_probability(&b, pol).unwrap());
        }
        // Both polarities share one denominator, so the estimates add up.
        let n = a.events().len() as f64;
        let all = n / (10_000.0 * 32.0 - 2.0 * n);
        prop_assert!((total(&a) - all).abs() <= 1e-15 * all.max(1e-300) + f64::MIN_POSITIVE);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scurves_rise_with_contrast(base_lux in 0.2..200.0f64, seed in any::<u64>(), neg in any::<bool>()) {
        let p = ModelParams::default_bias();
        let mut req = SCurveRequest::new(vec![base_lux]);
        req.n_pixels = 40;
        req.seed = seed;
        let sign = if neg { -1.0 } else { 1.0 };
        req.contrast_grid = (0..25).map(|i| sign * i as f64 * 0.02).collect();
        let fam = scurve_family(&p, &req).unwrap();
        let vals: Vec<f64> = fam.curve(0).iter().flatten().copied().collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{:?}", vals);
        }
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn saddle_tracks_poisson_at_high_counts() {
    let p = base();
    for lux in [5.0, 20.0, 100.0] {
        let pair = IntensityPair::fixed(p.photons(lux)).unwrap();
        let exact = poisson_prob(&p, pair, Polarity::Positive, 1e-15).unwrap().value;
        let s = evnoise::event_prob(&p, pair, Polarity::Positive, Method::Saddle, false)
            .unwrap()
            .value;
        assert!(
            (s - exact).abs() / exact < 0.1,
            "lux {lux}: saddle {s:e} exact {exact:e}"
        );
    }
}
