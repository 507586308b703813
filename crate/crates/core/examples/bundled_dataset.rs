//! Regenerates the bundled default-bias dataset in `data/`.
//!
//! Noise curves come from simulated recordings (640×360 ROI, 10 s each,
//! 30 intensities) passed through the estimator with 100 µs bins. S-curve
//! observations are ensemble means resampled as 200-trial binomials.
//!
//!     cargo run --release --example bundled_dataset -p evnoise

use std::path::PathBuf;

use evnoise::ingest::{CurvePoint, EmpiricalCurve};
use evnoise::scurve::{scurve_family, SCurveRequest};
use evnoise::synth::{synth_recording, SynthConfig};
use evnoise::{Method, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 360;
const DURATION_US: u64 = 10_000_000;
const BIN_US: u64 = 100;
const SCURVE_TRIALS: u64 = 200;

fn main() -> evnoise::Result<()> {
    let out = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let params = ModelParams::default_bias();
    let cfg = SynthConfig::new(Method::Saddle);

    let lux: Vec<f64> = (0..30).map(|i| 10f64.powf(-1.0 + 4.0 * i as f64 / 29.0)).collect();
    let mut points = Vec::new();
    for (i, &l) in lux.iter().enumerate() {
        let rec = synth_recording(l, &params, &cfg, WIDTH, HEIGHT, DURATION_US, 1000 + i as u64)?;
        let pt = CurvePoint::from_recording(&rec, BIN_US)?;
        eprintln!(
            "{l:9.3} lux  {} events  p+ {:.3e}  p- {:.3e}",
            rec.events().len(),
            pt.p_pos,
            pt.p_neg
        );
        points.push(pt);
    }
    EmpiricalCurve::new(points)?.write(&out.join("default_noise.csv"))?;

    let mut req = SCurveRequest::new(vec![1.0, 10.0, 100.0]);
    req.contrast_grid = (0..31).map(|i| 0.01 * i as f64).collect();
    req.n_pixels = 500;
    req.seed = 7;
    req.apply_floor = true;
    let fam = scurve_family(&params, &req)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("baseline_lux,log_contrast,prob_mean,prob_std,prob_observed\n");
    for (bi, b) in fam.baseline_lux.iter().enumerate() {
        for (ci, c) in fam.contrast_grid.iter().enumerate() {
            let Some((m, s)) = fam.get(bi, ci) else { continue };
            let k = Binomial::new(SCURVE_TRIALS, m)
                .expect("mean lies in [0, 1]")
                .sample(&mut rng);
            let obs = k as f64 / SCURVE_TRIALS as f64;
            text.push_str(&format!("{b:e},{c:e},{m:e},{s:e},{obs:e}\n"));
        }
    }
    let path = out.join("default_scurves.csv");
    std::fs::write(&path, text).map_err(|e| evnoise::Error::Io { path, source: e })?;
    Ok(())
}
