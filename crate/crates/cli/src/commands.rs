use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evnoise::fit::{fit_params, predict_point, read_scurve_obs, FitBounds, FitConfig, FitDataset};
use evnoise::ingest::{bin_size_sweep, read_excluded, write_bin_sweep, CurvePoint, EmpiricalCurve, Recording};
use evnoise::kv::KvDoc;
use evnoise::outliers::{detect_outliers, OutlierConfig};
use evnoise::provenance::Provenance;
use evnoise::scurve::{bias_to_b, refractory_time, scurve_family, SCurveRequest};
use evnoise::synth::{
    recording_generator_doc, synth_noise_image, synth_recording, GreyImage, GreyscaleMap, SynthConfig,
};
use evnoise::{params, ModelParams, Polarity};

use crate::{
    usage, BiasMapArgs, BinSweepArgs, EstimateArgs, EvalArgs, FitArgs, OutliersArgs, ParamsArgs, PolArg, RecordingArgs,
    ScurveArgs, SynthArgs, SynthKnobs, SynthRecArgs,
};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| evnoise::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// One sidecar per output, each naming its own file.
fn seal(prov: &Provenance, outputs: &[&Path]) -> Result<()> {
    for out in outputs {
        let mut p = prov.clone();
        p.set("output", out.display());
        p.write_for(out)?;
    }
    Ok(())
}

fn load_params(a: &ParamsArgs, prov: &mut Provenance) -> Result<ModelParams> {
    let p = if let Some(path) = &a.params {
        prov.input("params", path)?;
        ModelParams::read(path)?
    } else if let Some((fo, hpf)) = a.preset {
        params::bias_preset(fo, hpf)
            .ok_or_else(|| usage(format!("no bundled preset for bias_fo={fo} bias_hpf={hpf}")))?
    } else {
        ModelParams::default_bias()
    };
    prov.set("params_digest", p.digest());
    Ok(p)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(usage(format!("grid needs 0 < min <= max, got [{lo}, {hi}]")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

pub fn eval(a: &EvalArgs, mut prov: Provenance) -> Result<()> {
    let params = load_params(&a.model, &mut prov)?;
    let grid = match &a.grid {
        Some(g) => g.clone(),
        None => log_grid(a.grid_min, a.grid_max, a.points)?,
    };
    if grid.is_empty() {
        log::warn!("empty intensity grid; writing header only");
    }
    let mut text = String::from("intensity_lux,p_pos,p_neg\n");
    let mut fallbacks = 0usize;
    for &g in &grid {
        let lux = if a.photons { g / params.alpha } else { g };
        let mut cols = [String::new(), String::new()];
        for (col, pol) in cols.iter_mut().zip(Polarity::BOTH) {
            if !a.polarity.includes(pol) {
                continue;
            }
            let (mut v, fell_back) = predict_point(&params, lux, pol, a.method)?;
            fallbacks += fell_back as usize;
            if !a.no_floor {
                v = (v + params.cv(pol)).min(1.0);
            }
            *col = format!("{v:e}");
        }
        writeln!(text, "{lux:e},{},{}", cols[0], cols[1]).expect("string write");
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} point(s) used the Gaussian fallback");
    }
    prov.set("fallback_points", fallbacks);
    write_text(&a.output, &text)?;
    seal(&prov, &[&a.output])
}

pub fn scurve(a: &ScurveArgs, mut prov: Provenance) -> Result<()> {
    let params = load_params(&a.model, &mut prov)?;
    let mut req = SCurveRequest::new(a.baselines.clone());
    let sign = if a.negative { -1.0 } else { 1.0 };
    req.contrast_grid = match a.contrast_points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n)
            .map(|i| sign * a.contrast_max * i as f64 / (n - 1) as f64)
            .collect(),
    };
    req.n_pixels = a.pixels;
    req.sigma_b = a.sigma_b;
    req.seed = a.seed;
    req.method = a.method;
    req.apply_floor = a.floor;
    let fam = scurve_family(&params, &req)?;
    let missing = fam.mean.iter().filter(|m| m.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} point(s) left blank: degenerate saddle");
    }
    fam.write_csv(&a.output)?;
    seal(&prov, &[&a.output])
}

fn load_recordings(a: &RecordingArgs, prov: &mut Provenance) -> Result<Vec<Recording>> {
    if a.events.len() != a.meta.len() {
        return Err(usage(format!(
            "{} --events but {} --meta; give one sidecar per recording",
            a.events.len(),
            a.meta.len()
        )));
    }
    let extra = match &a.exclude {
        Some(p) => {
            prov.input("exclude", p)?;
            read_excluded(p)?
        }
        None => BTreeSet::new(),
    };
    let mut out = Vec::new();
    for (i, (ev, meta)) in a.events.iter().zip(&a.meta).enumerate() {
        prov.input(&format!("events.{i}"), ev)?;
        prov.input(&format!("meta.{i}"), meta)?;
        let rec = Recording::load(ev, meta).with_context(|| format!("loading {}", ev.display()))?;
        out.push(if extra.is_empty() {
            rec
        } else {
            rec.with_excluded(&extra)?
        });
    }
    Ok(out)
}

pub fn estimate(a: &EstimateArgs, mut prov: Provenance) -> Result<()> {
    let recs = load_recordings(&a.rec, &mut prov)?;
    let points = recs
        .iter()
        .map(|r| CurvePoint::from_recording(r, a.bin_us))
        .collect::<evnoise::Result<Vec<_>>>()?;
    EmpiricalCurve::new(points)?.write(&a.output)?;
    seal(&prov, &[&a.output])
}

pub fn bin_sweep(a: &BinSweepArgs, mut prov: Provenance) -> Result<()> {
    let pol = match a.polarity {
        PolArg::Pos => Polarity::Positive,
        PolArg::Neg => Polarity::Negative,
        PolArg::Both => return Err(usage("bin-sweep takes --polarity pos or neg")),
    };
    let recs = load_recordings(&a.rec, &mut prov)?;
    if recs.len() != 1 {
        return Err(usage("bin-sweep takes exactly one recording"));
    }
    let rows = bin_size_sweep(&recs[0], pol, &a.bins)?;
    write_bin_sweep(&a.output, &rows)?;
    seal(&prov, &[&a.output])
}

pub fn outliers(a: &OutliersArgs, mut prov: Provenance) -> Result<()> {
    let recs = load_recordings(&a.rec, &mut prov)?;
    if recs.len() != 1 {
        return Err(usage("outliers takes exactly one recording"));
    }
    if recs[0].events().is_empty() {
        return Err(evnoise::Error::InsufficientData("recording has no events".into()).into());
    }
    let cfg = OutlierConfig {
        a_hat: a.a_hat,
        k_sigma: a.k_sigma,
    };
    let report = detect_outliers(&recs[0], &cfg)?;
    for note in &report.notes {
        log::warn!("{note}");
    }
    let excluded = a
        .excluded_out
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output, ".excluded"));
    report.write_csv(&a.output)?;
    report.write_excluded(&excluded)?;
    prov.set("flagged_pixels", report.flagged_pixels().len());
    if let Some(t) = report.threshold {
        prov.set("deviance_threshold", format!("{t:e}"));
    }
    log::info!("{} pixel(s) flagged", report.flagged_pixels().len());
    seal(&prov, &[&a.output, &excluded])
}

pub fn fit(a: &FitArgs, mut prov: Provenance) -> Result<()> {
    prov.input("noise", &a.noise)?;
    let noise = EmpiricalCurve::read(&a.noise)?;
    let mut data = FitDataset::new(noise);
    if let Some(p) = &a.scurves {
        prov.input("scurves", p)?;
        data = data.with_scurves(read_scurve_obs(p)?);
    }
    data.weights = (a.noise_weight, a.scurve_weight);
    let mut cfg = FitConfig::default();
    if let Some(p) = &a.bounds {
        prov.input("bounds", p)?;
        cfg.bounds = FitBounds::from_kv(&KvDoc::read(p)?, p)?;
    }
    cfg.method = a.method;
    cfg.n_starts = a.starts;
    cfg.simplex.max_evals = a.max_evals;
    cfg.seed = a.seed;
    cfg.log_residuals = a.log_residuals;
    cfg.spatial_uncertainty = a.spatial_uncertainty;
    if let Some(r) = a.refractory_us {
        cfg.refractory_us = r;
    }
    let res = fit_params(&data, &cfg)?;
    if res.underdetermined {
        log::warn!("input is under-determined: parameters are weakly constrained");
    }
    if res.fallback_points > 0 {
        log::warn!("{} evaluation(s) used the Gaussian fallback", res.fallback_points);
    }
    let metrics = a
        .metrics
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output, ".metrics.csv"));
    let trace = a.trace.clone().unwrap_or_else(|| with_suffix(&a.output, ".trace.csv"));
    res.params.write(&a.output)?;
    write_text(&metrics, &res.render_metrics_csv())?;
    write_text(&trace, &res.render_trace_csv())?;
    prov.set("objective", format!("{:e}", res.objective));
    prov.set("underdetermined", res.underdetermined);
    prov.set("fallback_points", res.fallback_points);
    seal(&prov, &[&a.output, &metrics, &trace])
}

fn synth_config(k: &SynthKnobs) -> SynthConfig {
    let mut cfg = SynthConfig::new(k.method);
    if let Some(s) = k.sigma_b {
        cfg.sigma_b = s;
    }
    if let Some(s) = k.sigma_x {
        cfg.sigma_x = s;
    }
    cfg.apply_floor = !k.no_floor;
    cfg
}

pub fn synth(a: &SynthArgs, mut prov: Provenance) -> Result<()> {
    let params = load_params(&a.model, &mut prov)?;
    let mut cfg = synth_config(&a.knobs);
    if let Some(t) = &a.greyscale_table {
        prov.input("greyscale_table", t)?;
        cfg.greyscale = GreyscaleMap::read_table(t)?;
    }
    let image = match (&a.image, a.grey) {
        (Some(p), _) => {
            prov.input("image", p)?;
            GreyImage::read_pgm(p)?
        }
        (None, Some(g)) => GreyImage::uniform(a.width, a.height, g),
        (None, None) => return Err(usage("give --image or --grey")),
    };
    let img = synth_noise_image(&image, &params, &cfg, a.integration_us, a.knobs.seed)?;
    if img.fallback_pixels > 0 {
        log::warn!("{} pixel(s) used the Gaussian fallback", img.fallback_pixels);
    }
    let mut outputs = img.write_pgm(&a.output)?;
    if let Some(c) = &a.csv {
        img.write_csv(c)?;
        outputs.push(c.clone());
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    seal(&prov, &refs)
}

pub fn synth_rec(a: &SynthRecArgs, mut prov: Provenance) -> Result<()> {
    let params = load_params(&a.model, &mut prov)?;
    let cfg = synth_config(&a.knobs);
    let rec = synth_recording(a.lux, &params, &cfg, a.width, a.height, a.duration_us, a.knobs.seed)?;
    let meta_path = a.meta_out.clone().unwrap_or_else(|| with_suffix(&a.output, ".meta"));
    evnoise::ingest::write_events(&a.output, rec.events())?;
    let mut meta = rec.metadata().to_kv();
    let gen = recording_generator_doc(&params, &cfg, a.knobs.seed);
    for key in gen.keys() {
        meta.push(key, gen.get(key).unwrap_or_default());
    }
    meta.write(&meta_path)?;
    log::info!("{} event(s) written", rec.events().len());
    seal(&prov, &[&a.output, &meta_path])
}

pub fn bias_map(a: &BiasMapArgs, prov: Provenance) -> Result<()> {
    let mut text = String::from("quantity,setting,value\n");
    for &k in &a.diff {
        writeln!(text, "B,{k},{:e}", bias_to_b(k)).expect("string write");
    }
    for &r in &a.refr {
        writeln!(text, "refractory_us,{r},{:e}", refractory_time(r)?).expect("string write");
    }
    write_text(&a.output, &text)?;
    seal(&prov, &[&a.output])
}
