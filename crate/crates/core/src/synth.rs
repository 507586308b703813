//! Synthetic noise: per-pixel heterogeneity, accumulated noise images and
//! event-stream recordings.
//!
//! Each pixel owns an independent random stream keyed by `(seed, pixel
//! index)`, so results do not depend on evaluation order or thread count.
//! The pixel's threshold `B_i` and leakage multiplier `X_i` are always the
//! first draws from its stream.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Normal};

use crate::error::{Error, Result};
use crate::ingest::{EventRecord, Recording};
use crate::kv::{parse_sections, KvDoc};
use crate::model::Trigger;
use crate::par;
use crate::params::{fmt_f64, IntensityPair, Method, ModelParams, Polarity};

/// Random stream for pixel `index`.
pub fn pixel_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Normal(mu, sigma²) conditioned on `>= 0`, by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.max(0.0);
    }
    let d = Normal::new(mu, sigma).expect("finite sigma");
    loop {
        let v = d.sample(rng);
        if v >= 0.0 {
            return v;
        }
    }
}

/// Draws `(B_i, X_i)` from a pixel stream.
pub fn draw_pixel<R: Rng + ?Sized>(rng: &mut R, mu_b: f64, sigma_b: f64, sigma_x: f64) -> (f64, f64) {
    let b = truncated_normal(rng, mu_b, sigma_b);
    let x = if sigma_x == 0.0 {
        1.0
    } else {
        Normal::new(1.0, sigma_x).expect("finite sigma").sample(rng)
    };
    (b, x)
}

fn check_knobs(mu_b: f64, sigma_b: f64, sigma_x: f64) -> Result<()> {
    if !(mu_b >= 0.0 && mu_b.is_finite()) {
        return Err(Error::domain(format!("mu_B must be finite and >= 0, got {mu_b}")));
    }
    if !(sigma_b >= 0.0 && sigma_b.is_finite() && sigma_x >= 0.0 && sigma_x.is_finite()) {
        return Err(Error::domain(format!(
            "spreads must be finite and >= 0, got sigma_B = {sigma_b}, sigma_X = {sigma_x}"
        )));
    }
    Ok(())
}

/// Per-pixel thresholds and leakage multipliers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelEnsemble {
    pub width: u32,
    pub height: u32,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub sigma_x: f64,
    pub seed: u64,
}

pub fn sample_ensemble(
    width: u32,
    height: u32,
    mu_b: f64,
    sigma_b: f64,
    sigma_x: f64,
    seed: u64,
) -> Result<PixelEnsemble> {
    check_knobs(mu_b, sigma_b, sigma_x)?;
    let n = width as usize * height as usize;
    let draws = par::map_range(n, |i| {
        draw_pixel(&mut pixel_rng(seed, i as u64), mu_b, sigma_b, sigma_x)
    });
    let (b, x) = draws.into_iter().unzip();
    Ok(PixelEnsemble {
        width,
        height,
        b,
        x,
        mu_b,
        sigma_b,
        sigma_x,
        seed,
    })
}

/// Dead-time corrected event rates `p± / (1 + (p+ + p−)·R)`.
pub fn effective_probability(p_pos: f64, p_neg: f64, refractory_us: f64) -> Result<(f64, f64)> {
    if !(p_pos >= 0.0 && p_neg >= 0.0 && p_pos + p_neg < 1.0) {
        return Err(Error::domain(format!(
            "need p+, p- >= 0 and p+ + p- < 1, got ({p_pos}, {p_neg})"
        )));
    }
    if !(refractory_us >= 0.0 && refractory_us.is_finite()) {
        return Err(Error::domain(format!(
            "refractory time must be >= 0, got {refractory_us}"
        )));
    }
    let d = 1.0 + (p_pos + p_neg) * refractory_us;
    Ok((p_pos / d, p_neg / d))
}

/// Greyscale value to scene illuminance.
#[derive(Debug, Clone, PartialEq)]
pub enum GreyscaleMap {
    /// `scale·g^exponent + offset`.
    Power { scale: f64, exponent: f64, offset: f64 },
    /// Lux for each of the 256 grey levels; fractional levels interpolate.
    Table(Vec<f64>),
}

impl Default for GreyscaleMap {
    fn default() -> Self {
        GreyscaleMap::Power {
            scale: 2.15e-5,
            exponent: 2.521,
            offset: 0.15,
        }
    }
}

impl GreyscaleMap {
    pub fn lux(&self, g: f64) -> Result<f64> {
        if !(0.0..=255.0).contains(&g) {
            return Err(Error::domain(format!("greyscale value {g} outside [0, 255]")));
        }
        Ok(match self {
            GreyscaleMap::Power {
                scale,
                exponent,
                offset,
            } => scale * g.powf(*exponent) + offset,
            GreyscaleMap::Table(t) => {
                let i = (g.floor() as usize).min(254);
                let f = g - i as f64;
                t[i] + f * (t[i + 1] - t[i])
            }
        })
    }

    /// Reads a table of `grey = lux` lines covering every level 0..=255.
    pub fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc = parse_sections(&text, path)?.remove(0).1;
        let mut t = Vec::with_capacity(256);
        for g in 0..=255u32 {
            t.push(doc.require::<f64>(path, &g.to_string())?);
        }
        if t.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::parse(path, 0, "greyscale table must be non-decreasing"));
        }
        Ok(GreyscaleMap::Table(t))
    }
}

pub fn greyscale_to_intensity(g: f64) -> Result<f64> {
    GreyscaleMap::default().lux(g)
}

/// 8-bit greyscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GreyImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GreyImage {
    pub fn uniform(width: u32, height: u32, g: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![g; width as usize * height as usize],
        }
    }

    /// Reads an 8-bit portable greymap.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        if img.color() != image::ColorType::L8 {
            return Err(Error::parse(
                path,
                0,
                format!("expected 8-bit greyscale, got {:?}", img.color()),
            ));
        }
        let g = img.into_luma8();
        Ok(Self {
            width: g.width(),
            height: g.height(),
            pixels: g.into_raw(),
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width, self.height, self.pixels.clone()).expect("pixel count");
        buf.save_with_format(path, ImageFormat::Pnm)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    /// Central `width x height` window; smaller images are rejected.
    pub fn center_crop(&self, width: u32, height: u32) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(Error::domain(format!(
                "image {}x{} smaller than ROI {width}x{height}",
                self.width, self.height
            )));
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in y0..y0 + height {
            let row = (y * self.width + x0) as usize;
            pixels.extend_from_slice(&self.pixels[row..row + width as usize]);
        }
        Ok(Self { width, height, pixels })
    }
}

/// Synthesis knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sigma_b: f64,
    pub sigma_x: f64,
    pub method: Method,
    /// Poisson is much slower per pixel and must be requested explicitly.
    pub allow_poisson: bool,
    /// Add the c_V floor to each pixel's probabilities.
    pub apply_floor: bool,
    pub greyscale: GreyscaleMap,
}

impl SynthConfig {
    pub fn new(method: Method) -> Self {
        let (sigma_b, sigma_x) = match method {
            Method::Poisson => (0.006, 0.0005),
            Method::Gaussian | Method::Saddle => (0.0065, 0.001),
        };
        Self {
            sigma_b,
            sigma_x,
            method,
            allow_poisson: method == Method::Poisson,
            apply_floor: true,
            greyscale: GreyscaleMap::default(),
        }
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        check_knobs(params.b, self.sigma_b, self.sigma_x)?;
        if self.method == Method::Poisson && !self.allow_poisson {
            return Err(Error::domain("Poisson synthesis requires allow_poisson"));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::new(Method::Saddle)
    }
}

/// Static-scene probabilities `(p+, p−)` for one pixel with threshold `b`
/// and leakage multiplier `x`. The flag reports a Gaussian fallback.
pub fn pixel_probabilities(
    params: &ModelParams,
    lambda: f64,
    b: f64,
    x: f64,
    method: Method,
    apply_floor: bool,
) -> Result<(f64, f64, bool)> {
    let pair = IntensityPair::fixed(lambda)?;
    let mut out = [0.0; 2];
    let mut fell_back = false;
    for (slot, pol) in out.iter_mut().zip(Polarity::BOTH) {
        let mut tr: Trigger = params.trigger(pair, pol);
        tr.b = b;
        tr.theta *= x;
        tr.theta0 *= x;
        let v = match tr.eval(method) {
            Ok(r) => r.value,
            Err(Error::SaddleDegenerate { .. }) => {
                fell_back = true;
                tr.gaussian()?.value
            }
            Err(e) => return Err(e),
        };
        *slot = if apply_floor { (v + params.cv(pol)).min(1.0) } else { v };
    }
    Ok((out[0], out[1], fell_back))
}

/// Per-pixel event counts accumulated over `integration_us`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseImage {
    pub width: u32,
    pub height: u32,
    pub counts_pos: Vec<u32>,
    pub counts_neg: Vec<u32>,
    pub integration_us: u64,
    pub seed: u64,
    pub params_digest: String,
    /// Pixels whose saddle evaluation fell back to the Gaussian.
    pub fallback_pixels: usize,
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u32 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    let k = Binomial::new(n, p).expect("valid binomial").sample(rng);
    u32::try_from(k).unwrap_or(u32::MAX)
}

pub fn synth_noise_image(
    image: &GreyImage,
    params: &ModelParams,
    cfg: &SynthConfig,
    integration_us: u64,
    seed: u64,
) -> Result<NoiseImage> {
    cfg.check(params)?;
    let n = image.pixels.len();
    let per_pixel = par::map_range(n, |i| -> Result<(u32, u32, bool)> {
        let mut rng = pixel_rng(seed, i as u64);
        let (b, x) = draw_pixel(&mut rng, params.b, cfg.sigma_b, cfg.sigma_x);
        let lux = cfg.greyscale.lux(image.pixels[i] as f64)?;
        let (pp, pn, fb) = pixel_probabilities(params, params.photons(lux), b, x, cfg.method, cfg.apply_floor)?;
        let (ep, en) = effective_probability(pp, pn, params.refractory_us)?;
        Ok((
            binomial(&mut rng, integration_us, ep),
            binomial(&mut rng, integration_us, en),
            fb,
        ))
    });
    let mut img = NoiseImage {
        width: image.width,
        height: image.height,
        counts_pos: Vec::with_capacity(n),
        counts_neg: Vec::with_capacity(n),
        integration_us,
        seed,
        params_digest: params.digest(),
        fallback_pixels: 0,
    };
    for r in per_pixel {
        let (cp, cn, fb) = r?;
        img.counts_pos.push(cp);
        img.counts_neg.push(cn);
        img.fallback_pixels += fb as usize;
    }
    if img.fallback_pixels > 0 {
        log::warn!(
            "{} pixel(s) used the Gaussian fallback (saddle point at the origin)",
            img.fallback_pixels
        );
    }
    Ok(img)
}

impl NoiseImage {
    pub fn counts(&self, pol: Polarity) -> &[u32] {
        match pol {
            Polarity::Positive => &self.counts_pos,
            Polarity::Negative => &self.counts_neg,
        }
    }

    pub fn metadata(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("width", self.width);
        doc.push("height", self.height);
        doc.push("integration_us", self.integration_us);
        doc.push("seed", self.seed);
        doc.push("params_digest", &self.params_digest);
        doc.push("fallback_pixels", self.fallback_pixels);
        doc
    }

    /// Writes `<stem>_pos.pgm`, `<stem>_neg.pgm` (16-bit, clamped at 65535)
    /// and `<stem>.meta`. Returns the written paths.
    pub fn write_pgm(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let mut written = Vec::new();
        let mut clamped = 0usize;
        for (pol, suffix) in [(Polarity::Positive, "_pos.pgm"), (Polarity::Negative, "_neg.pgm")] {
            let data: Vec<u16> = self
                .counts(pol)
                .iter()
                .map(|&c| {
                    if c > u16::MAX as u32 {
                        clamped += 1;
                    }
                    c.min(u16::MAX as u32) as u16
                })
                .collect();
            let path = with(suffix);
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(self.width, self.height, data).expect("pixel count");
            buf.save_with_format(&path, ImageFormat::Pnm)
                .map_err(|e| Error::parse(&path, 0, e.to_string()))?;
            written.push(path);
        }
        if clamped > 0 {
            log::warn!("{clamped} count(s) clamped at 65535 in 16-bit output");
        }
        let mut meta = self.metadata();
        meta.push("clamped_counts", clamped);
        let path = with(".meta");
        meta.write(&path)?;
        written.push(path);
        Ok(written)
    }

    /// Writes `x,y,count_pos,count_neg`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("x,y,count_pos,count_neg\n");
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y * self.width + x) as usize;
                text.push_str(&format!("{x},{y},{},{}\n", self.counts_pos[i], self.counts_neg[i]));
            }
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Event stream for a uniform static scene. Each pixel fires at most one
/// event per timestep and is blind for `round(R)` microseconds afterwards.
pub fn synth_recording(
    intensity_lux: f64,
    params: &ModelParams,
    cfg: &SynthConfig,
    width: u32,
    height: u32,
    duration_us: u64,
    seed: u64,
) -> Result<Recording> {
    cfg.check(params)?;
    if duration_us < 1 {
        return Err(Error::domain("duration must be >= 1 us"));
    }
    if !(intensity_lux >= 0.0 && intensity_lux.is_finite()) {
        return Err(Error::domain(format!("intensity must be >= 0, got {intensity_lux}")));
    }
    let lambda = params.photons(intensity_lux);
    let blind = params.refractory_us.round() as u64;
    let n = width as usize * height as usize;
    let per_pixel = par::map_range(n, |i| -> Result<Vec<EventRecord>> {
        let mut rng = pixel_rng(seed, i as u64);
        let (b, x) = draw_pixel(&mut rng, params.b, cfg.sigma_b, cfg.sigma_x);
        let (pp, pn, _) = pixel_probabilities(params, lambda, b, x, cfg.method, cfg.apply_floor)?;
        let q = pp + pn;
        if q >= 1.0 {
            return Err(Error::domain(format!("p+ + p- = {q} >= 1")));
        }
        let mut out = Vec::new();
        if q == 0.0 {
            return Ok(out);
        }
        let gap = Geometric::new(q).expect("0 < q < 1");
        let (px, py) = ((i % width as usize) as u32, (i / width as usize) as u32);
        let mut t = 0u64;
        loop {
            t = t.saturating_add(gap.sample(&mut rng));
            if t >= duration_us {
                break;
            }
            let p = if rng.random::<f64>() * q < pp {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            out.push(EventRecord { x: px, y: py, t, p });
            t = t.saturating_add(blind + 1);
        }
        Ok(out)
    });
    let mut events = Vec::new();
    for r in per_pixel {
        events.extend(r?);
    }
    events.sort_by_key(|e| (e.t, e.y, e.x));
    Recording::new(
        events,
        duration_us,
        width,
        height,
        params.refractory_us,
        intensity_lux,
        Default::default(),
    )
}

/// Sidecar for a synthetic recording, including generator settings.
pub fn recording_generator_doc(params: &ModelParams, cfg: &SynthConfig, seed: u64) -> KvDoc {
    let mut doc = KvDoc::new();
    doc.push("generator.seed", seed);
    doc.push("generator.method", cfg.method);
    doc.push("generator.sigma_B", fmt_f64(cfg.sigma_b));
    doc.push("generator.sigma_X", fmt_f64(cfg.sigma_x));
    doc.push("generator.apply_floor", cfg.apply_floor);
    doc.push("generator.params_digest", params.digest());
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn greyscale_examples() {
        assert_eq!(greyscale_to_intensity(0.0).unwrap(), 0.15);
        assert_relative_eq!(
            greyscale_to_intensity(255.0).unwrap(),
            25.229926233533789,
            max_relative = 1e-12
        );
        let mut last = -1.0;
        for g in 0..=255 {
            let v = greyscale_to_intensity(g as f64).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(greyscale_to_intensity(256.0).is_err());
        assert!(greyscale_to_intensity(-1.0).is_err());
    }

    #[test]
    fn greyscale_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.txt");
        let text: String = (0..=255).map(|g| format!("{g} = {}\n", g as f64 * 0.1)).collect();
        std::fs::write(&path, text).unwrap();
        let m = GreyscaleMap::read_table(&path).unwrap();
        assert_relative_eq!(m.lux(10.0).unwrap(), 1.0);
        assert_relative_eq!(m.lux(10.5).unwrap(), 1.05);
        std::fs::write(&path, "0 = 1\n").unwrap();
        assert!(GreyscaleMap::read_table(&path).is_err());
    }

    #[test]
    fn effective_probability_examples() {
        assert_eq!(effective_probability(1e-5, 2e-5, 0.0).unwrap(), (1e-5, 2e-5));
        assert_eq!(effective_probability(0.0, 0.0, 79.0).unwrap(), (0.0, 0.0));
        let (p, _) = effective_probability(1e-5, 2e-5, 79.0).unwrap();
        assert_relative_eq!(p, 9.97635603619422e-06, max_relative = 1e-12);
        assert!(effective_probability(0.6, 0.5, 1.0).is_err());
        assert!(effective_probability(0.1, 0.1, -1.0).is_err());
    }

    #[test]
    fn ensemble_basics() {
        let e = sample_ensemble(4, 3, 0.15, 0.0, 0.0, 1).unwrap();
        assert!(e.b.iter().all(|&b| b == 0.15));
        assert!(e.x.iter().all(|&x| x == 1.0));
        let a = sample_ensemble(8, 8, 0.15, 0.05, 0.01, 9).unwrap();
        let b = sample_ensemble(8, 8, 0.15, 0.05, 0.01, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_ensemble(8, 8, 0.15, 0.05, 0.01, 10).unwrap();
        assert_ne!(a.b, c.b);
        // Heavy truncation still yields non-negative thresholds.
        let t = sample_ensemble(50, 50, 0.01, 0.2, 0.0, 3).unwrap();
        assert!(t.b.iter().all(|&b| b >= 0.0));
        assert!(sample_ensemble(2, 2, 0.15, -1.0, 0.0, 0).is_err());
    }

    #[test]
    fn crop_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GreyImage {
            width: 4,
            height: 3,
            pixels: (0..12).collect(),
        };
        let c = img.center_crop(2, 1).unwrap();
        assert_eq!(c.pixels, vec![5, 6]);
        assert!(img.center_crop(5, 1).is_err());
        let p = dir.path().join("g.pgm");
        img.write_pgm(&p).unwrap();
        assert_eq!(GreyImage::read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn noise_image_determinism_and_zero_time() {
        let p = ModelParams::default_bias();
        let img = GreyImage::uniform(16, 8, 40);
        let cfg = SynthConfig::default();
        let a = synth_noise_image(&img, &p, &cfg, 1_000_000, 5).unwrap();
        let b = synth_noise_image(&img, &p, &cfg, 1_000_000, 5).unwrap();
        assert_eq!(a, b);
        let z = synth_noise_image(&img, &p, &cfg, 0, 5).unwrap();
        assert!(z.counts_pos.iter().chain(&z.counts_neg).all(|&c| c == 0));
        let mut no_poisson = SynthConfig::new(Method::Poisson);
        no_poisson.allow_poisson = false;
        assert!(synth_noise_image(&img, &p, &no_poisson, 10, 5).is_err());
    }

    #[test]
    fn noise_image_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::default_bias();
        let mut img = synth_noise_image(&GreyImage::uniform(3, 2, 0), &p, &SynthConfig::default(), 10, 1).unwrap();
        img.counts_pos[0] = 70_000;
        let stem = dir.path().join("out");
        let files = img.write_pgm(&stem).unwrap();
        assert_eq!(files.len(), 3);
        let back = image::open(&files[0]).unwrap().into_luma16();
        assert_eq!(back.get_pixel(0, 0).0[0], 65535);
        let meta = KvDoc::read(&files[2]).unwrap();
        assert_eq!(meta.get("clamped_counts"), Some("1"));
        assert_eq!(meta.get("seed"), Some("1"));
        let csv = dir.path().join("out.csv");
        img.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("x,y,count_pos,count_neg\n0,0,70000,"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn recording_respects_dead_time() {
        let mut p = ModelParams::default_bias();
        p.cv_pos = 0.01;
        p.cv_neg = 0.01;
        let cfg = SynthConfig::default();
        let rec = synth_recording(2.0, &p, &cfg, 4, 4, 20_000, 3).unwrap();
        assert!(!rec.events().is_empty());
        let mut last = vec![None::<u64>; 16];
        for e in rec.events() {
            let i = rec.pixel_index(e.x, e.y);
            if let Some(t0) = last[i] {
                assert!(e.t - t0 >= 80, "gap {} at pixel {i}", e.t - t0);
            }
            last[i] = Some(e.t);
        }
        let again = synth_recording(2.0, &p, &cfg, 4, 4, 20_000, 3).unwrap();
        assert_eq!(rec, again);
    }

    #[test]
    fn zero_probability_recording_is_empty() {
        let mut p = ModelParams::default_bias();
        p.cv_pos = 0.0;
        p.cv_neg = 0.0;
        let cfg = SynthConfig {
            sigma_b: 0.0,
            sigma_x: 0.0,
            ..SynthConfig::default()
        };
        let rec = synth_recording(0.0, &p, &cfg, 8, 8, 100_000, 1).unwrap();
        assert!(rec.events().is_empty());
    }
}
