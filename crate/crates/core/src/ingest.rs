//! Event recordings and empirical noise-probability estimation.
//!
//! The estimator for a static scene divides the polarity's event count by
//! the number of live pixel-timesteps, discounting the refractory period
//! that follows every event:
//!
//! ```text
//! P̂± = N± / (T·M − R·N_tot)
//! ```

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::params::{fmt_f64, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub x: u32,
    pub y: u32,
    /// Timestamp in microseconds.
    pub t: u64,
    pub p: Polarity,
}

/// An ordered event stream over a rectangular region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    events: Vec<EventRecord>,
    pub duration_us: u64,
    pub width: u32,
    pub height: u32,
    pub refractory_us: f64,
    pub intensity_lux: f64,
    excluded: BTreeSet<(u32, u32)>,
}

impl Recording {
    /// Validates the stream, sorts it by time (stable) and drops events at
    /// excluded pixels.
    pub fn new(
        mut events: Vec<EventRecord>,
        duration_us: u64,
        width: u32,
        height: u32,
        refractory_us: f64,
        intensity_lux: f64,
        excluded: BTreeSet<(u32, u32)>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("recording ROI must be non-empty"));
        }
        if !(refractory_us >= 0.0 && refractory_us.is_finite()) {
            return Err(Error::domain(format!(
                "refractory time must be >= 0, got {refractory_us}"
            )));
        }
        for e in &events {
            if e.x >= width || e.y >= height {
                return Err(Error::domain(format!(
                    "event at ({}, {}) outside {width}x{height} ROI",
                    e.x, e.y
                )));
            }
            if e.t > duration_us {
                return Err(Error::domain(format!(
                    "event at t = {} beyond duration {duration_us}",
                    e.t
                )));
            }
        }
        if let Some(&(x, y)) = excluded.iter().find(|(x, y)| *x >= width || *y >= height) {
            return Err(Error::domain(format!("excluded pixel ({x}, {y}) outside ROI")));
        }
        if !events.windows(2).all(|w| w[0].t <= w[1].t) {
            events.sort_by_key(|e| e.t);
        }
        if !excluded.is_empty() {
            events.retain(|e| !excluded.contains(&(e.x, e.y)));
        }
        Ok(Self {
            events,
            duration_us,
            width,
            height,
            refractory_us,
            intensity_lux,
            excluded,
        })
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn excluded(&self) -> &BTreeSet<(u32, u32)> {
        &self.excluded
    }

    pub fn is_excluded(&self, x: u32, y: u32) -> bool {
        self.excluded.contains(&(x, y))
    }

    /// Number of included pixels M.
    pub fn n_pixels(&self) -> usize {
        self.width as usize * self.height as usize - self.excluded.len()
    }

    pub fn pixel_index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Returns a copy with additional pixels excluded.
    pub fn with_excluded(&self, more: &BTreeSet<(u32, u32)>) -> Result<Self> {
        let mut excl = self.excluded.clone();
        excl.extend(more.iter().copied());
        Self::new(
            self.events.clone(),
            self.duration_us,
            self.width,
            self.height,
            self.refractory_us,
            self.intensity_lux,
            excl,
        )
    }

    pub fn count(&self, pol: Polarity) -> usize {
        self.events.iter().filter(|e| e.p == pol).count()
    }

    pub fn metadata(&self) -> RecordingMeta {
        RecordingMeta {
            duration_us: self.duration_us,
            width: self.width,
            height: self.height,
            refractory_us: self.refractory_us,
            intensity_lux: self.intensity_lux,
            excluded_path: None,
        }
    }

    /// Loads events and exclusions described by a metadata sidecar.
    pub fn load(events_path: &Path, meta_path: &Path) -> Result<Self> {
        let meta = RecordingMeta::read(meta_path)?;
        let events = read_events(events_path, meta.width, meta.height)?;
        let excluded = match &meta.excluded_path {
            Some(p) => read_excluded(p)?,
            None => BTreeSet::new(),
        };
        Self::new(
            events,
            meta.duration_us,
            meta.width,
            meta.height,
            meta.refractory_us,
            meta.intensity_lux,
            excluded,
        )
    }
}

/// Recording sidecar contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub duration_us: u64,
    pub width: u32,
    pub height: u32,
    pub refractory_us: f64,
    pub intensity_lux: f64,
    /// Resolved against the sidecar's directory when relative.
    pub excluded_path: Option<PathBuf>,
}

impl RecordingMeta {
    pub fn read(path: &Path) -> Result<Self> {
        let doc = KvDoc::read(path)?;
        let excluded_path = doc.get("excluded").map(|p| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p
            }
        });
        Ok(Self {
            duration_us: doc.require(path, "duration_us")?,
            width: doc.require(path, "width")?,
            height: doc.require(path, "height")?,
            refractory_us: doc.require(path, "refractory_us")?,
            intensity_lux: doc.require(path, "intensity_lux")?,
            excluded_path,
        })
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("duration_us", self.duration_us);
        doc.push("width", self.width);
        doc.push("height", self.height);
        doc.push("refractory_us", fmt_f64(self.refractory_us));
        doc.push("intensity_lux", fmt_f64(self.intensity_lux));
        if let Some(p) = &self.excluded_path {
            doc.push("excluded", p.display());
        }
        doc
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_kv().write(path)
    }
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

pub(crate) fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub(crate) fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing field `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} `{raw}`")))
}

/// Reads an `x,y,t,p` event file. Rows must be integers with non-decreasing
/// `t`, `p` in {1, -1} and coordinates inside the ROI.
pub fn read_events(path: &Path, width: u32, height: u32) -> Result<Vec<EventRecord>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &["x", "y", "t", "p"])?;
    if headers.len() != 4 {
        return Err(Error::parse(path, 1, "event file must have exactly 4 columns"));
    }
    let mut out = Vec::new();
    let mut last_t = 0u64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let x: u32 = field(path, &rec, 0, "x")?;
        let y: u32 = field(path, &rec, 1, "y")?;
        let t: u64 = field(path, &rec, 2, "t")?;
        let p: i64 = field(path, &rec, 3, "p")?;
        let p = Polarity::from_sign(p)
            .ok_or_else(|| Error::parse(path, line, format!("polarity must be 1 or -1, got {p}")))?;
        if x >= width || y >= height {
            return Err(Error::parse(
                path,
                line,
                format!("event ({x}, {y}) outside {width}x{height} ROI"),
            ));
        }
        if t < last_t {
            return Err(Error::parse(path, line, format!("timestamp {t} decreases")));
        }
        last_t = t;
        out.push(EventRecord { x, y, t, p });
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,t,p").map_err(io)?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.x, e.y, e.t, e.p.sign() as i64).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads an excluded-pixel file: one `x,y` pair per line, `#` comments
/// allowed.
pub fn read_excluded(path: &Path) -> Result<BTreeSet<(u32, u32)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line == "x,y" {
            continue;
        }
        let bad = || Error::parse(path, i + 1, format!("expected `x,y`, got `{line}`"));
        let (x, y) = line.split_once(',').ok_or_else(bad)?;
        let x = x.trim().parse().map_err(|_| bad())?;
        let y = y.trim().parse().map_err(|_| bad())?;
        out.insert((x, y));
    }
    Ok(out)
}

pub fn write_excluded(path: &Path, pixels: &BTreeSet<(u32, u32)>) -> Result<()> {
    let mut text = String::new();
    for (x, y) in pixels {
        text.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `n_pol / (duration·pixels − R·n_total)`.
pub fn estimator(n_pol: u64, n_total: u64, duration_us: f64, pixels: f64, refractory_us: f64) -> Result<f64> {
    let denom = duration_us * pixels - refractory_us * n_total as f64;
    if denom <= 0.0 {
        return Err(Error::DegenerateRecording(format!(
            "live time {denom} <= 0 (T = {duration_us}, M = {pixels}, R = {refractory_us}, N = {n_total})"
        )));
    }
    Ok(n_pol as f64 / denom)
}

pub fn estimate_probability(rec: &Recording, pol: Polarity) -> Result<f64> {
    let n_tot = rec.events.len() as u64;
    let n_pol = rec.count(pol) as u64;
    estimator(
        n_pol,
        n_tot,
        rec.duration_us as f64,
        rec.n_pixels() as f64,
        rec.refractory_us,
    )
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Per-bin probability estimates over `floor(T / bin_us)` full bins.
pub fn binned_estimates(rec: &Recording, bin_us: u64, pol: Polarity) -> Result<Vec<f64>> {
    if bin_us == 0 {
        return Err(Error::domain("bin width must be >= 1 us"));
    }
    let nb = (rec.duration_us / bin_us) as usize;
    if nb < 2 {
        return Err(Error::InsufficientData(format!(
            "{nb} full bins of {bin_us} us in a {} us recording",
            rec.duration_us
        )));
    }
    let mut tot = vec![0u64; nb];
    let mut hit = vec![0u64; nb];
    for e in &rec.events {
        let b = (e.t / bin_us) as usize;
        if b >= nb {
            break;
        }
        tot[b] += 1;
        if e.p == pol {
            hit[b] += 1;
        }
    }
    let m = rec.n_pixels() as f64;
    (0..nb)
        .map(|b| estimator(hit[b], tot[b], bin_us as f64, m, rec.refractory_us))
        .collect()
}

/// Mean and sample standard deviation of per-bin estimates.
pub fn temporal_variance(rec: &Recording, bin_us: u64, pol: Polarity) -> Result<(f64, f64)> {
    Ok(mean_std(&binned_estimates(rec, bin_us, pol)?))
}

/// Per-pixel estimates (M = 1) over included pixels, row-major.
pub fn pixel_estimates(rec: &Recording, pol: Polarity) -> Result<Vec<f64>> {
    let n = rec.width as usize * rec.height as usize;
    let mut tot = vec![0u64; n];
    let mut hit = vec![0u64; n];
    for e in &rec.events {
        let i = rec.pixel_index(e.x, e.y);
        tot[i] += 1;
        if e.p == pol {
            hit[i] += 1;
        }
    }
    let mut out = Vec::with_capacity(rec.n_pixels());
    for y in 0..rec.height {
        for x in 0..rec.width {
            if rec.is_excluded(x, y) {
                continue;
            }
            let i = rec.pixel_index(x, y);
            out.push(estimator(
                hit[i],
                tot[i],
                rec.duration_us as f64,
                1.0,
                rec.refractory_us,
            )?);
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation of per-pixel estimates.
pub fn spatial_variance(rec: &Recording, pol: Polarity) -> Result<(f64, f64)> {
    if rec.n_pixels() < 2 {
        return Err(Error::InsufficientData(format!(
            "spatial variance needs >= 2 pixels, have {}",
            rec.n_pixels()
        )));
    }
    Ok(mean_std(&pixel_estimates(rec, pol)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSweepRow {
    pub bin_us: u64,
    pub mean: f64,
    pub std: f64,
    /// `std / mean`; `None` when the mean is zero.
    pub rel_std: Option<f64>,
}

pub fn bin_size_sweep(rec: &Recording, pol: Polarity, bins: &[u64]) -> Result<Vec<BinSweepRow>> {
    bins.iter()
        .map(|&bin_us| {
            let (mean, std) = temporal_variance(rec, bin_us, pol)?;
            Ok(BinSweepRow {
                bin_us,
                mean,
                std,
                rel_std: (mean > 0.0).then(|| std / mean),
            })
        })
        .collect()
}

pub fn write_bin_sweep(path: &Path, rows: &[BinSweepRow]) -> Result<()> {
    let mut text = String::from("bin_us,mean,std,rel_std\n");
    for r in rows {
        let rel = r.rel_std.map(|v| format!("{v:e}")).unwrap_or_default();
        text.push_str(&format!("{},{:e},{:e},{}\n", r.bin_us, r.mean, r.std, rel));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One intensity level of an empirical noise curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub intensity_lux: f64,
    pub p_pos: f64,
    pub p_neg: f64,
    pub std_pos: f64,
    pub std_neg: f64,
    pub std_spatial_pos: Option<f64>,
    pub std_spatial_neg: Option<f64>,
}

impl CurvePoint {
    pub fn p(&self, pol: Polarity) -> f64 {
        match pol {
            Polarity::Positive => self.p_pos,
            Polarity::Negative => self.p_neg,
        }
    }

    pub fn std(&self, pol: Polarity, spatial: bool) -> Option<f64> {
        match (pol, spatial) {
            (Polarity::Positive, false) => Some(self.std_pos),
            (Polarity::Negative, false) => Some(self.std_neg),
            (Polarity::Positive, true) => self.std_spatial_pos,
            (Polarity::Negative, true) => self.std_spatial_neg,
        }
    }

    /// Whole-recording estimates with temporal spread from `bin_us` bins
    /// and spatial spread across pixels.
    pub fn from_recording(rec: &Recording, bin_us: u64) -> Result<Self> {
        let mut sp = [None, None];
        if rec.n_pixels() >= 2 {
            sp = [
                Some(spatial_variance(rec, Polarity::Positive)?.1),
                Some(spatial_variance(rec, Polarity::Negative)?.1),
            ];
        }
        Ok(Self {
            intensity_lux: rec.intensity_lux,
            p_pos: estimate_probability(rec, Polarity::Positive)?,
            p_neg: estimate_probability(rec, Polarity::Negative)?,
            std_pos: temporal_variance(rec, bin_us, Polarity::Positive)?.1,
            std_neg: temporal_variance(rec, bin_us, Polarity::Negative)?.1,
            std_spatial_pos: sp[0],
            std_spatial_neg: sp[1],
        })
    }
}

/// Estimated probabilities against intensity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalCurve {
    pub points: Vec<CurvePoint>,
}

const CURVE_HEADER: [&str; 5] = ["intensity_lux", "p_pos", "p_neg", "std_pos", "std_neg"];

impl EmpiricalCurve {
    pub fn new(mut points: Vec<CurvePoint>) -> Result<Self> {
        for p in &points {
            for v in [p.p_pos, p.p_neg] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::domain(format!("probability {v} outside [0, 1]")));
                }
            }
            for v in [p.std_pos, p.std_neg] {
                if !(v >= 0.0) {
                    return Err(Error::domain(format!("negative or NaN std {v}")));
                }
            }
            if !(p.intensity_lux > 0.0 && p.intensity_lux.is_finite()) {
                return Err(Error::domain(format!("intensity must be > 0, got {}", p.intensity_lux)));
            }
        }
        points.sort_by(|a, b| a.intensity_lux.total_cmp(&b.intensity_lux));
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads `intensity_lux,p_pos,p_neg,std_pos,std_neg`, optionally followed
    /// by `std_spatial_pos,std_spatial_neg`.
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv_reader(path)?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        check_header(path, &headers, &CURVE_HEADER)?;
        let spatial = headers.len() >= 7
            && headers.get(5) == Some("std_spatial_pos")
            && headers.get(6) == Some("std_spatial_neg");
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let opt = |i: usize, name: &str| -> Result<Option<f64>> {
                match rec.get(i) {
                    Some(s) if spatial && !s.is_empty() => field(path, &rec, i, name).map(Some),
                    _ => Ok(None),
                }
            };
            pts.push(CurvePoint {
                intensity_lux: field(path, &rec, 0, "intensity_lux")?,
                p_pos: field(path, &rec, 1, "p_pos")?,
                p_neg: field(path, &rec, 2, "p_neg")?,
                std_pos: field(path, &rec, 3, "std_pos")?,
                std_neg: field(path, &rec, 4, "std_neg")?,
                std_spatial_pos: opt(5, "std_spatial_pos")?,
                std_spatial_neg: opt(6, "std_spatial_neg")?,
            });
        }
        Self::new(pts).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn render(&self) -> String {
        let spatial = self
            .points
            .iter()
            .any(|p| p.std_spatial_pos.is_some() || p.std_spatial_neg.is_some());
        let mut text = CURVE_HEADER.join(",");
        if spatial {
            text.push_str(",std_spatial_pos,std_spatial_neg");
        }
        text.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for p in &self.points {
            text.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}",
                p.intensity_lux, p.p_pos, p.p_neg, p.std_pos, p.std_neg
            ));
            if spatial {
                text.push_str(&format!(",{},{}", opt(p.std_spatial_pos), opt(p.std_spatial_neg)));
            }
            text.push('\n');
        }
        text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
