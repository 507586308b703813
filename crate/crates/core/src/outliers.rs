//! Outlier pixels from run-length statistics.
//!
//! A run is a maximal sequence of same-polarity events at one pixel on
//! consecutive timesteps; several events within one timestep extend the
//! current run. ℓ denotes the frequency of runs of a given length m.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{write_excluded, Recording};
use crate::params::Polarity;
use crate::special::normal_isf;

/// Run-length histograms for one pixel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelRuns {
    pub pos: BTreeMap<u32, u64>,
    pub neg: BTreeMap<u32, u64>,
}

impl PixelRuns {
    pub fn runs(&self, pol: Polarity) -> &BTreeMap<u32, u64> {
        match pol {
            Polarity::Positive => &self.pos,
            Polarity::Negative => &self.neg,
        }
    }

    fn runs_mut(&mut self, pol: Polarity) -> &mut BTreeMap<u32, u64> {
        match pol {
            Polarity::Positive => &mut self.pos,
            Polarity::Negative => &mut self.neg,
        }
    }

    /// Frequency of single-event runs.
    pub fn singles(&self, pol: Polarity) -> u64 {
        self.runs(pol).get(&1).copied().unwrap_or(0)
    }

    pub fn max_run(&self) -> u32 {
        self.pos.keys().chain(self.neg.keys()).copied().max().unwrap_or(0)
    }

    /// Σ m·ℓ, the number of events of `pol` at this pixel.
    pub fn events(&self, pol: Polarity) -> u64 {
        self.runs(pol).iter().map(|(m, l)| *m as u64 * l).sum()
    }
}

/// Builds run histograms from one pixel's time-ordered `(t, polarity)`
/// sequence.
pub fn runs_from_sequence(seq: &[(u64, Polarity)]) -> PixelRuns {
    let mut out = PixelRuns::default();
    let mut cur: Option<(Polarity, u64, u32)> = None;
    for &(t, p) in seq {
        cur = match cur {
            Some((cp, last, m)) if cp == p && t <= last + 1 => Some((cp, t, m + 1)),
            Some((cp, _, m)) => {
                *out.runs_mut(cp).entry(m).or_default() += 1;
                Some((p, t, 1))
            }
            None => Some((p, t, 1)),
        };
    }
    if let Some((cp, _, m)) = cur {
        *out.runs_mut(cp).entry(m).or_default() += 1;
    }
    out
}

/// Run statistics for every ROI pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<PixelRuns>,
    pub included: Vec<bool>,
}

impl RunStats {
    fn coords(&self, i: usize) -> (u32, u32) {
        ((i % self.width as usize) as u32, (i / self.width as usize) as u32)
    }

    fn included_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pixels.len()).filter(|&i| self.included[i])
    }

    /// ℓ for m = 1 over included pixels.
    pub fn singles(&self, pol: Polarity) -> Vec<f64> {
        self.included_indices()
            .map(|i| self.pixels[i].singles(pol) as f64)
            .collect()
    }
}

pub fn run_length_stats(rec: &Recording) -> RunStats {
    let n = rec.width as usize * rec.height as usize;
    let mut seqs: Vec<Vec<(u64, Polarity)>> = vec![Vec::new(); n];
    for e in rec.events() {
        seqs[rec.pixel_index(e.x, e.y)].push((e.t, e.p));
    }
    let pixels = crate::par::map(&seqs, |s| runs_from_sequence(s));
    let mut included = vec![true; n];
    for &(x, y) in rec.excluded() {
        included[rec.pixel_index(x, y)] = false;
    }
    RunStats {
        width: rec.width,
        height: rec.height,
        pixels,
        included,
    }
}

/// Pixels with any run of two or more events, row-major.
pub fn detect_type2(stats: &RunStats) -> Vec<(u32, u32)> {
    stats
        .included_indices()
        .filter(|&i| stats.pixels[i].max_run() >= 2)
        .map(|i| stats.coords(i))
        .collect()
}

/// Indices whose value exceeds `mean + k·σ` (population σ). Equal values
/// flag nothing.
pub fn hot_indices(values: &[f64], k_sigma: f64) -> Result<Vec<usize>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "hot-count test needs >= 2 pixels, have {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 || k_sigma.is_infinite() {
        return Ok(Vec::new());
    }
    let cut = mean + k_sigma * sd;
    Ok((0..values.len()).filter(|&i| values[i] > cut).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFlag {
    pub x: u32,
    pub y: u32,
    pub kind: FlagKind,
    pub polarity: Option<Polarity>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlagKind {
    Type2,
    HotCounts,
    Deviance,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::Type2 => "type2",
            FlagKind::HotCounts => "hot_counts",
            FlagKind::Deviance => "deviance",
        }
    }
}

/// Pixels whose single-run frequency is more than `k_sigma` standard
/// deviations above the array mean, per polarity.
pub fn detect_hot_counts(stats: &RunStats, k_sigma: f64) -> Result<Vec<PixelFlag>> {
    let idx: Vec<usize> = stats.included_indices().collect();
    let mut out = Vec::new();
    for pol in Polarity::BOTH {
        let vals = stats.singles(pol);
        for j in hot_indices(&vals, k_sigma)? {
            let (x, y) = stats.coords(idx[j]);
            out.push(PixelFlag {
                x,
                y,
                kind: FlagKind::HotCounts,
                polarity: Some(pol),
                value: vals[j],
            });
        }
    }
    Ok(out)
}

/// Poisson deviance residuals of `values` against their mean.
pub fn deviance_of(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::NotApplicable("no pixels".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean <= 0.0 {
        return Err(Error::NotApplicable(
            "mean run frequency is zero (no noise events)".into(),
        ));
    }
    Ok(values
        .iter()
        .map(|&l| {
            let log_term = if l == 0.0 { 0.0 } else { l * (l / mean).ln() };
            let d = (2.0 * (log_term - (l - mean))).max(0.0);
            (l - mean).signum() * d.sqrt()
        })
        .collect())
}

/// Deviance residuals of the single-run frequency over included pixels.
pub fn deviance_residuals(stats: &RunStats, pol: Polarity) -> Result<Vec<f64>> {
    deviance_of(&stats.singles(pol))
}

/// `S⁻¹(â / 2M)`: the two-sided Bonferroni cutoff for M tests.
pub fn bonferroni_threshold(a_hat: f64, m: usize) -> Result<f64> {
    if !(a_hat > 0.0 && a_hat < 1.0) {
        return Err(Error::domain(format!("a_hat must be in (0, 1), got {a_hat}")));
    }
    if m < 1 {
        return Err(Error::domain("pixel count must be >= 1"));
    }
    Ok(normal_isf(a_hat / (2.0 * m as f64)))
}

/// Indices with `|r| > ε_B`.
pub fn deviance_flags(values: &[f64], a_hat: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let r = deviance_of(values)?;
    let eps = bonferroni_threshold(a_hat, values.len())?;
    Ok(((0..r.len()).filter(|&i| r[i].abs() > eps).collect(), r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierConfig {
    pub a_hat: f64,
    pub k_sigma: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            a_hat: 0.01,
            k_sigma: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub width: u32,
    pub height: u32,
    /// Flags ordered row-major, then by kind and polarity.
    pub flags: Vec<PixelFlag>,
    /// Residual threshold used, if the deviance test ran.
    pub threshold: Option<f64>,
    /// Reasons a test was skipped.
    pub notes: Vec<String>,
}

impl OutlierReport {
    pub fn flagged_pixels(&self) -> BTreeSet<(u32, u32)> {
        self.flags.iter().map(|f| (f.x, f.y)).collect()
    }

    pub fn render_csv(&self) -> String {
        let mut text = String::from("x,y,flag,polarity,value\n");
        for f in &self.flags {
            let pol = f.polarity.map_or("both", |p| p.as_str());
            text.push_str(&format!("{},{},{},{},{:e}\n", f.x, f.y, f.kind.as_str(), pol, f.value));
        }
        text
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_csv()).map_err(|e| Error::io(path, e))
    }

    /// Writes the flagged pixels as an excluded-pixel file.
    pub fn write_excluded(&self, path: &Path) -> Result<()> {
        write_excluded(path, &self.flagged_pixels())
    }
}

/// Runs the Type-2, hot-count and deviance tests. The deviance test is
/// skipped (and noted) when a polarity has no single-event runs.
pub fn detect_outliers(rec: &Recording, cfg: &OutlierConfig) -> Result<OutlierReport> {
    let stats = run_length_stats(rec);
    let mut flags: Vec<PixelFlag> = Vec::new();
    for (x, y) in detect_type2(&stats) {
        let i = rec.pixel_index(x, y);
        flags.push(PixelFlag {
            x,
            y,
            kind: FlagKind::Type2,
            polarity: None,
            value: stats.pixels[i].max_run() as f64,
        });
    }
    let mut notes = Vec::new();
    if stats.included.iter().filter(|v| **v).count() >= 2 {
        flags.extend(detect_hot_counts(&stats, cfg.k_sigma)?);
    } else {
        notes.push("hot-count test skipped: fewer than 2 pixels".to_string());
    }
    let idx: Vec<usize> = stats.included_indices().collect();
    let mut threshold = None;
    for pol in Polarity::BOTH {
        match deviance_flags(&stats.singles(pol), cfg.a_hat) {
            Ok((hits, r)) => {
                threshold = Some(bonferroni_threshold(cfg.a_hat, idx.len())?);
                for j in hits {
                    let (x, y) = stats.coords(idx[j]);
                    flags.push(PixelFlag {
                        x,
                        y,
                        kind: FlagKind::Deviance,
                        polarity: Some(pol),
                        value: r[j],
                    });
                }
            }
            Err(Error::NotApplicable(why)) => {
                notes.push(format!("deviance test ({pol}) not applicable: {why}"));
            }
            Err(e) => return Err(e),
        }
    }
    flags.sort_by(|a, b| {
        (a.y, a.x, a.kind, a.polarity.map(|p| p.as_str())).cmp(&(b.y, b.x, b.kind, b.polarity.map(|p| p.as_str())))
    });
    Ok(OutlierReport {
        width: rec.width,
        height: rec.height,
        flags,
        threshold,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventRecord;
    use approx::assert_relative_eq;
    use Polarity::{Negative as N, Positive as P};

    fn seq(steps: &[&[Polarity]]) -> Vec<(u64, Polarity)> {
        steps
            .iter()
            .enumerate()
            .flat_map(|(t, ps)| ps.iter().map(move |p| (t as u64, *p)))
            .collect()
    }

    #[test]
    fn worked_sequences() {
        let a = runs_from_sequence(&seq(&[&[P], &[P], &[], &[], &[N], &[]]));
        assert_eq!(a.pos, [(2, 1)].into_iter().collect());
        assert_eq!(a.neg, [(1, 1)].into_iter().collect());
        let b = runs_from_sequence(&seq(&[&[P], &[P], &[], &[], &[P], &[P]]));
        assert_eq!(b.pos, [(2, 2)].into_iter().collect());
        assert!(b.neg.is_empty());
        let c = runs_from_sequence(&seq(&[&[], &[P], &[P, P], &[]]));
        assert_eq!(c.pos, [(3, 1)].into_iter().collect());
        assert_eq!(runs_from_sequence(&[]), PixelRuns::default());
    }

    fn rec_from(events: Vec<EventRecord>, w: u32, h: u32) -> Recording {
        Recording::new(events, 1000, w, h, 0.0, 1.0, BTreeSet::new()).unwrap()
    }

    #[test]
    fn type2_detection() {
        let e = |x, t, p| EventRecord { x, y: 0, t, p };
        let rec = rec_from(vec![e(0, 0, P), e(0, 1, P), e(1, 5, N), e(1, 9, N)], 3, 1);
        let stats = run_length_stats(&rec);
        assert_eq!(detect_type2(&stats), vec![(0, 0)]);
        assert_eq!(stats.pixels[0].events(P), 2);
        let clean = rec_from(vec![e(0, 0, P), e(1, 5, N)], 3, 1);
        assert!(detect_type2(&run_length_stats(&clean)).is_empty());
        assert!(detect_type2(&run_length_stats(&rec_from(vec![], 3, 1))).is_empty());
    }

    #[test]
    fn hot_count_rules() {
        assert!(hot_indices(&[5.0; 10], 20.0).unwrap().is_empty());
        assert!(hot_indices(&[1.0], 20.0).is_err());
        let mut v = vec![100.0; 1000];
        v[17] = 5000.0;
        assert_eq!(hot_indices(&v, 20.0).unwrap(), vec![17]);
        assert!(hot_indices(&v, f64::INFINITY).unwrap().is_empty());
    }

    #[test]
    fn deviance_examples() {
        let r = deviance_of(&[100.0, 100.0, 100.0]).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
        // ℓ = 0 and ℓ = 2ℓ̄ around a mean of 100.
        let r = deviance_of(&[0.0, 200.0, 100.0]).unwrap();
        assert_relative_eq!(r[0], -(200.0f64).sqrt(), max_relative = 1e-14);
        let expect = (2.0 * (200.0 * 2f64.ln() - 100.0)).sqrt();
        assert_relative_eq!(r[1], expect, max_relative = 1e-14);
        assert_relative_eq!(expect, 8.789702624320013, max_relative = 1e-14);
        assert!(matches!(deviance_of(&[0.0, 0.0]), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn bonferroni_examples() {
        assert_relative_eq!(
            bonferroni_threshold(0.05, 1).unwrap(),
            1.959963984540054,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            bonferroni_threshold(0.01, 230_400).unwrap(),
            5.476415544544284,
            max_relative = 1e-9
        );
        assert!(bonferroni_threshold(0.01, 10).unwrap() < bonferroni_threshold(0.01, 100).unwrap());
        assert!(bonferroni_threshold(0.05, 10).unwrap() < bonferroni_threshold(0.01, 10).unwrap());
        assert!(bonferroni_threshold(0.0, 10).is_err());
        assert!(bonferroni_threshold(0.5, 0).is_err());
    }

    #[test]
    fn empty_recording_notes_deviance() {
        let rec = rec_from(vec![], 4, 4);
        let rep = detect_outliers(&rec, &OutlierConfig::default()).unwrap();
        assert!(rep.flags.is_empty());
        assert_eq!(rep.notes.len(), 2);
        assert!(rep.threshold.is_none());
    }

    #[test]
    fn report_outputs() {
        let e = |x, t, p| EventRecord { x, y: 0, t, p };
        let rec = rec_from(vec![e(1, 0, P), e(1, 1, P)], 2, 1);
        let rep = detect_outliers(&rec, &OutlierConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rep.csv");
        rep.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,y,flag,polarity,value\n1,0,type2,both,2e0\n"));
        let ex = dir.path().join("ex.txt");
        rep.write_excluded(&ex).unwrap();
        assert_eq!(
            crate::ingest::read_excluded(&ex).unwrap(),
            [(1, 0)].into_iter().collect()
        );
    }
}
