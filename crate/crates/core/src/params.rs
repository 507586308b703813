//! Model parameters and the small domain types shared by every module.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{self, KvDoc};

/// Default upper end of the photon-count domain on which θ(λ) must stay
/// non-negative (≈ 667 lux at α = 4.5).
pub const DEFAULT_LAMBDA_MAX: f64 = 3000.0;

const DEFAULT_PARAMS: &str = include_str!("../data/default.params");
const BIAS_TABLE: &str = include_str!("../data/bias_presets.params_set");

/// Coefficients of the intensity-dependent leakage θ(λ) = c1 + c2·√λ + c3·λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCoefficients {
    /// Light-independent offset (photons).
    pub c1: f64,
    /// Shot-noise coupling (photons per √photon).
    pub c2: f64,
    /// Brightness-proportional leakage (dimensionless, may be negative).
    pub c3: f64,
}

impl ThetaCoefficients {
    pub const ZERO: Self = Self {
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
    };

    /// Validates `c1, c2 >= 0` and θ >= 0 on `[0, lambda_max]`.
    pub fn new(c1: f64, c2: f64, c3: f64, lambda_max: f64) -> Result<Self> {
        let coeffs = Self { c1, c2, c3 };
        coeffs.validate(lambda_max)?;
        Ok(coeffs)
    }

    pub const fn constant(c: f64) -> Self {
        Self {
            c1: c,
            c2: 0.0,
            c3: 0.0,
        }
    }

    pub fn validate(&self, lambda_max: f64) -> Result<()> {
        if !(self.c1.is_finite() && self.c2.is_finite() && self.c3.is_finite()) {
            return Err(Error::domain("theta coefficients must be finite"));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(Error::domain(format!(
                "theta coefficients c1, c2 must be >= 0 (got {}, {})",
                self.c1, self.c2
            )));
        }
        // c2·√λ + c3·λ is concave or monotone, so the minimum on the
        // interval sits at an endpoint.
        let at_max = self.eval_unchecked(lambda_max);
        if at_max < 0.0 {
            return Err(Error::domain(format!(
                "theta({lambda_max}) = {at_max} < 0 for coefficients {self:?}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(self.eval_unchecked(lambda))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, lambda: f64) -> f64 {
        self.c1 + self.c2 * lambda.sqrt() + self.c3 * lambda
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c1: self.c1 * factor,
            c2: self.c2 * factor,
            c3: self.c3 * factor,
        }
    }
}

/// θ(λ) = c1 + c2·√λ + c3·λ.
pub fn theta_eval(coeffs: &ThetaCoefficients, lambda: f64) -> Result<f64> {
    coeffs.eval(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    /// +1 or -1.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    pub fn from_sign(p: i64) -> Option<Self> {
        match p {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean photon counts of the current and reference intensity levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPair {
    pub lambda: f64,
    pub lambda0: f64,
}

impl IntensityPair {
    pub fn new(lambda: f64, lambda0: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda0 >= 0.0) || !lambda.is_finite() || !lambda0.is_finite() {
            return Err(Error::domain(format!(
                "photon means must be finite and >= 0 (lambda={lambda}, lambda0={lambda0})"
            )));
        }
        Ok(Self { lambda, lambda0 })
    }

    /// Static scene: λ = λ₀.
    pub fn fixed(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda)
    }

    pub fn is_static(&self) -> bool {
        self.lambda == self.lambda0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Poisson,
    Gaussian,
    Saddle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Poisson => "poisson",
            Method::Gaussian => "gaussian",
            Method::Saddle => "saddle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "pois" => Ok(Method::Poisson),
            "gaussian" | "gaus" | "gauss" => Ok(Method::Gaussian),
            "saddle" | "saddle-point" | "saddlepoint" => Ok(Method::Saddle),
            other => Err(Error::domain(format!("unknown method `{other}`"))),
        }
    }
}

/// A probability together with how it was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbResult {
    pub value: f64,
    pub method: Method,
    /// Upper bound on the neglected outer tail mass (exact Poisson only).
    pub truncation_error: f64,
}

/// Full parameter set for one bias configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Log-contrast threshold, shared by both polarities.
    pub b: f64,
    /// Mean photons per lux per timestep.
    pub alpha: f64,
    pub theta_pos: ThetaCoefficients,
    pub theta_neg: ThetaCoefficients,
    /// Additive probability floor per polarity.
    pub cv_pos: f64,
    pub cv_neg: f64,
    /// Dead time after an event (µs).
    pub refractory_us: f64,
    /// Upper end of the declared photon-count domain.
    pub lambda_max: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b <= 1.0) {
            return Err(Error::domain(format!("B must lie in (0, 1], got {}", self.b)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        for cv in [self.cv_pos, self.cv_neg] {
            if !(0.0..1.0).contains(&cv) {
                return Err(Error::domain(format!("c_V must lie in [0, 1), got {cv}")));
            }
        }
        if !(self.refractory_us >= 0.0 && self.refractory_us.is_finite()) {
            return Err(Error::domain(format!(
                "refractory time must be >= 0, got {}",
                self.refractory_us
            )));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::domain("lambda_max must be > 0"));
        }
        self.theta_pos.validate(self.lambda_max)?;
        self.theta_neg.validate(self.lambda_max)?;
        Ok(())
    }

    /// Best-fit values at default bias settings.
    pub fn default_bias() -> Self {
        let secs = kv::parse_sections(DEFAULT_PARAMS, Path::new("default.params")).expect("bundled preset parses");
        Self::from_kv(&secs[0].1, Path::new("default.params")).expect("bundled preset is valid")
    }

    pub fn theta(&self, pol: Polarity) -> &ThetaCoefficients {
        match pol {
            Polarity::Positive => &self.theta_pos,
            Polarity::Negative => &self.theta_neg,
        }
    }

    pub fn theta_mut(&mut self, pol: Polarity) -> &mut ThetaCoefficients {
        match pol {
            Polarity::Positive => &mut self.theta_pos,
            Polarity::Negative => &mut self.theta_neg,
        }
    }

    pub fn cv(&self, pol: Polarity) -> f64 {
        match pol {
            Polarity::Positive => self.cv_pos,
            Polarity::Negative => self.cv_neg,
        }
    }

    pub fn set_cv(&mut self, pol: Polarity, cv: f64) {
        match pol {
            Polarity::Positive => self.cv_pos = cv,
            Polarity::Negative => self.cv_neg = cv,
        }
    }

    /// λ = α·I.
    pub fn photons(&self, lux: f64) -> f64 {
        self.alpha * lux
    }

    pub fn from_kv(doc: &KvDoc, origin: &Path) -> Result<Self> {
        let theta = |suffix: &str| -> Result<ThetaCoefficients> {
            Ok(ThetaCoefficients {
                c1: doc.require(origin, &format!("c1_{suffix}"))?,
                c2: doc.require(origin, &format!("c2_{suffix}"))?,
                c3: doc.require(origin, &format!("c3_{suffix}"))?,
            })
        };
        let params = Self {
            b: doc.require(origin, "B")?,
            alpha: doc.require(origin, "alpha")?,
            theta_pos: theta("pos")?,
            theta_neg: theta("neg")?,
            cv_pos: doc.optional(origin, "cv_pos")?.unwrap_or(0.0),
            cv_neg: doc.optional(origin, "cv_neg")?.unwrap_or(0.0),
            refractory_us: doc.optional(origin, "refractory_us")?.unwrap_or(0.0),
            lambda_max: doc.optional(origin, "lambda_max")?.unwrap_or(DEFAULT_LAMBDA_MAX),
        };
        params.validate().map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(params)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("B", fmt_f64(self.b));
        doc.push("alpha", fmt_f64(self.alpha));
        for (suffix, t) in [("pos", &self.theta_pos), ("neg", &self.theta_neg)] {
            doc.push(format!("c1_{suffix}"), fmt_f64(t.c1));
            doc.push(format!("c2_{suffix}"), fmt_f64(t.c2));
            doc.push(format!("c3_{suffix}"), fmt_f64(t.c3));
        }
        doc.push("cv_pos", fmt_f64(self.cv_pos));
        doc.push("cv_neg", fmt_f64(self.cv_neg));
        doc.push("refractory_us", fmt_f64(self.refractory_us));
        doc.push("lambda_max", fmt_f64(self.lambda_max));
        doc
    }

    pub fn read(path: &Path) -> Result<Self> {
        let doc = KvDoc::read(path)?;
        Self::from_kv(&doc, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_kv().write(path)
    }

    /// Short stable digest of the rendered parameter text.
    pub fn digest(&self) -> String {
        crate::provenance::digest_hex(self.to_kv().render().as_bytes())
    }
}

/// Shortest text that round-trips the value exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// One row of the non-default bias coefficient table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPreset {
    pub bias_fo: i32,
    pub bias_hpf: i32,
    pub params: ModelParams,
}

/// Parses a `.params_set` document: one `[fo=<i> hpf=<j>]` section per row,
/// with shared keys in the leading section.
pub fn parse_params_set(text: &str, origin: &Path) -> Result<Vec<BiasPreset>> {
    let sections = kv::parse_sections(text, origin)?;
    let shared = &sections[0].1;
    let mut out = Vec::new();
    for (name, doc) in sections.iter().skip(1) {
        let (mut fo, mut hpf) = (None, None);
        for tok in name.split_whitespace() {
            match tok.split_once('=') {
                Some(("fo", v)) => fo = v.parse().ok(),
                Some(("hpf", v)) => hpf = v.parse().ok(),
                _ => {}
            }
        }
        let (Some(bias_fo), Some(bias_hpf)) = (fo, hpf) else {
            return Err(Error::parse(origin, 0, format!("bad section name `{name}`")));
        };
        let mut merged = shared.clone();
        for key in doc.keys() {
            merged.push(key, doc.get(key).unwrap_or_default());
        }
        out.push(BiasPreset {
            bias_fo,
            bias_hpf,
            params: ModelParams::from_kv(&merged, origin)?,
        });
    }
    Ok(out)
}

/// The bundled coefficient table keyed by (bias_fo, bias_hpf).
pub fn bias_presets() -> Vec<BiasPreset> {
    parse_params_set(BIAS_TABLE, Path::new("bias_presets.params_set")).expect("bundled table is valid")
}

pub fn bias_preset(bias_fo: i32, bias_hpf: i32) -> Option<ModelParams> {
    bias_presets()
        .into_iter()
        .find(|p| p.bias_fo == bias_fo && p.bias_hpf == bias_hpf)
        .map(|p| p.params)
}
