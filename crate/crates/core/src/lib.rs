//! Probabilistic noise model for event cameras.
//!
//! Event probabilities under Poisson photon statistics ([`model`]),
//! Heaviside S-curves ([`scurve`]), recording ingest and estimation
//! ([`ingest`]), outlier pixel detection ([`outliers`]), parameter fitting
//! ([`fit`]) and synthetic noise generation ([`synth`]).

// `!(x > 0.0)` rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod error;
pub mod fit;
pub mod ingest;
pub mod kv;
pub mod model;
pub mod outliers;
pub mod par;
pub mod params;
pub mod provenance;
pub mod scurve;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    event_prob, gaussian_prob, null_prob, poisson_prob, radiometric_alpha, saddle_cgf, saddle_prob, Trigger,
};
pub use params::{theta_eval, IntensityPair, Method, ModelParams, Polarity, ProbResult, ThetaCoefficients};
