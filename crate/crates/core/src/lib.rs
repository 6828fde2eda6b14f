//! Bragg-edge strain analysis from energy-resolved neutron transmission.
//!
//! A single Bragg-edge in a measured transmission spectrum carries the
//! elastic strain of the illuminated material: the edge location shifts
//! relative to a stress-free reference. This crate implements four
//! estimators of that shift with calibrated uncertainty:
//!
//! - [`lsq::fit_santisteban`]: three-stage parametric fit (exponential
//!   baselines, then the edge shape).
//! - [`lsq::fit_tremsin`]: five-parameter edge fit over a tight window.
//! - [`xcorr::fit_xcorr_strain`]: cross-correlation of smoothed derivatives
//!   against a stress-free profile with a pseudo-Voigt peak fit.
//! - [`bayes::fit_edge_gp`] with [`bayes::sample_zeta`]: a Gaussian-process
//!   edge shape whose gradient argmax is sampled by Monte Carlo, yielding a
//!   full strain distribution.
//!
//! Supporting modules cover the transmission noise analysis ([`noise`]),
//! simulation of realistic spectra ([`synth`]), and a seeded, parallel
//! study harness with error metrics ([`harness`]).

pub mod bayes;
pub mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod lsq;
pub mod noise;
pub mod special;
pub mod spectrum;
pub mod stats;
pub mod synth;
pub mod xcorr;

pub use error::{Error, Result};
pub use lsq::{EdgeModelKind, FitResult, FitWindows, Method, StrainEstimate};
pub use noise::NoiseModel;
pub use spectrum::{
    strain_from_edge, Baselines, EdgeParams, TransmissionSpectrum, TremsinParams, VogelParams,
    VoigtParams,
};
pub use synth::{GridSpec, TrialConfig};
