//! Core data types and closed-form transmission/edge-shape models.
//!
//! The transmission near a single Bragg-edge is modelled as two decaying
//! exponential attenuation regimes bridged by an edge-shape function
//! `B(lambda)` that rises from 0 to 1. Two parametric edge shapes are
//! provided (error-function edge with an exponential tail, and a Gaussian
//! convolved with back-to-back exponentials), plus the five-parameter
//! height/base variant and the pseudo-Voigt peak used for correlation fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::exp_erfc;

/// Default nominal edge location for simulations (angstrom).
pub const DEFAULT_EDGE_LOCATION: f64 = 4.05;
/// Default half-width of the modelled wavelength window (angstrom).
pub const DEFAULT_WINDOW_HALF_WIDTH: f64 = 0.25;
/// Default number of wavelength samples across the window.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// A measured (or simulated) transmission spectrum over a single edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpectrum {
    wavelengths: Vec<f64>,
    values: Vec<f64>,
    noise_std: Option<Vec<f64>>,
}

impl TransmissionSpectrum {
    /// Build a spectrum, validating lengths, ordering and noise positivity.
    ///
    /// At least two strictly increasing wavelengths are required; fitting
    /// routines impose their own larger minimum counts.
    pub fn new(
        wavelengths: Vec<f64>,
        values: Vec<f64>,
        noise_std: Option<Vec<f64>>,
    ) -> Result<Self> {
        if wavelengths.len() < 2 {
            return Err(Error::insufficient(format!(
                "spectrum needs at least 2 points, got {}",
                wavelengths.len()
            )));
        }
        if values.len() != wavelengths.len() {
            return Err(Error::invalid(format!(
                "wavelengths ({}) and values ({}) differ in length",
                wavelengths.len(),
                values.len()
            )));
        }
        if !wavelengths.iter().all(|w| w.is_finite()) || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite entry in spectrum"));
        }
        if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("wavelengths must be strictly increasing"));
        }
        if let Some(std) = &noise_std {
            if std.len() != wavelengths.len() {
                return Err(Error::invalid("noise_std length mismatch"));
            }
            if std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(Error::invalid("noise_std entries must be strictly positive"));
            }
        }
        Ok(Self {
            wavelengths,
            values,
            noise_std,
        })
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_std(&self) -> Option<&[f64]> {
        self.noise_std.as_deref()
    }

    /// Mean grid spacing. The grid is not required to be uniform; use
    /// [`TransmissionSpectrum::uniform_pitch`] where uniformity matters.
    pub fn mean_pitch(&self) -> f64 {
        let n = self.wavelengths.len();
        (self.wavelengths[n - 1] - self.wavelengths[0]) / (n - 1) as f64
    }

    /// Grid pitch if the spacing is uniform to `rel_tol`, else `None`.
    pub fn uniform_pitch(&self, rel_tol: f64) -> Option<f64> {
        let pitch = self.mean_pitch();
        let ok = self
            .wavelengths
            .windows(2)
            .all(|w| ((w[1] - w[0]) - pitch).abs() <= rel_tol * pitch.abs());
        ok.then_some(pitch)
    }

    /// Indices of points whose wavelength lies in `[lo, hi]`.
    pub fn window_indices(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.wavelengths
            .iter()
            .enumerate()
            .filter(|(_, w)| **w >= lo && **w <= hi)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Exponential attenuation coefficients either side of the edge.
///
/// Right of the edge the transmission follows `exp(-a0 - b0*lambda)`; left
/// of the edge an additional factor `exp(-a_hkl - b_hkl*lambda)` applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub a0: f64,
    pub b0: f64,
    pub a_hkl: f64,
    pub b_hkl: f64,
}

impl Default for Baselines {
    /// Simulation defaults chosen so transmission spans roughly 0.5-0.7
    /// over the default window.
    fn default() -> Self {
        Self {
            a0: 0.2,
            b0: 0.04,
            a_hkl: 0.3,
            b_hkl: 0.01,
        }
    }
}

impl Baselines {
    /// Attenuation left of the edge, `gamma_1(lambda)`.
    pub fn gamma1(&self, lambda: f64) -> f64 {
        (-(self.a0 + self.b0 * lambda + self.a_hkl + self.b_hkl * lambda)).exp()
    }

    /// Attenuation right of the edge, `gamma_2(lambda)`.
    pub fn gamma2(&self, lambda: f64) -> f64 {
        (-(self.a0 + self.b0 * lambda)).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.a0, self.b0, self.a_hkl, self.b_hkl];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("baseline coefficients must be finite"));
        }
        Ok(())
    }
}

/// Parametric edge description for the error-function edge model with
/// exponential baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Edge location (angstrom).
    pub lambda_hkl: f64,
    /// Edge-broadening width (angstrom).
    pub sigma_b: f64,
    /// Asymmetry time constant (angstrom).
    pub tau: f64,
    pub a0: f64,
    pub b0: f64,
    pub a_hkl: f64,
    pub b_hkl: f64,
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_hkl.is_finite() || !self.sigma_b.is_finite() || !self.tau.is_finite() {
            return Err(Error::invalid("edge parameters must be finite"));
        }
        if self.sigma_b <= 0.0 {
            return Err(Error::invalid("sigma_b must be positive"));
        }
        if self.tau < 0.0 {
            return Err(Error::invalid("tau must be non-negative"));
        }
        self.baselines().validate()
    }

    pub fn baselines(&self) -> Baselines {
        Baselines {
            a0: self.a0,
            b0: self.b0,
            a_hkl: self.a_hkl,
            b_hkl: self.b_hkl,
        }
    }

    /// Noiseless transmission at `lambda` for these parameters.
    pub fn transmission(&self, lambda: f64) -> f64 {
        let b = kropff_edge_unchecked(lambda, self.lambda_hkl, self.sigma_b, self.tau);
        santisteban_value(lambda, b, &self.baselines())
    }
}

/// Parameters of the back-to-back exponential edge model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VogelParams {
    pub lambda_hkl: f64,
    pub sigma_b: f64,
    /// Rise rate (1/angstrom).
    pub alpha: f64,
    /// Decay rate (1/angstrom).
    pub beta: f64,
}

impl VogelParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.lambda_hkl, self.sigma_b, self.alpha, self.beta];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("vogel parameters must be finite"));
        }
        if self.sigma_b <= 0.0 || self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::invalid("sigma_b, alpha, beta must be positive"));
        }
        Ok(())
    }
}

/// Parameters of the five-parameter edge model (edge height and base height
/// instead of exponential baselines).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TremsinParams {
    pub lambda_hkl: f64,
    pub sigma_b: f64,
    pub tau: f64,
    /// Edge height.
    pub h: f64,
    /// Base height.
    pub b: f64,
}

impl TremsinParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.lambda_hkl, self.sigma_b, self.tau, self.h, self.b];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tremsin parameters must be finite"));
        }
        if self.sigma_b <= 0.0 {
            return Err(Error::invalid("sigma_b must be positive"));
        }
        if self.tau < 0.0 {
            return Err(Error::invalid("tau must be non-negative"));
        }
        if self.h <= 0.0 {
            return Err(Error::invalid("edge height h must be positive"));
        }
        Ok(())
    }
}

/// Pseudo-Voigt peak parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoigtParams {
    /// Peak centre (angstrom).
    pub delta_hkl: f64,
    /// Amplitude.
    pub a: f64,
    /// Lorentzian mixing fraction in [0, 1].
    pub mu: f64,
    /// Lorentzian width (angstrom).
    pub w_l: f64,
    /// Gaussian width (angstrom).
    pub w_g: f64,
    /// Baseline offset.
    pub y0: f64,
}

impl VoigtParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.delta_hkl, self.a, self.mu, self.w_l, self.w_g, self.y0];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("voigt parameters must be finite"));
        }
        if self.w_l <= 0.0 || self.w_g <= 0.0 {
            return Err(Error::invalid("widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid("mu must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Edge-shape choice for the transmission model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeShape {
    Kropff {
        lambda_hkl: f64,
        sigma_b: f64,
        tau: f64,
    },
    Vogel(VogelParams),
}

impl EdgeShape {
    pub fn fraction(&self, lambda: f64) -> Result<f64> {
        match self {
            EdgeShape::Kropff {
                lambda_hkl,
                sigma_b,
                tau,
            } => kropff_edge(lambda, *lambda_hkl, *sigma_b, *tau),
            EdgeShape::Vogel(p) => vogel_edge(lambda, p),
        }
    }
}

/// Error-function edge with exponential tail.
///
/// `tau = 0` degenerates to the pure error-function edge
/// `B = erfc(-(lambda - lambda_hkl)/(sqrt(2) sigma_b)) / 2`; tiny `tau`
/// (below `1e-6 * sigma_b`) is evaluated in the same limit, where the tail
/// term underflows to zero anyway.
pub fn kropff_edge(lambda: f64, lambda_hkl: f64, sigma_b: f64, tau: f64) -> Result<f64> {
    if !lambda.is_finite() || !lambda_hkl.is_finite() || !sigma_b.is_finite() || !tau.is_finite() {
        return Err(Error::invalid("non-finite input to kropff_edge"));
    }
    if sigma_b <= 0.0 {
        return Err(Error::invalid("sigma_b must be positive"));
    }
    if tau < 0.0 {
        return Err(Error::invalid("tau must be non-negative"));
    }
    Ok(kropff_edge_unchecked(lambda, lambda_hkl, sigma_b, tau))
}

pub(crate) fn kropff_edge_unchecked(lambda: f64, lambda_hkl: f64, sigma_b: f64, tau: f64) -> f64 {
    let t = lambda - lambda_hkl;
    let w = t / (core::f64::consts::SQRT_2 * sigma_b);
    if tau <= sigma_b * 1e-6 {
        return 0.5 * libm::erfc(-w);
    }
    let u = -t / tau + sigma_b * sigma_b / (2.0 * tau * tau);
    let y = -w + sigma_b / tau;
    0.5 * (libm::erfc(-w) - exp_erfc(u, y))
}

/// First derivative of the error-function/exponential edge with respect to
/// wavelength.
pub fn kropff_edge_derivative(lambda: f64, lambda_hkl: f64, sigma_b: f64, tau: f64) -> Result<f64> {
    if !lambda.is_finite() || !lambda_hkl.is_finite() || !sigma_b.is_finite() || !tau.is_finite() {
        return Err(Error::invalid("non-finite input to kropff_edge_derivative"));
    }
    if sigma_b <= 0.0 {
        return Err(Error::invalid("sigma_b must be positive"));
    }
    if tau < 0.0 {
        return Err(Error::invalid("tau must be non-negative"));
    }
    let t = lambda - lambda_hkl;
    let w = t / (core::f64::consts::SQRT_2 * sigma_b);
    let sqrt_pi = core::f64::consts::PI.sqrt();
    let gauss = (-w * w).exp() / (sqrt_pi * core::f64::consts::SQRT_2 * sigma_b);
    if tau <= sigma_b * 1e-6 {
        return Ok(gauss);
    }
    let u = -t / tau + sigma_b * sigma_b / (2.0 * tau * tau);
    let y = -w + sigma_b / tau;
    // d/dt [exp(u) erfc(y)] = -exp(u) erfc(y)/tau + exp(u - y^2) * 2/(sqrt(pi) sqrt(2) sigma)
    let tail = exp_erfc(u, y);
    let tail_gauss = (u - y * y).exp() / (sqrt_pi * core::f64::consts::SQRT_2 * sigma_b);
    Ok(gauss + 0.5 * tail / tau - tail_gauss)
}

/// Back-to-back exponential edge shape.
pub fn vogel_edge(lambda: f64, params: &VogelParams) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::invalid("non-finite lambda"));
    }
    params.validate()?;
    Ok(vogel_edge_unchecked(lambda, params))
}

pub(crate) fn vogel_edge_unchecked(lambda: f64, p: &VogelParams) -> f64 {
    let delta = p.lambda_hkl - lambda;
    let s = p.sigma_b;
    let w = delta / (core::f64::consts::SQRT_2 * s);
    let u = 0.5 * p.alpha * (p.alpha * s * s + 2.0 * delta);
    let v = 0.5 * p.beta * (p.beta * s * s - 2.0 * delta);
    let y = (p.alpha * s * s + delta) / (core::f64::consts::SQRT_2 * s);
    let z = (p.beta * s * s - delta) / (core::f64::consts::SQRT_2 * s);
    let bracket = p.beta * exp_erfc(u, y) - p.alpha * exp_erfc(v, z);
    0.5 * libm::erfc(w) - bracket / (2.0 * (p.alpha + p.beta))
}

fn santisteban_value(lambda: f64, edge_fraction: f64, baselines: &Baselines) -> f64 {
    let g2 = baselines.gamma2(lambda);
    let extra = (-(baselines.a_hkl + baselines.b_hkl * lambda)).exp();
    edge_fraction * g2 + (1.0 - edge_fraction) * g2 * extra
}

/// Transmission model: edge fraction blending the two attenuation regimes.
pub fn santisteban_transmission(
    lambda: f64,
    shape: &EdgeShape,
    baselines: &Baselines,
) -> Result<f64> {
    baselines.validate()?;
    let b = shape.fraction(lambda)?;
    Ok(santisteban_value(lambda, b, baselines))
}

/// Five-parameter transmission model: `h * B(lambda) + b`.
pub fn tremsin_transmission(lambda: f64, params: &TremsinParams) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::invalid("non-finite lambda"));
    }
    params.validate()?;
    let edge = kropff_edge_unchecked(lambda, params.lambda_hkl, params.sigma_b, params.tau);
    Ok(params.h * edge + params.b)
}

/// Pseudo-Voigt peak profile evaluated at displacement `delta`.
pub fn pseudo_voigt(delta: f64, params: &VoigtParams) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::invalid("non-finite delta"));
    }
    params.validate()?;
    Ok(pseudo_voigt_unchecked(delta, params))
}

pub(crate) fn pseudo_voigt_unchecked(delta: f64, p: &VoigtParams) -> f64 {
    let d = delta - p.delta_hkl;
    let lorentz = 2.0 * core::f64::consts::PI * p.w_l / (4.0 * d * d + p.w_l * p.w_l);
    let c = 4.0 * core::f64::consts::LN_2;
    let gauss = c.sqrt() / (core::f64::consts::PI.sqrt() * p.w_g) * (-c * d * d / (p.w_g * p.w_g)).exp();
    p.y0 + p.a * (p.mu * lorentz + (1.0 - p.mu) * gauss)
}

/// Relative strain from an edge value and its stress-free reference.
pub fn strain_from_edge(edge_value: f64, reference_value: f64) -> Result<f64> {
    if !edge_value.is_finite() || !reference_value.is_finite() {
        return Err(Error::invalid("non-finite input to strain_from_edge"));
    }
    if reference_value <= 0.0 {
        return Err(Error::invalid("reference value must be positive"));
    }
    Ok((edge_value - reference_value) / reference_value)
}

/// Micro-strain (1e-6) from a dimensionless strain.
pub fn to_micro_strain(strain: f64) -> f64 {
    strain * 1e6
}
