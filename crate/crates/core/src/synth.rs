//! Simulated Bragg-edge spectra: randomized edge parameters per group,
//! heteroscedastic Gaussian noise scaled from a base variance law, and
//! deterministic per-trial RNG streams.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::spectrum::{
    strain_from_edge, Baselines, EdgeParams, TransmissionSpectrum, DEFAULT_EDGE_LOCATION,
    DEFAULT_GRID_POINTS, DEFAULT_WINDOW_HALF_WIDTH,
};

/// Uniform wavelength grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambda_min: DEFAULT_EDGE_LOCATION - DEFAULT_WINDOW_HALF_WIDTH,
            lambda_max: DEFAULT_EDGE_LOCATION + DEFAULT_WINDOW_HALF_WIDTH,
            n: DEFAULT_GRID_POINTS,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Vec<f64> {
        let step = (self.lambda_max - self.lambda_min) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lambda_min + i as f64 * step).collect()
    }

    pub fn pitch(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / (self.n - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid("grid needs at least 4 points"));
        }
        if !(self.lambda_min.is_finite() && self.lambda_max.is_finite())
            || self.lambda_min >= self.lambda_max
        {
            return Err(Error::invalid("grid bounds must satisfy min < max"));
        }
        Ok(())
    }
}

/// Configuration for a batch of simulated trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_groups: usize,
    pub trials_per_group: usize,
    /// Uniform sampling range for the edge width (angstrom).
    pub sigma_b_range: (f64, f64),
    /// Uniform sampling range for the asymmetry constant (angstrom).
    pub tau_range: (f64, f64),
    /// Uniform sampling range for the applied true strain (dimensionless).
    pub strain_range: (f64, f64),
    /// Multiplier on the base noise-model standard deviation.
    pub noise_scale: f64,
    pub grid: GridSpec,
    pub seed: u64,
    /// Stress-free edge location (angstrom).
    pub lambda_hkl0: f64,
    pub baselines: Baselines,
    pub noise: NoiseModel,
}

impl Default for TrialConfig {
    /// Desk-scale defaults: 10 groups of 100 trials at the base noise level.
    fn default() -> Self {
        Self {
            n_groups: 10,
            trials_per_group: 100,
            sigma_b_range: (4.7e-3, 1.4e-2),
            tau_range: (0.0, 1.3e-2),
            strain_range: (-3000e-6, 3000e-6),
            noise_scale: 1.0,
            grid: GridSpec::default(),
            seed: 1234,
            lambda_hkl0: DEFAULT_EDGE_LOCATION,
            baselines: Baselines::default(),
            noise: NoiseModel::simulation_base(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.trials_per_group == 0 {
            return Err(Error::invalid("counts must be >= 1"));
        }
        for (name, (lo, hi), non_negative) in [
            ("sigma_b_range", self.sigma_b_range, true),
            ("tau_range", self.tau_range, true),
            ("strain_range", self.strain_range, false),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::invalid(format!("{name} must satisfy lo <= hi")));
            }
            if non_negative && lo < 0.0 {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        if self.sigma_b_range.0 <= 0.0 {
            return Err(Error::invalid("sigma_b must be positive"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise_scale must be non-negative"));
        }
        if self.lambda_hkl0 <= 0.0 {
            return Err(Error::invalid("lambda_hkl0 must be positive"));
        }
        self.grid.validate()?;
        self.baselines.validate()
    }

    /// True strain encoded in sampled edge parameters.
    pub fn true_strain(&self, params: &EdgeParams) -> f64 {
        strain_from_edge(params.lambda_hkl, self.lambda_hkl0).expect("positive reference")
    }

    /// Stress-free twin of sampled parameters (identical shape, zero strain).
    pub fn stress_free_params(&self, params: &EdgeParams) -> EdgeParams {
        EdgeParams {
            lambda_hkl: self.lambda_hkl0,
            ..*params
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG stream keyed by a seed and a tag path, so parallel and
/// serial trial execution draw identical noise.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = seed ^ 0x51_7C_C1_B7_27_22_0A_95;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        acc = acc.rotate_left(11) ^ splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    let mut s = acc ^ state;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

fn uniform_in(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

/// Draw edge-shape parameters for one trial group: width and asymmetry
/// uniform over their ranges, strain offset applied multiplicatively to the
/// stress-free edge location.
pub fn sample_edge_params(rng: &mut impl Rng, config: &TrialConfig) -> EdgeParams {
    let sigma_b = uniform_in(rng, config.sigma_b_range);
    let tau = uniform_in(rng, config.tau_range);
    let strain = uniform_in(rng, config.strain_range);
    EdgeParams {
        lambda_hkl: config.lambda_hkl0 * (1.0 + strain),
        sigma_b,
        tau,
        a0: config.baselines.a0,
        b0: config.baselines.b0,
        a_hkl: config.baselines.a_hkl,
        b_hkl: config.baselines.b_hkl,
    }
}

/// Simulate one noisy spectrum: `y_i = Tr(lambda_i) + e_i` with
/// `e_i ~ N(0, (scale * sigma(Tr_i))^2)` where `sigma` comes from the noise
/// model evaluated at the noiseless transmission.
///
/// The spectrum's `noise_std` carries the generating standard deviations.
/// With `noise_scale = 0` the values are exact and `noise_std` is omitted
/// (zero is not a valid per-point standard deviation).
pub fn simulate_spectrum(
    params: &EdgeParams,
    grid: &[f64],
    noise: &NoiseModel,
    noise_scale: f64,
    rng: &mut impl Rng,
) -> Result<TransmissionSpectrum> {
    params.validate()?;
    if !(noise_scale >= 0.0) {
        return Err(Error::invalid("noise_scale must be non-negative"));
    }
    let n = grid.len();
    let mut values = Vec::with_capacity(n);
    let mut stds = Vec::with_capacity(n);
    for &lambda in grid {
        let tr = params.transmission(lambda);
        let sigma = noise_scale * noise.std_at(tr);
        let y = if sigma > 0.0 {
            tr + Normal::new(0.0, sigma).unwrap().sample(rng)
        } else {
            tr
        };
        values.push(y);
        stds.push(sigma);
    }
    let noise_std = if noise_scale > 0.0 { Some(stds) } else { None };
    TransmissionSpectrum::new(grid.to_vec(), values, noise_std)
}

/// Per-trial provenance written next to each simulated spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialManifest {
    pub group: usize,
    pub trial: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub true_strain: f64,
    pub params: EdgeParams,
}

/// Write a spectrum as `lambda,transmission[,noise_std]` CSV.
pub fn write_spectrum_csv<W: Write>(mut out: W, spectrum: &TransmissionSpectrum) -> Result<()> {
    writeln!(out, "lambda,transmission,noise_std")?;
    for i in 0..spectrum.len() {
        match spectrum.noise_std() {
            Some(std) => writeln!(
                out,
                "{},{},{}",
                spectrum.wavelengths()[i],
                spectrum.values()[i],
                std[i]
            )?,
            None => writeln!(
                out,
                "{},{},",
                spectrum.wavelengths()[i],
                spectrum.values()[i]
            )?,
        }
    }
    Ok(())
}

/// Write one trial (spectrum CSV + manifest JSON) into a directory.
pub fn write_trial(
    dir: &Path,
    manifest: &TrialManifest,
    spectrum: &TransmissionSpectrum,
) -> Result<()> {
    let stem = format!("g{:03}_t{:03}", manifest.group, manifest.trial);
    let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_spectrum_csv(csv, spectrum)?;
    let json = std::fs::File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(json, manifest)?;
    Ok(())
}
