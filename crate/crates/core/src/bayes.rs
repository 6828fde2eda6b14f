//! Non-parametric strain estimation: GP edge fit (baselines, hyperparameter
//! selection, conditioning), Monte Carlo sampling of the gradient argmax,
//! and the resulting strain distribution.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{
    gp_condition, optimize_hyperparameters, GpEdgePosterior, GpEdgeProblem, HyperOptions,
    Kernel, KernelKind, ALL_KERNEL_KINDS,
};
use crate::linalg::cholesky_with_jitter;
use crate::lsq::{FitWindows, Method, StrainEstimate};
use crate::noise::fit_exponential_baseline;
use crate::spectrum::{Baselines, TransmissionSpectrum};
use crate::stats;

/// Options for the GP edge fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpFitOptions {
    pub kernel_candidates: Vec<KernelKind>,
    pub hyper: HyperOptions,
    /// Prediction-grid densification factor relative to the measurement
    /// density over the edge window.
    pub prediction_density: usize,
    /// Override for the prediction window (defaults to the edge window).
    pub edge_window: Option<(f64, f64)>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            kernel_candidates: ALL_KERNEL_KINDS.to_vec(),
            hyper: HyperOptions::default(),
            prediction_density: 4,
            edge_window: None,
        }
    }
}

/// A fitted GP edge model: baselines, selected kernel, and the posterior of
/// the edge shape and its gradient on the prediction grid.
#[derive(Debug, Clone)]
pub struct EdgeFitGp {
    pub baselines: Baselines,
    pub kernel: Kernel,
    pub noise_scale: f64,
    /// Marginal log-likelihood of the selected kernel.
    pub objective: f64,
    pub problem: GpEdgeProblem,
    pub grid: Vec<f64>,
    pub posterior: GpEdgePosterior,
}

/// Monte Carlo draws of the gradient-argmax wavelength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZetaSamples {
    /// Draws, each equal to some prediction-grid wavelength.
    pub values: Vec<f64>,
    pub grid_pitch: f64,
}

/// Stress-free reference for the strain ratio.
#[derive(Debug, Clone)]
pub enum ZetaReference {
    /// Deterministic reference from a noiseless profile.
    Noiseless(f64),
    /// Paired Monte Carlo draws from a reference measurement.
    Sampled(ZetaSamples),
}

/// Uniform prediction grid over `[lo, hi]` at `density` times the
/// measurement density. Shared by the edge fit and by callers that need the
/// stress-free reference on the identical grid.
pub fn prediction_grid(lo: f64, hi: f64, measurement_pitch: f64, density: usize) -> Vec<f64> {
    let pitch = measurement_pitch / density as f64;
    let n = ((hi - lo) / pitch).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * pitch).collect()
}

/// Three-step GP edge fit: right baseline, composed left baseline, then GP
/// conditioning of the edge shape and gradient on a dense prediction grid.
pub fn fit_edge_gp(
    spectrum: &TransmissionSpectrum,
    windows: &FitWindows,
    options: &GpFitOptions,
) -> Result<EdgeFitGp> {
    let noise_std = spectrum.noise_std().ok_or_else(|| {
        Error::invalid(
            "GP edge fit requires per-point noise_std (attach one from a noise model)",
        )
    })?;
    windows.validate(spectrum)?;

    let stage1 = fit_exponential_baseline(spectrum, windows.right, None)
        .map_err(|e| Error::fit(Some("1"), e.to_string()))?;
    let stage2 = fit_exponential_baseline(spectrum, windows.left, Some((stage1.a, stage1.b)))
        .map_err(|e| Error::fit(Some("2"), e.to_string()))?;
    let baselines = Baselines {
        a0: stage1.a,
        b0: stage1.b,
        a_hkl: stage2.a,
        b_hkl: stage2.b,
    };

    let lambdas = spectrum.wavelengths().to_vec();
    let mut y_bar = Vec::with_capacity(lambdas.len());
    let mut map_a = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let g1 = baselines.gamma1(lambda);
        let g2 = baselines.gamma2(lambda);
        y_bar.push(spectrum.values()[i] - g1);
        map_a.push(g2 - g1);
    }
    let span = lambdas[lambdas.len() - 1] - lambdas[0];
    let template = Kernel::new(KernelKind::Matern32, 1.0, span / 8.0)?;
    let mut problem = GpEdgeProblem::new(lambdas, y_bar, map_a, noise_std.to_vec(), template)?;

    let outcome = optimize_hyperparameters(&problem, &options.kernel_candidates, &options.hyper)
        .map_err(|e| Error::fit(Some("3"), e.to_string()))?;
    problem.kernel = outcome.kernel;
    if outcome.noise_scale != 1.0 {
        for s in problem.noise_std.iter_mut() {
            *s *= outcome.noise_scale;
        }
    }

    let (lo, hi) = options.edge_window.unwrap_or(windows.edge);
    if !(lo < hi) {
        return Err(Error::invalid("prediction window must satisfy lo < hi"));
    }
    if options.prediction_density == 0 {
        return Err(Error::invalid("prediction_density must be >= 1"));
    }
    let grid = prediction_grid(lo, hi, spectrum.mean_pitch(), options.prediction_density);
    if grid.len() < 8 {
        return Err(Error::insufficient("prediction grid has fewer than 8 points"));
    }

    let posterior = gp_condition(&problem, &grid)?;
    Ok(EdgeFitGp {
        baselines,
        kernel: outcome.kernel,
        noise_scale: outcome.noise_scale,
        objective: outcome.objective,
        problem,
        grid,
        posterior,
    })
}

/// Draw joint gradient samples and record the grid wavelength of each
/// sample's maximum (ties resolved to the lowest index).
pub fn sample_zeta(
    posterior: &GpEdgePosterior,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<ZetaSamples> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    let m = posterior.grid.len();
    if m < 2 {
        return Err(Error::insufficient("prediction grid needs >= 2 points"));
    }
    let (l, _) = cholesky_with_jitter(&posterior.cov_g)?;
    // Standard normal draws in (grid point, sample) order.
    let z = Array2::from_shape_fn((m, n_samples), |_| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    let correlated = l.dot(&z);
    let mut values = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..m {
            let v = posterior.mean_g[i] + correlated[[i, s]];
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        values.push(posterior.grid[best]);
    }
    let grid_pitch = posterior.grid[1] - posterior.grid[0];
    Ok(ZetaSamples { values, grid_pitch })
}

/// Detect a bimodal argmax distribution: two clusters separated by more
/// than ten grid pitches, each holding more than 20% of the mass.
pub fn detect_bimodality(zeta: &ZetaSamples) -> bool {
    if zeta.values.len() < 10 {
        return false;
    }
    let mut sorted = zeta.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let threshold = 10.0 * zeta.grid_pitch;
    for i in 1..n {
        if sorted[i] - sorted[i - 1] > threshold {
            let left = i as f64 / n as f64;
            if left > 0.2 && (1.0 - left) > 0.2 {
                return true;
            }
        }
    }
    false
}

/// Strain distribution from argmax draws and a stress-free reference:
/// per-draw ratios, Monte Carlo mean and standard deviation (1/N variance),
/// samples retained.
pub fn strain_distribution(zeta: &ZetaSamples, zeta0: &ZetaReference) -> Result<StrainEstimate> {
    let samples: Vec<f64> = match zeta0 {
        ZetaReference::Noiseless(z0) => {
            if !(*z0 > 0.0) {
                return Err(Error::invalid("stress-free reference must be positive"));
            }
            zeta.values.iter().map(|z| (z - z0) / z0).collect()
        }
        ZetaReference::Sampled(ref0) => {
            if ref0.values.len() != zeta.values.len() {
                return Err(Error::invalid(
                    "paired sampling requires equal sample counts",
                ));
            }
            if ref0.values.iter().any(|z| !(*z > 0.0)) {
                return Err(Error::invalid("stress-free draws must be positive"));
            }
            zeta.values
                .iter()
                .zip(&ref0.values)
                .map(|(z, z0)| (z - z0) / z0)
                .collect()
        }
    };
    let mean = stats::mean(&samples);
    let std = stats::population_std(&samples);
    Ok(StrainEstimate {
        strain_mean: mean,
        strain_std: std,
        samples: Some(samples),
        method: Method::GaussianProcess,
        bimodal: detect_bimodality(zeta),
    })
}

/// Histogram of strain samples with the matching Gaussian overlay evaluated
/// at the bin centres (scaled to counts).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bin_centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub gaussian_overlay: Vec<f64>,
    pub bin_width: f64,
}

impl HistogramReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_center,count,gaussian_overlay")?;
        for i in 0..self.bin_centers.len() {
            writeln!(
                out,
                "{},{},{}",
                self.bin_centers[i], self.counts[i], self.gaussian_overlay[i]
            )?;
        }
        Ok(())
    }
}

/// Histogram report for a Monte Carlo strain estimate.
pub fn strain_histogram_report(estimate: &StrainEstimate, bins: usize) -> Result<HistogramReport> {
    let samples = estimate
        .samples
        .as_ref()
        .ok_or_else(|| Error::invalid("estimate carries no samples"))?;
    if samples.is_empty() || bins == 0 {
        return Err(Error::invalid("need samples and at least one bin"));
    }
    let mut lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Degenerate distribution: a single occupied bin.
        lo -= 0.5;
        hi += 0.5;
    }
    let (bin_centers, counts) = stats::histogram(samples, lo, hi, bins);
    let bin_width = (hi - lo) / bins as f64;
    let n = samples.len() as f64;
    let gaussian_overlay: Vec<f64> = bin_centers
        .iter()
        .map(|&c| {
            if estimate.strain_std > 0.0 {
                n * bin_width
                    * stats::normal_pdf((c - estimate.strain_mean) / estimate.strain_std)
                    / estimate.strain_std
            } else {
                0.0
            }
        })
        .collect();
    Ok(HistogramReport {
        bin_centers,
        counts,
        gaussian_overlay,
        bin_width,
    })
}
