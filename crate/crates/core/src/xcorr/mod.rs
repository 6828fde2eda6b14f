//! Cross-correlation strain estimation: smoothed derivatives of the
//! stressed and stress-free transmission, normalized discrete correlation,
//! and a pseudo-Voigt fit to the correlation peak.

pub mod savgol;

pub use savgol::{savitzky_golay_derivative, sg_config_for_noise_scale, SGConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::lm::{levenberg_marquardt, CurveFitProblem, FitResult, LmOptions};
use crate::lsq::{Method, StrainEstimate};
use crate::spectrum::{pseudo_voigt_unchecked, TransmissionSpectrum, VoigtParams};
use crate::stats;

/// Normalized correlation as a function of displacement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationCurve {
    /// Displacement axis (angstrom), uniformly spaced at the grid pitch.
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub pitch: f64,
}

impl CorrelationCurve {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i] > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// CSV dump (`lag,value`) for plotting.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lag,value")?;
        for (lag, v) in self.lags.iter().zip(&self.values) {
            writeln!(out, "{lag},{v}")?;
        }
        Ok(())
    }
}

/// Normalized discrete cross-correlation of two derivative series over lags
/// `-max_lag..=max_lag` (in grid steps, reported in angstrom).
///
/// Both series are shifted to zero mean and scaled to unit energy first, so
/// identical inputs give a peak of exactly one at zero lag.
pub fn cross_correlate(
    deriv: &[f64],
    deriv0: &[f64],
    pitch: f64,
    max_lag: usize,
) -> Result<CorrelationCurve> {
    if deriv.len() != deriv0.len() {
        return Err(Error::invalid("derivative series differ in length"));
    }
    let n = deriv.len();
    if n < 4 {
        return Err(Error::insufficient("need at least 4 samples"));
    }
    if max_lag == 0 || max_lag >= n / 2 {
        return Err(Error::invalid(format!(
            "max_lag must satisfy 0 < max_lag < n/2 = {}",
            n / 2
        )));
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(Error::invalid("pitch must be positive"));
    }
    let normalize = |xs: &[f64]| -> Vec<f64> {
        let m = stats::mean(xs);
        let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
        let energy = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
        if energy > 0.0 {
            centered.iter().map(|x| x / energy).collect()
        } else {
            centered
        }
    };
    let x = normalize(deriv);
    let y = normalize(deriv0);
    let mut lags = Vec::with_capacity(2 * max_lag + 1);
    let mut values = Vec::with_capacity(2 * max_lag + 1);
    for k in -(max_lag as isize)..=(max_lag as isize) {
        let mut acc = 0.0;
        for i in 0..n {
            let j = i as isize + k;
            if j >= 0 && (j as usize) < n {
                acc += x[j as usize] * y[i];
            }
        }
        lags.push(k as f64 * pitch);
        values.push(acc);
    }
    Ok(CorrelationCurve {
        lags,
        values,
        pitch,
    })
}

/// Options for the cross-correlation pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct XcorrOptions {
    pub sg: SGConfig,
    /// Maximum correlation lag in grid steps; default `min(n/4, 64)`.
    pub max_lag: Option<usize>,
    /// Half-width of the pseudo-Voigt fit window around the discrete peak,
    /// in grid steps.
    pub voigt_half_width: usize,
}

impl Default for XcorrOptions {
    fn default() -> Self {
        Self {
            sg: sg_config_for_noise_scale(1.0),
            max_lag: None,
            voigt_half_width: 20,
        }
    }
}

/// Full cross-correlation fit output.
#[derive(Debug, Clone)]
pub struct XcorrFit {
    pub correlation: CorrelationCurve,
    /// Pseudo-Voigt fit to the correlation peak (centre first).
    pub voigt: FitResult,
    pub estimate: StrainEstimate,
}

/// Estimate strain by cross-correlating smoothed derivatives of the
/// spectrum and a stress-free reference profile on the same grid.
pub fn fit_xcorr_strain(
    spectrum: &TransmissionSpectrum,
    reference: &TransmissionSpectrum,
    options: &XcorrOptions,
    lambda0: f64,
) -> Result<XcorrFit> {
    if lambda0 <= 0.0 {
        return Err(Error::invalid("lambda0 must be positive"));
    }
    if spectrum.len() != reference.len() {
        return Err(Error::invalid("spectrum and reference grids differ"));
    }
    let pitch = spectrum
        .uniform_pitch(1e-9)
        .ok_or_else(|| Error::invalid("cross-correlation requires a uniform grid"))?;
    let same_grid = spectrum
        .wavelengths()
        .iter()
        .zip(reference.wavelengths())
        .all(|(a, b)| (a - b).abs() <= 1e-9 * pitch.abs().max(1.0));
    if !same_grid {
        return Err(Error::invalid("spectrum and reference grids differ"));
    }

    let deriv = savitzky_golay_derivative(spectrum, &options.sg)?;
    let deriv0 = savitzky_golay_derivative(reference, &options.sg)?;
    let max_lag = options
        .max_lag
        .unwrap_or_else(|| (spectrum.len() / 4).clamp(4, 64));
    let correlation = cross_correlate(&deriv, &deriv0, pitch, max_lag)?;

    let peak = correlation.argmax();
    let at_bound = peak == 0 || peak == correlation.values.len() - 1;

    let lo = peak.saturating_sub(options.voigt_half_width);
    let hi = (peak + options.voigt_half_width).min(correlation.values.len() - 1);
    let xs = &correlation.lags[lo..=hi];
    let ys = &correlation.values[lo..=hi];
    if xs.len() < 7 {
        return Err(Error::insufficient("correlation fit window too small"));
    }

    let curve_min = correlation
        .values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let peak_val = correlation.values[peak];
    // The fit runs on independent Lorentz/Gauss amplitudes (a_l, a_g)
    // rather than (A, mu): the product parameterization is degenerate and
    // stalls the optimizer. Initial amplitudes split evenly (mu = 1/2).
    let amp0 = 0.5 * (peak_val - curve_min).max(1e-9);
    let init = [
        correlation.lags[peak],
        amp0,
        amp0,
        4.0 * pitch,
        4.0 * pitch,
        curve_min,
    ];
    let model = |p: &[f64], x: f64| {
        let total = p[1] + p[2];
        let mu = if total.abs() > 1e-300 { p[1] / total } else { 0.5 };
        let vp = VoigtParams {
            delta_hkl: p[0],
            a: total,
            mu,
            w_l: p[3].abs().max(1e-12),
            w_g: p[4].abs().max(1e-12),
            y0: p[5],
        };
        pseudo_voigt_unchecked(x, &vp)
    };
    let problem = CurveFitProblem {
        xs,
        ys,
        weights: None,
        model: &model,
        jacobian: None,
    };
    // Noisy correlation curves produce long shallow valleys in the width
    // parameters (a Lorentzian far wider than the window degenerates into
    // the baseline), so the widths are boxed to the fit window scale.
    let lag_lo = correlation.lags[lo];
    let lag_hi = correlation.lags[hi];
    let lm_opts = LmOptions {
        ftol: 1e-9,
        max_iterations: 400,
        bounds: Some(vec![
            (lag_lo, lag_hi),
            (-1.0, 3.0),
            (-1.0, 3.0),
            (0.5 * pitch, 25.0 * pitch),
            (0.5 * pitch, 25.0 * pitch),
            (-1.5, 1.5),
        ]),
        ..LmOptions::default()
    };
    let mut voigt = levenberg_marquardt(
        &problem,
        &init,
        &["delta_hkl", "amp_lorentz", "amp_gauss", "w_l", "w_g", "y0"],
        &lm_opts,
    )?;
    if !voigt.converged {
        return Err(Error::fit(
            None,
            format!(
                "pseudo-voigt fit did not converge in {} iterations",
                voigt.iterations
            ),
        ));
    }
    voigt.params[3] = voigt.params[3].abs().max(1e-12);
    voigt.params[4] = voigt.params[4].abs().max(1e-12);
    voigt.suspicious = at_bound;

    let strain = voigt.params[0] / lambda0;
    let std = voigt.param_std(0).map(|s| s / lambda0).unwrap_or(f64::NAN);
    let estimate = StrainEstimate {
        strain_mean: strain,
        strain_std: std,
        samples: None,
        method: Method::CrossCorrelation,
        bimodal: false,
    };
    Ok(XcorrFit {
        correlation,
        voigt,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{kropff_edge_derivative, EdgeParams};
    use crate::synth::GridSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn edge_params(lambda_hkl: f64) -> EdgeParams {
        EdgeParams {
            lambda_hkl,
            sigma_b: 8e-3,
            tau: 6e-3,
            a0: 0.2,
            b0: 0.04,
            a_hkl: 0.3,
            b_hkl: 0.01,
        }
    }

    fn noiseless(params: &EdgeParams) -> TransmissionSpectrum {
        let grid = GridSpec::default().build();
        let values: Vec<f64> = grid.iter().map(|&l| params.transmission(l)).collect();
        TransmissionSpectrum::new(grid, values, None).unwrap()
    }

    #[test]
    fn identical_inputs_peak_at_zero_with_unit_value() {
        let xs: Vec<f64> = (0..128).map(|i| ((i as f64) * 0.21).sin()).collect();
        let c = cross_correlate(&xs, &xs, 0.01, 30).unwrap();
        let peak = c.argmax();
        assert_abs_diff_eq!(c.lags[peak], 0.0);
        assert_relative_eq!(c.values[peak], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn correlation_of_series_with_itself_is_even() {
        let xs: Vec<f64> = (0..200)
            .map(|i| (-((i as f64 - 100.0) / 20.0).powi(2)).exp())
            .collect();
        let c = cross_correlate(&xs, &xs, 1.0, 40).unwrap();
        let mid = c.values.len() / 2;
        for k in 1..=40 {
            assert_abs_diff_eq!(c.values[mid + k], c.values[mid - k], epsilon = 1e-12);
        }
    }

    #[test]
    fn integer_shift_moves_the_peak() {
        let n = 256;
        let base: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - 128.0) / 10.0).powi(2)).exp())
            .collect();
        for shift in [3usize, 17] {
            // x[i] = base[i - shift]: the feature sits `shift` samples later.
            let shifted: Vec<f64> = (0..n)
                .map(|i| if i >= shift { base[i - shift] } else { 0.0 })
                .collect();
            let c = cross_correlate(&shifted, &base, 1.0, 40).unwrap();
            let peak = c.argmax();
            assert_abs_diff_eq!(c.lags[peak], shift as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let xs = vec![0.0; 64];
        assert!(cross_correlate(&xs, &xs[..32], 1.0, 8).is_err());
        assert!(cross_correlate(&xs, &xs, 1.0, 32).is_err());
        assert!(cross_correlate(&xs, &xs, 0.0, 8).is_err());
    }

    #[test]
    fn sub_sample_shift_recovered_by_voigt_fit() {
        // Analytic derivative sampled on the grid and at a 0.3-pitch shift.
        let n = 512;
        let lo = 3.8;
        let pitch = 0.5 / (n - 1) as f64;
        let (lh, sb, tau) = (4.05, 8e-3, 6e-3);
        let base: Vec<f64> = (0..n)
            .map(|i| kropff_edge_derivative(lo + i as f64 * pitch, lh, sb, tau).unwrap())
            .collect();
        let shift = 0.3 * pitch;
        let shifted: Vec<f64> = (0..n)
            .map(|i| kropff_edge_derivative(lo + i as f64 * pitch - shift, lh, sb, tau).unwrap())
            .collect();
        let c = cross_correlate(&shifted, &base, pitch, 60).unwrap();
        let peak = c.argmax();
        let lo_i = peak - 20;
        let hi_i = peak + 20;
        let model = |p: &[f64], x: f64| {
            let total = p[1] + p[2];
            let vp = VoigtParams {
                delta_hkl: p[0],
                a: total,
                mu: p[1] / total,
                w_l: p[3].abs().max(1e-12),
                w_g: p[4].abs().max(1e-12),
                y0: p[5],
            };
            pseudo_voigt_unchecked(x, &vp)
        };
        let problem = CurveFitProblem {
            xs: &c.lags[lo_i..=hi_i],
            ys: &c.values[lo_i..=hi_i],
            weights: None,
            model: &model,
            jacobian: None,
        };
        let fit = levenberg_marquardt(
            &problem,
            &[c.lags[peak], 0.5, 0.5, 4.0 * pitch, 4.0 * pitch, 0.0],
            &["delta_hkl", "amp_lorentz", "amp_gauss", "w_l", "w_g", "y0"],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(
            (fit.params[0] - shift).abs() < 0.05 * pitch,
            "fitted {} vs true {shift}",
            fit.params[0]
        );
    }

    #[test]
    fn reference_against_itself_gives_zero_strain() {
        let reference = noiseless(&edge_params(4.05));
        let fit = fit_xcorr_strain(
            &reference,
            &reference,
            &XcorrOptions::default(),
            4.05,
        )
        .unwrap();
        assert!(
            fit.estimate.strain_mean.abs() < 1e-9,
            "strain {}",
            fit.estimate.strain_mean
        );
        assert!(!fit.voigt.suspicious);
    }

    #[test]
    fn noiseless_shift_recovered_within_five_micro_strain() {
        let strain = 1.0e-3;
        let stressed = noiseless(&edge_params(4.05 * (1.0 + strain)));
        let reference = noiseless(&edge_params(4.05));
        let fit = fit_xcorr_strain(
            &stressed,
            &reference,
            &XcorrOptions {
                sg: SGConfig::new(15, 3).unwrap(),
                ..XcorrOptions::default()
            },
            4.05,
        )
        .unwrap();
        let err_micro = (fit.estimate.strain_mean - strain) * 1e6;
        assert!(err_micro.abs() < 5.0, "error {err_micro} micro-strain");
    }

    #[test]
    fn fitted_shift_invariant_to_common_scaling() {
        let stressed = noiseless(&edge_params(4.05 * 1.0005));
        let reference = noiseless(&edge_params(4.05));
        let options = XcorrOptions::default();
        let d: Vec<f64> = savitzky_golay_derivative(&stressed, &options.sg).unwrap();
        let d0: Vec<f64> = savitzky_golay_derivative(&reference, &options.sg).unwrap();
        let pitch = stressed.uniform_pitch(1e-9).unwrap();
        let c1 = cross_correlate(&d, &d0, pitch, 50).unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| 37.5 * x).collect();
        let scaled0: Vec<f64> = d0.iter().map(|x| 37.5 * x).collect();
        let c2 = cross_correlate(&scaled, &scaled0, pitch, 50).unwrap();
        for (a, b) in c1.values.iter().zip(&c2.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = noiseless(&edge_params(4.05));
        let grid: Vec<f64> = (0..a.len()).map(|i| 3.9 + i as f64 * 0.001).collect();
        let b = TransmissionSpectrum::new(grid, a.values().to_vec(), None).unwrap();
        assert!(fit_xcorr_strain(&a, &b, &XcorrOptions::default(), 4.05).is_err());
    }
}
