//! Savitzky-Golay derivative filter on a uniform grid.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_small_spd;
use crate::spectrum::TransmissionSpectrum;

/// Savitzky-Golay smoothing configuration. The derivative order is fixed
/// at one (first derivative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SGConfig {
    /// Odd window length in samples.
    pub window_length: usize,
    pub polynomial_order: usize,
}

impl SGConfig {
    pub fn new(window_length: usize, polynomial_order: usize) -> Result<Self> {
        let config = Self {
            window_length,
            polynomial_order,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length % 2 == 0 {
            return Err(Error::invalid("window_length must be odd"));
        }
        if self.polynomial_order < 1 {
            return Err(Error::invalid("polynomial_order must be >= 1"));
        }
        if self.window_length <= self.polynomial_order + 1 {
            return Err(Error::invalid(
                "window_length must exceed polynomial_order + 1",
            ));
        }
        Ok(())
    }
}

/// Default smoothing configuration for a simulation noise scale. Larger
/// windows suppress more noise at the cost of bias, so the window grows with
/// the noise level.
pub fn sg_config_for_noise_scale(noise_scale: f64) -> SGConfig {
    if noise_scale <= 0.3 {
        SGConfig {
            window_length: 15,
            polynomial_order: 3,
        }
    } else if noise_scale <= 3.0 {
        SGConfig {
            window_length: 25,
            polynomial_order: 3,
        }
    } else {
        SGConfig {
            window_length: 41,
            polynomial_order: 2,
        }
    }
}

/// Rows of the local polynomial projector `(A^T A)^{-1} A^T` for a window of
/// `m` samples centred at zero.
fn polynomial_projector(m: usize, order: usize) -> Array2<f64> {
    let half = (m / 2) as f64;
    let mut a = Array2::<f64>::zeros((m, order + 1));
    for i in 0..m {
        let t = i as f64 - half;
        let mut pow = 1.0;
        for j in 0..=order {
            a[[i, j]] = pow;
            pow *= t;
        }
    }
    let ata = a.t().dot(&a);
    let mut proj = Array2::<f64>::zeros((order + 1, m));
    for col in 0..m {
        let rhs = a.row(col).to_owned();
        let sol = solve_small_spd(&ata, &rhs).expect("vandermonde normal matrix is SPD");
        for j in 0..=order {
            proj[[j, col]] = sol[j];
        }
    }
    proj
}

/// First derivative of a polynomial with coefficients `c` (ascending powers)
/// at offset `t` in samples.
fn poly_derivative(c: ArrayView1<f64>, t: f64) -> f64 {
    let mut d = 0.0;
    let mut pow = 1.0;
    for j in 1..c.len() {
        d += j as f64 * c[j] * pow;
        pow *= t;
    }
    d
}

/// Savitzky-Golay first derivative of a raw series on a uniform grid with
/// the given pitch. Terminal samples are handled by evaluating the boundary
/// window's polynomial at their offsets.
pub fn sg_derivative_series(ys: &[f64], pitch: f64, config: &SGConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = ys.len();
    let m = config.window_length;
    if n < m {
        return Err(Error::insufficient(format!(
            "series of {n} points is shorter than the window ({m})"
        )));
    }
    let half = m / 2;
    let proj = polynomial_projector(m, config.polynomial_order);
    // Interior filter: derivative coefficient row evaluated at t = 0.
    let center = proj.row(1).to_owned();
    let mut out = vec![0.0; n];
    for i in half..n - half {
        let mut acc = 0.0;
        for k in 0..m {
            acc += center[k] * ys[i - half + k];
        }
        out[i] = acc / pitch;
    }
    // Left boundary: polynomial over the first window.
    let window = Array1::from_iter(ys[0..m].iter().cloned());
    let coeffs = proj.dot(&window);
    for i in 0..half {
        out[i] = poly_derivative(coeffs.view(), i as f64 - half as f64) / pitch;
    }
    // Right boundary: polynomial over the last window.
    let window = Array1::from_iter(ys[n - m..n].iter().cloned());
    let coeffs = proj.dot(&window);
    for i in n - half..n {
        let t = i as f64 - (n - 1 - half) as f64;
        out[i] = poly_derivative(coeffs.view(), t) / pitch;
    }
    Ok(out)
}

/// Savitzky-Golay first derivative of a spectrum. The wavelength grid must
/// be uniform to one part in 1e9.
pub fn savitzky_golay_derivative(
    spectrum: &TransmissionSpectrum,
    config: &SGConfig,
) -> Result<Vec<f64>> {
    let pitch = spectrum
        .uniform_pitch(1e-9)
        .ok_or_else(|| Error::invalid("savitzky-golay requires a uniform wavelength grid"))?;
    sg_derivative_series(spectrum.values(), pitch, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn config_validation() {
        assert!(SGConfig::new(15, 3).is_ok());
        assert!(SGConfig::new(14, 3).is_err());
        assert!(SGConfig::new(5, 4).is_err());
        assert!(SGConfig::new(5, 0).is_err());
    }

    #[test]
    fn exact_on_polynomials_interior() {
        // Degree-3 polynomial with a degree-3 filter: derivative exact.
        let n = 101;
        let pitch = 0.01;
        let ys: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 * pitch;
                0.3 - 1.2 * x + 0.7 * x * x - 0.2 * x * x * x
            })
            .collect();
        let config = SGConfig::new(11, 3).unwrap();
        let d = sg_derivative_series(&ys, pitch, &config).unwrap();
        for i in 5..n - 5 {
            let x = i as f64 * pitch;
            let expect = -1.2 + 1.4 * x - 0.6 * x * x;
            assert_abs_diff_eq!(d[i], expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_ramp_everywhere() {
        let n = 64;
        let pitch = 0.5;
        let ys: Vec<f64> = (0..n).map(|i| 3.0 * (i as f64 * pitch)).collect();
        let config = SGConfig::new(9, 2).unwrap();
        let d = sg_derivative_series(&ys, pitch, &config).unwrap();
        // Boundary handling included: a ramp is a polynomial, so exact.
        for &v in &d {
            assert_abs_diff_eq!(v, 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn filter_is_linear() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let n = 80;
        let config = SGConfig::new(13, 3).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let alpha: f64 = rng.random_range(-2.0..2.0);
            let beta: f64 = rng.random_range(-2.0..2.0);
            let combo: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| alpha * a + beta * b)
                .collect();
            let fx = sg_derivative_series(&x, 0.1, &config).unwrap();
            let fy = sg_derivative_series(&y, 0.1, &config).unwrap();
            let fc = sg_derivative_series(&combo, 0.1, &config).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(fc[i], alpha * fx[i] + beta * fy[i], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn kropff_derivative_peak_located_within_one_pitch() {
        // Noiseless edge: the max of the filtered derivative should sit
        // within one grid pitch of the analytic maximizer.
        let n = 512;
        let lo = 3.8;
        let hi = 4.3;
        let pitch = (hi - lo) / (n - 1) as f64;
        let (lh, sb, tau) = (4.05, 8e-3, 6e-3);
        let ys: Vec<f64> = (0..n)
            .map(|i| crate::spectrum::kropff_edge(lo + i as f64 * pitch, lh, sb, tau).unwrap())
            .collect();
        let config = SGConfig::new(15, 3).unwrap();
        let d = sg_derivative_series(&ys, pitch, &config).unwrap();
        let argmax = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let sg_peak = lo + argmax as f64 * pitch;

        // Dense evaluation of the analytic derivative.
        let mut best = lo;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..20_000 {
            let lam = 4.0 + 0.1 * i as f64 / 19_999.0;
            let v = crate::spectrum::kropff_edge_derivative(lam, lh, sb, tau).unwrap();
            if v > best_v {
                best_v = v;
                best = lam;
            }
        }
        assert!(
            (sg_peak - best).abs() <= pitch,
            "sg peak {sg_peak} vs analytic {best}"
        );
    }

    #[test]
    fn rejects_short_series_and_non_uniform_grid() {
        let config = SGConfig::new(15, 3).unwrap();
        assert!(sg_derivative_series(&[1.0; 10], 0.1, &config).is_err());

        let mut wavelengths: Vec<f64> = (0..32).map(|i| i as f64 * 0.1).collect();
        wavelengths[20] += 0.03;
        let spectrum =
            TransmissionSpectrum::new(wavelengths, vec![0.5; 32], None).unwrap();
        let err = savitzky_golay_derivative(&spectrum, &SGConfig::new(5, 2).unwrap());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn noise_scale_defaults() {
        assert_eq!(sg_config_for_noise_scale(0.1).window_length, 15);
        assert_eq!(sg_config_for_noise_scale(1.0).window_length, 25);
        assert_eq!(sg_config_for_noise_scale(10.0).window_length, 41);
        assert_eq!(sg_config_for_noise_scale(10.0).polynomial_order, 2);
    }

    #[test]
    fn spectrum_wrapper_matches_series() {
        let n = 64;
        let pitch = 0.01;
        let wavelengths: Vec<f64> = (0..n).map(|i| 4.0 + i as f64 * pitch).collect();
        let values: Vec<f64> = wavelengths.iter().map(|x| (x * 3.0).sin()).collect();
        let spectrum = TransmissionSpectrum::new(wavelengths, values.clone(), None).unwrap();
        let config = SGConfig::new(7, 2).unwrap();
        let a = savitzky_golay_derivative(&spectrum, &config).unwrap();
        let b = sg_derivative_series(&values, pitch, &config).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }
}
