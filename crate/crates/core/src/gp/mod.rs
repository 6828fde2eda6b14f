//! Gaussian-process regression under a per-point linear measurement map:
//! posterior conditioning for the latent function and its gradient, and the
//! marginal log-likelihood with analytic gradients.
//!
//! Measurements take the form `y_i = A_i f(x_i) + e_i` with heteroscedastic
//! Gaussian noise, so the Gram matrix is `K_y = A K A^T + diag(sigma_i^2)`.

pub mod hyper;
pub mod kernel;

pub use hyper::{optimize_hyperparameters, HyperOptions, HyperOutcome, StartDiagnostic};

pub use kernel::{kernel_eval, Kernel, KernelDeriv, KernelKind, ALL_KERNEL_KINDS};

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, log_det_from_cholesky, solve_lower_matrix, solve_spd, spd_inverse};

/// A GP regression problem for the edge shape: shifted measurements, the
/// per-point scalar map, noise levels, and the kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpEdgeProblem {
    /// Measurement locations (angstrom).
    pub lambdas: Vec<f64>,
    /// Shifted measurements `y_i - gamma_1(lambda_i)`.
    pub y_bar: Vec<f64>,
    /// Scalar map `A(lambda_i) = gamma_2(lambda_i) - gamma_1(lambda_i)`.
    pub map_a: Vec<f64>,
    /// Per-point noise standard deviation.
    pub noise_std: Vec<f64>,
    pub kernel: Kernel,
}

impl GpEdgeProblem {
    pub fn new(
        lambdas: Vec<f64>,
        y_bar: Vec<f64>,
        map_a: Vec<f64>,
        noise_std: Vec<f64>,
        kernel: Kernel,
    ) -> Result<Self> {
        let n = lambdas.len();
        if y_bar.len() != n || map_a.len() != n || noise_std.len() != n {
            return Err(Error::invalid("problem arrays differ in length"));
        }
        if lambdas.iter().any(|v| !v.is_finite())
            || y_bar.iter().any(|v| !v.is_finite())
            || map_a.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite entry in problem arrays"));
        }
        if noise_std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("noise_std entries must be strictly positive"));
        }
        kernel.validate()?;
        Ok(Self {
            lambdas,
            y_bar,
            map_a,
            noise_std,
            kernel,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `K_y = A K A^T + diag(sigma^2)` for the stored kernel, with the noise
    /// standard deviations multiplied by `noise_scale`.
    pub(crate) fn gram(&self, kernel: &Kernel, noise_scale: f64) -> Array2<f64> {
        let n = self.len();
        let mut k = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = self.map_a[i]
                    * kernel.eval(self.lambdas[i], self.lambdas[j], KernelDeriv::None)
                    * self.map_a[j];
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
            let s = noise_scale * self.noise_std[i];
            k[[i, i]] += s * s;
        }
        k
    }
}

/// Posterior of the edge shape `B` and its gradient `g` on a prediction grid.
#[derive(Debug, Clone)]
pub struct GpEdgePosterior {
    pub grid: Vec<f64>,
    pub mean_b: Array1<f64>,
    pub cov_b: Array2<f64>,
    pub mean_g: Array1<f64>,
    pub cov_g: Array2<f64>,
}

fn posterior_block(
    problem: &GpEdgeProblem,
    grid: &[f64],
    l: &Array2<f64>,
    alpha: &Array1<f64>,
    deriv_cross: KernelDeriv,
    deriv_prior: KernelDeriv,
) -> (Array1<f64>, Array2<f64>) {
    let n = problem.len();
    let m = grid.len();
    let kernel = &problem.kernel;
    // Cross-covariance between the (possibly differentiated) prediction
    // block and the measurements.
    let mut cross = Array2::<f64>::zeros((m, n));
    for s in 0..m {
        for i in 0..n {
            cross[[s, i]] =
                kernel.eval(grid[s], problem.lambdas[i], deriv_cross) * problem.map_a[i];
        }
    }
    let mean = cross.dot(alpha);
    let mut prior = Array2::<f64>::zeros((m, m));
    for s in 0..m {
        for t in 0..=s {
            let v = kernel.eval(grid[s], grid[t], deriv_prior);
            prior[[s, t]] = v;
            prior[[t, s]] = v;
        }
    }
    if n == 0 {
        return (mean, prior);
    }
    let v = solve_lower_matrix(l, &cross.t().to_owned());
    let mut cov = prior - v.t().dot(&v);
    // Symmetrize and clip roundoff negatives on the diagonal.
    for s in 0..m {
        for t in 0..s {
            let avg = 0.5 * (cov[[s, t]] + cov[[t, s]]);
            cov[[s, t]] = avg;
            cov[[t, s]] = avg;
        }
        if cov[[s, s]] < 0.0 {
            cov[[s, s]] = 0.0;
        }
    }
    (mean, cov)
}

/// Condition the edge shape and its gradient on the measurements, evaluated
/// on a prediction grid. Solved through a Cholesky factorization of the Gram
/// matrix (with the jitter ladder), never an explicit inverse.
pub fn gp_condition(problem: &GpEdgeProblem, grid: &[f64]) -> Result<GpEdgePosterior> {
    if grid.is_empty() {
        return Err(Error::invalid("empty prediction grid"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite grid entry"));
    }
    if problem.is_empty() {
        // Prior: zero mean, kernel Gram on the grid.
        let m = grid.len();
        let kernel = &problem.kernel;
        let build = |deriv: KernelDeriv| {
            let mut prior = Array2::<f64>::zeros((m, m));
            for s in 0..m {
                for t in 0..m {
                    prior[[s, t]] = kernel.eval(grid[s], grid[t], deriv);
                }
            }
            prior
        };
        return Ok(GpEdgePosterior {
            grid: grid.to_vec(),
            mean_b: Array1::zeros(m),
            cov_b: build(KernelDeriv::None),
            mean_g: Array1::zeros(m),
            cov_g: build(KernelDeriv::DxDy),
        });
    }

    let gram = problem.gram(&problem.kernel, 1.0);
    let (l, _) = cholesky_with_jitter(&gram)?;
    let y = Array1::from_vec(problem.y_bar.clone());
    let alpha = solve_spd(&l, &y);

    let (mean_b, cov_b) =
        posterior_block(problem, grid, &l, &alpha, KernelDeriv::None, KernelDeriv::None);
    let (mean_g, cov_g) =
        posterior_block(problem, grid, &l, &alpha, KernelDeriv::Dx, KernelDeriv::DxDy);

    Ok(GpEdgePosterior {
        grid: grid.to_vec(),
        mean_b,
        cov_b,
        mean_g,
        cov_g,
    })
}

/// Posterior mean of the gradient alone, without covariance blocks. Used
/// where only a deterministic argmax is needed (stress-free references).
pub fn gp_mean_gradient(problem: &GpEdgeProblem, grid: &[f64]) -> Result<Array1<f64>> {
    if problem.is_empty() {
        return Ok(Array1::zeros(grid.len()));
    }
    let gram = problem.gram(&problem.kernel, 1.0);
    let (l, _) = cholesky_with_jitter(&gram)?;
    let y = Array1::from_vec(problem.y_bar.clone());
    let alpha = solve_spd(&l, &y);
    let n = problem.len();
    let mut mean = Array1::zeros(grid.len());
    for (s, &g) in grid.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            acc += problem.kernel.eval(g, problem.lambdas[i], KernelDeriv::Dx)
                * problem.map_a[i]
                * alpha[i];
        }
        mean[s] = acc;
    }
    Ok(mean)
}

/// Marginal log-likelihood gradient with respect to the log hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct MllGradient {
    pub log_sigma_f: f64,
    pub log_length_scale: f64,
    pub log_noise_scale: f64,
}

/// Marginal log-likelihood `-(log det K_y + y^T K_y^{-1} y)/2` (constant
/// term omitted) and its gradient, for the problem's stored kernel.
pub fn log_marginal_likelihood(problem: &GpEdgeProblem) -> Result<(f64, MllGradient)> {
    mll_with(problem, &problem.kernel, 1.0)
}

/// Marginal log-likelihood value alone (no gradients); the cheap path for
/// line searches.
pub fn mll_value(problem: &GpEdgeProblem, kernel: &Kernel, noise_scale: f64) -> Result<f64> {
    kernel.validate()?;
    if !(noise_scale > 0.0) {
        return Err(Error::invalid("noise_scale must be positive"));
    }
    if problem.is_empty() {
        return Err(Error::insufficient("marginal likelihood of zero measurements"));
    }
    let gram = problem.gram(kernel, noise_scale);
    let (l, _) = cholesky_with_jitter(&gram)?;
    let y = Array1::from_vec(problem.y_bar.clone());
    let alpha = solve_spd(&l, &y);
    Ok(-0.5 * (log_det_from_cholesky(&l) + y.dot(&alpha)))
}

/// As [`log_marginal_likelihood`] with an explicit kernel and a global scale
/// applied to the per-point noise standard deviations.
pub fn mll_with(
    problem: &GpEdgeProblem,
    kernel: &Kernel,
    noise_scale: f64,
) -> Result<(f64, MllGradient)> {
    kernel.validate()?;
    if !(noise_scale > 0.0) {
        return Err(Error::invalid("noise_scale must be positive"));
    }
    let n = problem.len();
    if n == 0 {
        return Err(Error::insufficient("marginal likelihood of zero measurements"));
    }
    let gram = problem.gram(kernel, noise_scale);
    let (l, _) = cholesky_with_jitter(&gram)?;
    let y = Array1::from_vec(problem.y_bar.clone());
    let alpha = solve_spd(&l, &y);
    let value = -0.5 * (log_det_from_cholesky(&l) + y.dot(&alpha));

    // Gradients: 1/2 (alpha^T dK alpha - tr(K_y^-1 dK)).
    let w = spd_inverse(&l);
    let mut quad_sf = 0.0;
    let mut quad_l = 0.0;
    let mut tr_sf = 0.0;
    let mut tr_l = 0.0;
    for i in 0..n {
        for j in 0..n {
            let [g_sf, g_l] = kernel.grad_log_params(problem.lambdas[i], problem.lambdas[j]);
            let a = problem.map_a[i] * problem.map_a[j];
            let d_sf = a * g_sf;
            let d_l = a * g_l;
            quad_sf += alpha[i] * d_sf * alpha[j];
            quad_l += alpha[i] * d_l * alpha[j];
            tr_sf += w[[i, j]] * d_sf;
            tr_l += w[[i, j]] * d_l;
        }
    }
    let mut quad_ns = 0.0;
    let mut tr_ns = 0.0;
    for i in 0..n {
        let s = noise_scale * problem.noise_std[i];
        let d = 2.0 * s * s;
        quad_ns += alpha[i] * alpha[i] * d;
        tr_ns += w[[i, i]] * d;
    }
    Ok((
        value,
        MllGradient {
            log_sigma_f: 0.5 * (quad_sf - tr_sf),
            log_length_scale: 0.5 * (quad_l - tr_l),
            log_noise_scale: 0.5 * (quad_ns - tr_ns),
        },
    ))
}
