//! Damped least-squares (Levenberg-Marquardt) curve fitting with
//! Gauss-Newton covariance estimates.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_small_spd;

/// Options controlling the Levenberg-Marquardt iteration.
#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative decrease of the weighted SSE below which the fit stops.
    pub ftol: f64,
    /// Relative step size below which the fit stops.
    pub xtol: f64,
    /// Initial damping factor.
    pub initial_damping: f64,
    /// Relative step for central finite-difference Jacobians.
    pub fd_step: f64,
    /// Per-parameter box bounds; candidate steps are projected onto the box.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            initial_damping: 1e-10,
            fd_step: 1e-7,
            bounds: None,
        }
    }
}

fn project(params: &mut [f64], bounds: &Option<Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (p, (lo, hi)) in params.iter_mut().zip(b) {
            *p = p.clamp(*lo, *hi);
        }
    }
}

/// A curve-fitting problem `y_i ~ model(params, x_i)` with optional weights
/// (`1/sigma_i^2`) and an optional analytic Jacobian.
pub struct CurveFitProblem<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub weights: Option<&'a [f64]>,
    pub model: &'a dyn Fn(&[f64], f64) -> f64,
    /// Row of partial derivatives of the model w.r.t. the parameters at `x`.
    /// Central finite differences are used when absent.
    pub jacobian: Option<&'a dyn Fn(&[f64], f64) -> Vec<f64>>,
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// Gauss-Newton parameter covariance `(J^T W J)^-1 * SSE/(n-p)`;
    /// `None` when the normal matrix is singular or `n <= p`.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Final weighted sum of squared residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set by callers when the solution hit a window bound or similar.
    #[serde(default)]
    pub suspicious: bool,
    /// Weighted SSE after each accepted step (diagnostics only).
    #[serde(skip)]
    pub sse_history: Vec<f64>,
}

impl FitResult {
    /// Standard deviation of parameter `idx`, when the covariance exists.
    pub fn param_std(&self, idx: usize) -> Option<f64> {
        self.covariance
            .as_ref()
            .map(|c| c[idx][idx].max(0.0).sqrt())
    }
}

fn weighted_sse(problem: &CurveFitProblem, params: &[f64]) -> f64 {
    let mut sse = 0.0;
    for (i, (&x, &y)) in problem.xs.iter().zip(problem.ys).enumerate() {
        let f = (problem.model)(params, x);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        let w = problem.weights.map_or(1.0, |w| w[i]);
        let r = y - f;
        sse += w * r * r;
    }
    sse
}

fn jacobian_and_residuals(
    problem: &CurveFitProblem,
    params: &[f64],
    fd_step: f64,
) -> (Array2<f64>, Array1<f64>) {
    let n = problem.xs.len();
    let p = params.len();
    let mut jac = Array2::zeros((n, p));
    let mut res = Array1::zeros(n);
    if let Some(j) = problem.jacobian {
        for (i, (&x, &y)) in problem.xs.iter().zip(problem.ys).enumerate() {
            res[i] = y - (problem.model)(params, x);
            let row = j(params, x);
            for k in 0..p {
                jac[[i, k]] = row[k];
            }
        }
    } else {
        let mut lo = params.to_vec();
        let mut hi = params.to_vec();
        for (i, (&x, &y)) in problem.xs.iter().zip(problem.ys).enumerate() {
            res[i] = y - (problem.model)(params, x);
        }
        for k in 0..p {
            let h = fd_step * params[k].abs().max(1.0);
            hi[k] = params[k] + h;
            lo[k] = params[k] - h;
            for (i, &x) in problem.xs.iter().enumerate() {
                let d = ((problem.model)(&hi, x) - (problem.model)(&lo, x)) / (2.0 * h);
                jac[[i, k]] = if d.is_finite() { d } else { 0.0 };
            }
            hi[k] = params[k];
            lo[k] = params[k];
        }
    }
    (jac, res)
}

/// Minimize the weighted SSE of a curve-fit problem.
///
/// Non-convergence within the iteration budget is reported through the
/// `converged` flag, not as an error; a singular normal matrix leaves the
/// covariance unavailable.
pub fn levenberg_marquardt(
    problem: &CurveFitProblem,
    init: &[f64],
    param_names: &[&str],
    opts: &LmOptions,
) -> Result<FitResult> {
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite initial parameters"));
    }
    if problem.xs.len() != problem.ys.len() {
        return Err(Error::invalid("xs and ys differ in length"));
    }
    if let Some(w) = problem.weights {
        if w.len() != problem.xs.len() || w.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid("weights must be positive and match data length"));
        }
    }
    if problem.xs.len() < init.len() {
        return Err(Error::insufficient(format!(
            "{} points for {} parameters",
            problem.xs.len(),
            init.len()
        )));
    }
    if let Some(b) = &opts.bounds {
        if b.len() != init.len() || b.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::invalid("bounds must match parameters with lo <= hi"));
        }
    }

    let n = problem.xs.len();
    let p = init.len();
    let mut params = init.to_vec();
    project(&mut params, &opts.bounds);
    let mut sse = weighted_sse(problem, &params);
    if !sse.is_finite() {
        return Err(Error::invalid("model not finite at the initial parameters"));
    }
    let mut damping = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut history = vec![sse];

    'outer: for _ in 0..opts.max_iterations {
        iterations += 1;
        let (jac, res) = jacobian_and_residuals(problem, &params, opts.fd_step);
        // Normal equations with weights folded in.
        let mut jtj = Array2::<f64>::zeros((p, p));
        let mut jtr = Array1::<f64>::zeros(p);
        for i in 0..n {
            let w = problem.weights.map_or(1.0, |w| w[i]);
            for a in 0..p {
                jtr[a] += w * jac[[i, a]] * res[i];
                for b in a..p {
                    jtj[[a, b]] += w * jac[[i, a]] * jac[[i, b]];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[[a, b]] = jtj[[b, a]];
            }
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..p {
                // Marquardt scaling with a floor for flat directions.
                damped[[a, a]] += damping * jtj[[a, a]].max(1e-12);
            }
            if let Ok(step) = solve_small_spd(&damped, &jtr) {
                let mut trial: Vec<f64> =
                    params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
                project(&mut trial, &opts.bounds);
                let trial_sse = weighted_sse(problem, &trial);
                if trial_sse.is_finite() && trial_sse <= sse {
                    let rel_step = trial
                        .iter()
                        .zip(&params)
                        .map(|(t, p)| (t - p).abs() / (p.abs() + opts.xtol))
                        .fold(0.0f64, f64::max);
                    let improvement = sse - trial_sse;
                    params = trial;
                    sse = trial_sse;
                    history.push(sse);
                    damping = (damping / 10.0).max(1e-14);
                    accepted = true;
                    if improvement <= opts.ftol * sse.max(1e-300) || rel_step <= opts.xtol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
        if !accepted {
            // No downhill step found at any damping: treat as converged to a
            // stationary point.
            converged = true;
            break;
        }
    }

    // Gauss-Newton covariance at the solution.
    let covariance = if n > p {
        let (jac, _) = jacobian_and_residuals(problem, &params, opts.fd_step);
        let mut jtj = Array2::<f64>::zeros((p, p));
        for i in 0..n {
            let w = problem.weights.map_or(1.0, |w| w[i]);
            for a in 0..p {
                for b in a..p {
                    jtj[[a, b]] += w * jac[[i, a]] * jac[[i, b]];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[[a, b]] = jtj[[b, a]];
            }
        }
        invert_spd(&jtj).map(|inv| {
            let scale = sse / (n - p) as f64;
            (0..p)
                .map(|a| (0..p).map(|b| inv[[a, b]] * scale).collect())
                .collect()
        })
    } else {
        None
    };

    Ok(FitResult {
        param_names: param_names.iter().map(|s| s.to_string()).collect(),
        params,
        covariance,
        residual_norm: sse,
        converged,
        iterations,
        suspicious: false,
        sse_history: history,
    })
}

fn invert_spd(a: &Array2<f64>) -> Option<Array2<f64>> {
    use ndarray_linalg::eigh::Eigh;
    use ndarray_linalg::UPLO;
    // Pseudo-inverse through the eigendecomposition: directions the data
    // does not constrain (e.g. the asymmetry constant folded at zero) are
    // dropped instead of poisoning the whole covariance.
    let (eigs, vecs) = a.eigh(UPLO::Lower).ok()?;
    let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
    if !(max_eig > 0.0) || !max_eig.is_finite() {
        return None;
    }
    let cutoff = 1e-12 * max_eig;
    let p = a.nrows();
    let mut inv = Array2::<f64>::zeros((p, p));
    for k in 0..p {
        if eigs[k] > cutoff {
            let w = 1.0 / eigs[k];
            for i in 0..p {
                for j in 0..p {
                    inv[[i, j]] += w * vecs[[i, k]] * vecs[[j, k]];
                }
            }
        }
    }
    Some(inv)
}
