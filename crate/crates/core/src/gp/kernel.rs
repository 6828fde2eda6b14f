//! Stationary covariance functions with the derivative blocks needed to
//! condition both a function and its gradient.
//!
//! The convention here follows the edge-shape model: kernels are scaled so
//! that `k(x, x) = sigma_f` (the prior variance scale enters linearly).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Covariance-function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
    Matern32,
    Matern52,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            KernelKind::SquaredExponential => "squared_exponential",
            KernelKind::Matern32 => "matern_3_2",
            KernelKind::Matern52 => "matern_5_2",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "squared_exponential" | "squared-exponential" => {
                Ok(KernelKind::SquaredExponential)
            }
            "matern32" | "matern_3_2" | "matern-3-2" => Ok(KernelKind::Matern32),
            "matern52" | "matern_5_2" | "matern-5-2" => Ok(KernelKind::Matern52),
            other => Err(Error::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Derivative block selector for [`Kernel::eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDeriv {
    /// `k(x, x')`
    None,
    /// `d k / d x`
    Dx,
    /// `d^2 k / (d x d x')`
    DxDy,
}

/// A stationary kernel with prior variance scale and length-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub sigma_f: f64,
    pub length_scale: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, sigma_f: f64, length_scale: f64) -> Result<Self> {
        let k = Self {
            kind,
            sigma_f,
            length_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f.is_finite() && self.sigma_f > 0.0) {
            return Err(Error::invalid("sigma_f must be positive"));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::invalid("length_scale must be positive"));
        }
        Ok(())
    }

    /// Evaluate the kernel or one of its derivative blocks.
    pub fn eval(&self, x: f64, y: f64, deriv: KernelDeriv) -> f64 {
        let s = x - y;
        let r = s.abs();
        let l = self.length_scale;
        let sf = self.sigma_f;
        match self.kind {
            KernelKind::SquaredExponential => {
                let e = (-0.5 * s * s / (l * l)).exp();
                match deriv {
                    KernelDeriv::None => sf * e,
                    KernelDeriv::Dx => -sf * s / (l * l) * e,
                    KernelDeriv::DxDy => sf * (1.0 / (l * l) - s * s / (l * l * l * l)) * e,
                }
            }
            KernelKind::Matern32 => {
                let a = SQRT3 / l;
                let e = (-a * r).exp();
                match deriv {
                    KernelDeriv::None => sf * (1.0 + a * r) * e,
                    KernelDeriv::Dx => -sf * a * a * s * e,
                    KernelDeriv::DxDy => sf * a * a * (1.0 - a * r) * e,
                }
            }
            KernelKind::Matern52 => {
                let b = SQRT5 / l;
                let e = (-b * r).exp();
                match deriv {
                    KernelDeriv::None => sf * (1.0 + b * r + b * b * r * r / 3.0) * e,
                    KernelDeriv::Dx => -sf * b * b / 3.0 * s * (1.0 + b * r) * e,
                    KernelDeriv::DxDy => {
                        sf * b * b / 3.0 * (1.0 + b * r - b * b * r * r) * e
                    }
                }
            }
        }
    }

    /// Gradient of `k(x, x')` with respect to `log sigma_f` and
    /// `log length_scale`.
    pub fn grad_log_params(&self, x: f64, y: f64) -> [f64; 2] {
        let s = x - y;
        let r = s.abs();
        let l = self.length_scale;
        let sf = self.sigma_f;
        let value = self.eval(x, y, KernelDeriv::None);
        let d_log_l = match self.kind {
            KernelKind::SquaredExponential => value * s * s / (l * l),
            KernelKind::Matern32 => {
                let a = SQRT3 / l;
                sf * a * a * r * r * (-a * r).exp()
            }
            KernelKind::Matern52 => {
                let b = SQRT5 / l;
                sf * b * b * r * r / 3.0 * (1.0 + b * r) * (-b * r).exp()
            }
        };
        [value, d_log_l]
    }
}

/// Free-function form of [`Kernel::eval`] with parameter validation.
pub fn kernel_eval(kernel: &Kernel, x: f64, y: f64, deriv: KernelDeriv) -> Result<f64> {
    kernel.validate()?;
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::invalid("non-finite kernel input"));
    }
    Ok(kernel.eval(x, y, deriv))
}

pub const ALL_KERNEL_KINDS: [KernelKind; 3] = [
    KernelKind::SquaredExponential,
    KernelKind::Matern32,
    KernelKind::Matern52,
];
