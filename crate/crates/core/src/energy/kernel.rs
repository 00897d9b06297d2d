use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separations below this are treated as coincident points.
pub const SINGULAR_SEPARATION: f64 = 1e-14;

/// Radial interaction kernels `W(|x|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `|x|²/2 - ln|x|`
    QuadraticMinusLog,
    /// `ln|x| / 2π` on the line
    #[serde(rename = "log_newtonian_1d")]
    LogNewtonian1D,
    /// `-e^{-|x|²} / π`
    #[serde(rename = "gaussian_attraction_2d")]
    GaussianAttraction2D,
    /// `ln|x| / 2π` in the plane
    #[serde(rename = "log_newtonian_2d")]
    LogNewtonian2D,
}

fn t_log_abs(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.abs().ln()
    }
}

fn guard(t: f64) -> Result<()> {
    if t.abs() < SINGULAR_SEPARATION {
        Err(Error::KernelSingularity { separation: t })
    } else {
        Ok(())
    }
}

impl KernelKind {
    pub fn is_logarithmic(self) -> bool {
        !matches!(self, KernelKind::GaussianAttraction2D)
    }

    /// `W(t)` for a scalar separation (1D use).
    pub fn value(self, t: f64) -> Result<f64> {
        if self.is_logarithmic() {
            guard(t)?;
        }
        Ok(self.value_unchecked(t))
    }

    /// `W'(t)`.
    pub fn derivative(self, t: f64) -> Result<f64> {
        if self.is_logarithmic() {
            guard(t)?;
        }
        Ok(self.derivative_unchecked(t))
    }

    /// Primitive `∫_0^t W(s) ds`, finite at 0 for the logarithmic kernels.
    pub fn primitive(self, t: f64) -> Result<f64> {
        if !self.is_logarithmic() {
            return Err(Error::Unsupported("the Gaussian kernel has no closed-form cell integral".into()));
        }
        Ok(self.primitive_unchecked(t))
    }

    #[inline]
    pub(crate) fn value_unchecked(self, t: f64) -> f64 {
        match self {
            KernelKind::QuadraticMinusLog => 0.5 * t * t - t.abs().ln(),
            KernelKind::LogNewtonian1D | KernelKind::LogNewtonian2D => t.abs().ln() / (2.0 * PI),
            KernelKind::GaussianAttraction2D => -(-t * t).exp() / PI,
        }
    }

    #[inline]
    pub(crate) fn derivative_unchecked(self, t: f64) -> f64 {
        match self {
            KernelKind::QuadraticMinusLog => t - 1.0 / t,
            KernelKind::LogNewtonian1D | KernelKind::LogNewtonian2D => 1.0 / (2.0 * PI * t),
            KernelKind::GaussianAttraction2D => 2.0 * t * (-t * t).exp() / PI,
        }
    }

    /// Logarithmic kernels only.
    #[inline]
    pub(crate) fn primitive_unchecked(self, t: f64) -> f64 {
        match self {
            KernelKind::QuadraticMinusLog => t * t * t / 6.0 - t_log_abs(t) + t,
            _ => (t_log_abs(t) - t) / (2.0 * PI),
        }
    }

    /// `W(r)` for a planar separation of length `r`.
    pub fn value_2d(self, r: f64) -> Result<f64> {
        self.value(r)
    }

    /// Gradient `∇W(d)` for a planar separation vector `d`.
    pub fn gradient_2d(self, dx: f64, dy: f64) -> Result<(f64, f64)> {
        let r2 = dx * dx + dy * dy;
        let s = match self {
            KernelKind::QuadraticMinusLog => {
                guard(r2.sqrt())?;
                1.0 - 1.0 / r2
            }
            KernelKind::LogNewtonian1D | KernelKind::LogNewtonian2D => {
                guard(r2.sqrt())?;
                1.0 / (2.0 * PI * r2)
            }
            KernelKind::GaussianAttraction2D => 2.0 * (-r2).exp() / PI,
        };
        Ok((s * dx, s * dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_differentiates_to_kernel() {
        for k in [KernelKind::QuadraticMinusLog, KernelKind::LogNewtonian1D] {
            for t in [-2.3, -0.4, 0.01, 0.7, 3.1] {
                let h = 1e-6;
                let fd = (k.primitive(t + h).unwrap() - k.primitive(t - h).unwrap()) / (2.0 * h);
                assert!((fd - k.value(t).unwrap()).abs() < 1e-7, "{k:?} at {t}");
            }
        }
    }

    #[test]
    fn kernels_are_even() {
        for k in [
            KernelKind::QuadraticMinusLog,
            KernelKind::LogNewtonian1D,
            KernelKind::GaussianAttraction2D,
            KernelKind::LogNewtonian2D,
        ] {
            assert_eq!(k.value(0.37).unwrap(), k.value(-0.37).unwrap());
        }
    }

    #[test]
    fn log_kernel_rejects_coincident_points() {
        assert!(matches!(KernelKind::LogNewtonian2D.gradient_2d(0.0, 0.0), Err(Error::KernelSingularity { .. })));
        assert_eq!(KernelKind::GaussianAttraction2D.gradient_2d(0.0, 0.0).unwrap(), (0.0, 0.0));
    }
}
