//! Discrete free energies `U(ρ) + Vρ + ½ W*ρ ρ` on flow maps, with gradients
//! and (in 1D) Hessians.

mod kernel;
mod one_d;
mod two_d;

use serde::{Deserialize, Serialize};

pub use kernel::{KernelKind, SINGULAR_SEPARATION};
pub use one_d::{discrete_energy_1d, energy_gradient_1d, energy_hessian_1d, energy_jacobian_1d, Level1D};
pub(crate) use one_d::Energy1D;
pub use two_d::{
    control_volumes_2d, energy_2d, energy_gradient_2d, internal_energy_2d, internal_energy_gradient_2d,
    internal_energy_hessian_2d, Level2D,
};
pub(crate) use two_d::{interaction_force_2d, internal_gradient_exact_2d, internal_hessian_exact_2d, unknown_index};

use crate::error::{Error, Result};

/// Confining drift potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    #[default]
    None,
    /// `|x|²/2`
    OneWell,
    /// `|x|⁴/4 - |x|²/2`
    DoubleWell,
}

impl Potential {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Potential::None => 0.0,
            Potential::OneWell => 0.5 * x * x,
            Potential::DoubleWell => 0.25 * x.powi(4) - 0.5 * x * x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Potential::None => 0.0,
            Potential::OneWell => x,
            Potential::DoubleWell => x * x * x - x,
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        match self {
            Potential::None => 0.0,
            Potential::OneWell => 1.0,
            Potential::DoubleWell => 3.0 * x * x - 1.0,
        }
    }
}

/// Time level taken by the two arguments of the interaction derivative:
/// the evaluation point (cell midpoint) and the integration variable (cell
/// endpoints).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingVariant {
    /// midpoints new, endpoints old
    #[default]
    ImplicitExplicit,
    /// midpoints old, endpoints new
    ExplicitImplicit,
    /// both new (density weights stay at the old level)
    ImplicitImplicit,
    /// everything old; the energy is replaced by its linearization
    FullyExplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyModel {
    /// `F ≡ 0`
    Zero,
    PorousMedium {
        m: f64,
    },
    #[serde(rename = "linear_fp_log")]
    LinearFpLog {
        #[serde(default)]
        drift: Potential,
    },
    NonlinearFp {
        m: f64,
        #[serde(default)]
        drift: Potential,
    },
    #[serde(rename = "aggregation_1d")]
    Aggregation1D {
        kernel: KernelKind,
        #[serde(default)]
        coupling: CouplingVariant,
    },
    #[serde(rename = "keller_segel_1d")]
    KellerSegel1D,
    #[serde(rename = "porous_medium_2d")]
    PorousMedium2D {
        m: f64,
    },
    #[serde(rename = "aggregation_diffusion_2d")]
    AggregationDiffusion2D {
        m: f64,
        nu: f64,
        kernel: KernelKind,
    },
    #[serde(rename = "keller_segel_2d")]
    KellerSegel2D {
        m: f64,
        nu: f64,
    },
}

/// Internal-energy density `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Internal {
    None,
    /// `ρ ln ρ`
    Entropy,
    /// `ρ^m / (m - 1)`
    Power(f64),
}

impl Internal {
    fn for_exponent(m: f64) -> Self {
        if m == 1.0 {
            Internal::Entropy
        } else {
            Internal::Power(m)
        }
    }

    /// Pressure `ρ U'(ρ) - U(ρ)`.
    pub(crate) fn pressure(self, rho: f64) -> f64 {
        match self {
            Internal::None => 0.0,
            Internal::Entropy => rho,
            Internal::Power(m) => rho.powf(m),
        }
    }

    /// `ρ P'(ρ)`.
    pub(crate) fn pressure_slope(self, rho: f64) -> f64 {
        match self {
            Internal::None => 0.0,
            Internal::Entropy => rho,
            Internal::Power(m) => m * rho.powf(m),
        }
    }

    /// `U(ρ)`.
    pub(crate) fn density(self, rho: f64) -> f64 {
        match self {
            Internal::None => 0.0,
            Internal::Entropy => {
                if rho > 0.0 {
                    rho * rho.ln()
                } else {
                    0.0
                }
            }
            Internal::Power(m) => rho.powf(m) / (m - 1.0),
        }
    }
}

impl EnergyModel {
    pub fn dimension(&self) -> usize {
        match self {
            EnergyModel::PorousMedium2D { .. }
            | EnergyModel::AggregationDiffusion2D { .. }
            | EnergyModel::KellerSegel2D { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let power = |m: f64| {
            if m.is_finite() && m > 1.0 {
                Ok(())
            } else {
                Err(Error::validation("m", "m must exceed 1"))
            }
        };
        let at_least_one = |m: f64| {
            if m.is_finite() && m >= 1.0 {
                Ok(())
            } else {
                Err(Error::validation("m", "m must be at least 1"))
            }
        };
        let nu_ok = |nu: f64| {
            if nu.is_finite() && nu >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation("nu", "nu must be nonnegative"))
            }
        };
        match *self {
            EnergyModel::PorousMedium { m } | EnergyModel::NonlinearFp { m, .. } | EnergyModel::PorousMedium2D { m } => {
                power(m)
            }
            EnergyModel::Aggregation1D { kernel, .. } => match kernel {
                KernelKind::QuadraticMinusLog | KernelKind::LogNewtonian1D => Ok(()),
                _ => Err(Error::validation("kernel", "1D aggregation needs a kernel with a closed-form cell integral")),
            },
            EnergyModel::AggregationDiffusion2D { m, nu, .. } => {
                at_least_one(m)?;
                nu_ok(nu)
            }
            EnergyModel::KellerSegel2D { m, nu } => {
                at_least_one(m)?;
                nu_ok(nu)
            }
            EnergyModel::Zero | EnergyModel::LinearFpLog { .. } | EnergyModel::KellerSegel1D => Ok(()),
        }
    }

    pub(crate) fn internal(&self) -> Internal {
        match *self {
            EnergyModel::Zero | EnergyModel::Aggregation1D { .. } => Internal::None,
            EnergyModel::LinearFpLog { .. } | EnergyModel::KellerSegel1D => Internal::Entropy,
            EnergyModel::PorousMedium { m } | EnergyModel::NonlinearFp { m, .. } | EnergyModel::PorousMedium2D { m } => {
                Internal::Power(m)
            }
            EnergyModel::AggregationDiffusion2D { m, nu, .. } | EnergyModel::KellerSegel2D { m, nu } => {
                if nu == 0.0 {
                    Internal::None
                } else {
                    Internal::for_exponent(m)
                }
            }
        }
    }

    /// Diffusion coefficient multiplying the internal energy.
    pub(crate) fn diffusion(&self) -> f64 {
        match *self {
            EnergyModel::AggregationDiffusion2D { nu, .. } | EnergyModel::KellerSegel2D { nu, .. } => nu,
            _ => 1.0,
        }
    }

    pub fn drift(&self) -> Potential {
        match *self {
            EnergyModel::LinearFpLog { drift } | EnergyModel::NonlinearFp { drift, .. } => drift,
            _ => Potential::None,
        }
    }

    pub fn interaction(&self) -> Option<(KernelKind, CouplingVariant)> {
        match *self {
            EnergyModel::Aggregation1D { kernel, coupling } => Some((kernel, coupling)),
            EnergyModel::KellerSegel1D => Some((KernelKind::LogNewtonian1D, CouplingVariant::ImplicitExplicit)),
            EnergyModel::AggregationDiffusion2D { kernel, .. } => Some((kernel, CouplingVariant::FullyExplicit)),
            EnergyModel::KellerSegel2D { .. } => Some((KernelKind::LogNewtonian2D, CouplingVariant::FullyExplicit)),
            _ => None,
        }
    }

    /// Exponent of the power-law part, if any.
    pub fn exponent(&self) -> Option<f64> {
        match self.internal() {
            Internal::Power(m) => Some(m),
            Internal::Entropy => Some(1.0),
            Internal::None => None,
        }
    }

    /// Whether the step is the minimizer of a fixed objective, so that the
    /// regularized energy provably decreases.
    pub fn is_variational(&self) -> bool {
        !matches!(
            self.interaction(),
            Some((_, CouplingVariant::ExplicitImplicit)) | Some((_, CouplingVariant::ImplicitImplicit))
        )
    }
}
