//! Closed-form reference solutions, steady states and initial data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::Potential;
use crate::error::{Error, Result};

/// Self-similar porous-medium solution on the line.
pub fn barenblatt_1d(x: f64, t: f64, m: f64) -> f64 {
    let k = 1.0 / (m + 1.0);
    let s = t + 1.0;
    if x.abs() >= barenblatt_interface_1d(t, m) {
        return 0.0;
    }
    let bracket = 1.0 - k * (m - 1.0) / (2.0 * m) * x * x / s.powf(2.0 * k);
    s.powf(-k) * bracket.max(0.0).powf(1.0 / (m - 1.0))
}

/// Right edge of the support of [`barenblatt_1d`].
pub fn barenblatt_interface_1d(t: f64, m: f64) -> f64 {
    let k = 1.0 / (m + 1.0);
    (2.0 * m / (k * (m - 1.0))).sqrt() * (t + 1.0).powf(k)
}

/// Self-similar porous-medium solution in the plane, with the amplitude
/// decay `(t+1)^{-1/m}` that keeps its mass constant.
pub fn barenblatt_2d(x: f64, y: f64, t: f64, m: f64, c_b2: f64) -> f64 {
    let kappa = 1.0 / m;
    let s = t + 1.0;
    if x.hypot(y) >= support_radius_2d(t, m, c_b2) {
        return 0.0;
    }
    let bracket = c_b2 - kappa * (m - 1.0) / (4.0 * m) * (x * x + y * y) / s.powf(kappa);
    s.powf(-kappa) * bracket.max(0.0).powf(1.0 / (m - 1.0))
}

/// Radius of the support of [`barenblatt_2d`].
pub fn support_radius_2d(t: f64, m: f64, c_b2: f64) -> f64 {
    let kappa = 1.0 / m;
    (4.0 * m * c_b2 / (kappa * (m - 1.0))).sqrt() * (t + 1.0).powf(kappa / 2.0)
}

/// Waiting time of the `sin² / sin⁴` initial data.
pub fn waiting_time_exact(m: f64, theta: f64) -> f64 {
    1.0 / (2.0 * (m + 1.0) * (1.0 - theta))
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    // split up front so that narrow features are not missed by the first estimate
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, if i + 1 == pieces { b } else { a + (i + 1) as f64 * h });
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            rec(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), tol / pieces as f64, 50)
        })
        .sum()
}

/// Equilibrium of the (nonlinear) Fokker–Planck flow with a confining drift:
/// `(C - (m-1)/m V)_+^{1/(m-1)}` for `m > 1`, `Z e^{-V}` for `m = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpSteadyState {
    pub potential: Potential,
    pub m: f64,
    pub mass: f64,
    /// `C` for `m > 1`, the normalization `Z` for `m = 1`.
    pub constant: f64,
}

impl FpSteadyState {
    pub fn new(potential: Potential, m: f64, mass: f64) -> Result<Self> {
        if potential == Potential::None {
            return Err(Error::InvalidInput("the steady state needs a confining potential".into()));
        }
        if !(m >= 1.0) || !(mass > 0.0) {
            return Err(Error::InvalidInput("need m >= 1 and positive mass".into()));
        }
        let mut s = Self { potential, m, mass, constant: 1.0 };
        if m == 1.0 {
            let reach = match potential {
                Potential::OneWell => 12.0,
                _ => 5.0,
            };
            let z = adaptive_simpson(&|x| (-potential.value(x)).exp(), -reach, reach, 1e-13);
            s.constant = mass / z;
            return Ok(s);
        }
        let mass_of = |c: f64| {
            let probe = Self { constant: c, ..s };
            probe.mass_with_constant()
        };
        let mut hi = 1.0;
        while mass_of(hi) < mass {
            hi *= 2.0;
        }
        // C may be negative: the wells of a double-well drift hold mass even then
        let mut lo = match potential {
            Potential::DoubleWell => -0.25 * (m - 1.0) / m,
            _ => 0.0,
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_of(mid) < mass {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(lo.abs()) {
                break;
            }
        }
        s.constant = 0.5 * (lo + hi);
        Ok(s)
    }

    /// Half-width of the support (`∞` for the linear case).
    pub fn support_radius(&self) -> f64 {
        self.support_interval().1
    }

    /// `[r_in, r_out]` such that the support is `r_in ≤ |x| ≤ r_out`.
    pub fn support_interval(&self) -> (f64, f64) {
        if self.m == 1.0 {
            return (0.0, f64::INFINITY);
        }
        let a = self.m * self.constant / (self.m - 1.0);
        match self.potential {
            Potential::OneWell => (0.0, (2.0 * a).max(0.0).sqrt()),
            _ => {
                let root = (1.0 + 4.0 * a).max(0.0).sqrt();
                ((1.0 - root).max(0.0).sqrt(), (1.0 + root).sqrt())
            }
        }
    }

    fn mass_with_constant(&self) -> f64 {
        let (a, b) = self.support_interval();
        if b <= a {
            return 0.0;
        }
        let h = (0.5 * (b - a)).sqrt();
        // even profile; x = edge ± s² removes the root singularities at the edges
        let inner = adaptive_simpson(&|s| 2.0 * s * self.density(a + s * s), 0.0, h, 1e-14);
        let outer = adaptive_simpson(&|s| 2.0 * s * self.density(b - s * s), 0.0, h, 1e-14);
        2.0 * (inner + outer)
    }

    pub fn density(&self, x: f64) -> f64 {
        let v = self.potential.value(x);
        if self.m == 1.0 {
            return self.constant * (-v).exp();
        }
        (self.constant - (self.m - 1.0) / self.m * v).max(0.0).powf(1.0 / (self.m - 1.0))
    }
}

pub fn fp_steady_state(x: f64, potential: Potential, m: f64, mass: f64) -> Result<f64> {
    Ok(FpSteadyState::new(potential, m, mass)?.density(x))
}

/// Equilibrium of the aggregation flow with kernel `|x|²/2 - ln|x|`:
/// `(mass/π) √(2 - x²)_+`, whose integral is `mass`.
pub fn aggregation_steady_state(x: f64, mass: f64) -> f64 {
    mass / PI * (2.0 - x * x).max(0.0).sqrt()
}

/// Named initial densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `cos(πx/2)`
    Cosine,
    /// Porous-medium self-similar profile at time `t0`.
    Barenblatt {
        m: f64,
        #[serde(default)]
        t0: f64,
    },
    /// `((m-1)/m ((1-θ) sin²x + θ sin⁴x))^{1/(m-1)}`
    WaitingTime { m: f64, theta: f64 },
    /// `max(1 - |x|, 0)`
    Tent,
    /// `1 - x²`
    Parabola,
    /// `(x² + 1e-6 e^{-x²/2σ²})(1 - x²)`
    DoubleWellBump {
        #[serde(default = "one")]
        sigma: f64,
    },
    /// `C/√(2π) e^{-x²/σ}`
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// `C/√(2π) e^{-x²/2} + 1e-8`
    ChemotaxisSingle { amplitude: f64 },
    /// `C/√π (e^{-4(x+2)²} + e^{-4(x-2)²}) + 1e-8`
    ChemotaxisDouble { amplitude: f64 },
    Uniform {
        #[serde(default = "one")]
        value: f64,
    },
    #[serde(rename = "barenblatt_2d")]
    Barenblatt2D {
        m: f64,
        c_b2: f64,
        #[serde(default)]
        t0: f64,
    },
    /// `C e^{-x²-y²}`
    #[serde(rename = "gaussian_2d")]
    Gaussian2D {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `½ χ_{|x| ≤ 2.5, |y| ≤ 2.5}`
    HalfSquare,
    /// Three-quarter ring with rounded ends.
    PartialDonut,
    /// `e^{-20((x-0.5)² + (y-0.5)²)}`
    OffsetGaussian,
}

fn one() -> f64 {
    1.0
}

fn donut(x: f64, y: f64) -> f64 {
    let cap = |d2: f64| 25.0 * (0.0625 - d2).max(0.0).powf(1.5);
    let r = x.hypot(y);
    if (0.5..=1.0).contains(&r) && (x < 0.0 || y < 0.0) {
        cap((r - 0.75).powi(2))
    } else if x >= 0.0 && x * x + (y - 0.75).powi(2) <= 0.0625 {
        cap(x * x + (y - 0.75).powi(2))
    } else if y >= 0.0 && (x - 0.75).powi(2) + y * y <= 0.0625 {
        cap((x - 0.75).powi(2) + y * y)
    } else {
        0.0
    }
}

impl InitialCondition {
    pub fn dimension(&self) -> usize {
        match self {
            InitialCondition::Barenblatt2D { .. }
            | InitialCondition::Gaussian2D { .. }
            | InitialCondition::HalfSquare
            | InitialCondition::PartialDonut
            | InitialCondition::OffsetGaussian => 2,
            InitialCondition::Uniform { .. } => 0,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m_ok = |m: f64| {
            if m.is_finite() && m > 1.0 {
                Ok(())
            } else {
                Err(Error::validation("initial.m", "m must exceed 1"))
            }
        };
        match *self {
            InitialCondition::Barenblatt { m, t0 } => {
                m_ok(m)?;
                if !(t0 >= 0.0) {
                    return Err(Error::validation("initial.t0", "must be nonnegative"));
                }
                Ok(())
            }
            InitialCondition::WaitingTime { m, theta } => {
                m_ok(m)?;
                if !(0.0..=0.25).contains(&theta) {
                    return Err(Error::validation("initial.theta", "theta must lie in [0, 0.25]"));
                }
                Ok(())
            }
            InitialCondition::Barenblatt2D { m, c_b2, .. } => {
                m_ok(m)?;
                if !(c_b2 > 0.0) {
                    return Err(Error::validation("initial.c_b2", "must be positive"));
                }
                Ok(())
            }
            InitialCondition::Gaussian { sigma, .. } | InitialCondition::DoubleWellBump { sigma } if !(sigma > 0.0) => {
                Err(Error::validation("initial.sigma", "must be positive"))
            }
            InitialCondition::Uniform { value } if !(value >= 0.0) => {
                Err(Error::validation("initial.value", "must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval_1d(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            InitialCondition::Cosine => (PI * x / 2.0).cos().max(0.0),
            InitialCondition::Barenblatt { m, t0 } => barenblatt_1d(x, t0, m),
            InitialCondition::WaitingTime { m, theta } => {
                let s2 = x.sin().powi(2);
                ((m - 1.0) / m * ((1.0 - theta) * s2 + theta * s2 * s2)).powf(1.0 / (m - 1.0))
            }
            InitialCondition::Tent => (1.0 - x.abs()).max(0.0),
            InitialCondition::Parabola => (1.0 - x * x).max(0.0),
            InitialCondition::DoubleWellBump { sigma } => {
                ((x * x + 1e-6 * (-x * x / (2.0 * sigma * sigma)).exp()) * (1.0 - x * x)).max(0.0)
            }
            InitialCondition::Gaussian { amplitude, sigma } => amplitude / (2.0 * PI).sqrt() * (-x * x / sigma).exp(),
            InitialCondition::ChemotaxisSingle { amplitude } => amplitude / (2.0 * PI).sqrt() * (-x * x / 2.0).exp() + 1e-8,
            InitialCondition::ChemotaxisDouble { amplitude } => {
                amplitude / PI.sqrt() * ((-4.0 * (x + 2.0).powi(2)).exp() + (-4.0 * (x - 2.0).powi(2)).exp()) + 1e-8
            }
            InitialCondition::Uniform { value } => value,
            _ => return Err(Error::Unsupported(format!("{self:?} is a planar initial condition"))),
        })
    }

    pub fn eval_2d(&self, x: f64, y: f64) -> Result<f64> {
        Ok(match *self {
            InitialCondition::Barenblatt2D { m, c_b2, t0 } => barenblatt_2d(x, y, t0, m, c_b2),
            InitialCondition::Gaussian2D { amplitude } => amplitude * (-x * x - y * y).exp(),
            InitialCondition::HalfSquare => {
                if x.abs() <= 2.5 && y.abs() <= 2.5 {
                    0.5
                } else {
                    0.0
                }
            }
            InitialCondition::PartialDonut => donut(x, y),
            InitialCondition::OffsetGaussian => (-20.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp(),
            InitialCondition::Uniform { value } => value,
            _ => return Err(Error::Unsupported(format!("{self:?} is a 1D initial condition"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barenblatt_values() {
        assert_eq!(barenblatt_1d(0.0, 0.0, 2.0), 1.0);
        assert!((barenblatt_interface_1d(0.0, 2.0) - 12f64.sqrt()).abs() < 1e-14);
        assert!((barenblatt_interface_1d(0.0, 3.0) - 12f64.sqrt()).abs() < 1e-14);
        assert_eq!(barenblatt_1d(12f64.sqrt(), 0.0, 2.0), 0.0);
        assert!((barenblatt_2d(0.0, 0.0, 0.0, 2.0, 0.1) - 0.1).abs() < 1e-15);
        assert!((support_radius_2d(0.0, 2.0, 0.1) - 1.6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn barenblatt_mass_is_constant() {
        for m in [2.0, 2.5, 3.0] {
            let mass = |t: f64| {
                let r = barenblatt_interface_1d(t, m);
                adaptive_simpson(&|x| barenblatt_1d(x, t, m), -r, r, 1e-12)
            };
            assert!((mass(0.0) - mass(1.0)).abs() < 1e-8, "m = {m}");
        }
    }

    #[test]
    fn waiting_times() {
        assert!((waiting_time_exact(2.0, 0.25) - 2.0 / 9.0).abs() < 1e-15);
        assert!((waiting_time_exact(3.0, 0.25) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn one_well_steady_state_matches_closed_form() {
        let s = FpSteadyState::new(Potential::OneWell, 2.0, 1.0).unwrap();
        let c = (3.0f64 / 8.0).powf(2.0 / 3.0);
        assert!((s.density(0.0) - c).abs() < 1e-9);
        assert!((s.support_radius() - 2.0 * (3.0f64 / 8.0).powf(1.0 / 3.0)).abs() < 1e-8);
        assert!((s.mass_with_constant() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn double_well_and_gibbs_conserve_mass() {
        for (pot, m) in [(Potential::DoubleWell, 2.0), (Potential::OneWell, 1.0), (Potential::DoubleWell, 3.0)] {
            let s = FpSteadyState::new(pot, m, 0.7).unwrap();
            let r = if m == 1.0 { 12.0 } else { s.support_radius() };
            let n = 2_000_000;
            let h = 2.0 * r / n as f64;
            let mass: f64 = (0..n).map(|i| s.density(-r + (i as f64 + 0.5) * h) * h).sum();
            assert!((mass - 0.7).abs() < 1e-8, "{pot:?} {m} {mass} {}", s.constant);
        }
    }

    #[test]
    fn aggregation_equilibrium() {
        let gaussian_mass = 1.0 / 2f64.sqrt();
        assert!((aggregation_steady_state(0.0, gaussian_mass) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(aggregation_steady_state(2f64.sqrt(), 1.0), 0.0);
        let mass = adaptive_simpson(&|x| aggregation_steady_state(x, 0.3), -2f64.sqrt(), 2f64.sqrt(), 1e-12);
        assert!((mass - 0.3).abs() < 1e-7);
    }

    #[test]
    fn initial_condition_values() {
        assert_eq!(InitialCondition::Cosine.eval_1d(0.0).unwrap(), 1.0);
        let wt = InitialCondition::WaitingTime { m: 2.0, theta: 0.25 };
        assert!((wt.eval_1d(-PI / 2.0).unwrap() - 0.5).abs() < 1e-15);
        let ks = InitialCondition::ChemotaxisSingle { amplitude: 1.0 };
        assert!((ks.eval_1d(15.0).unwrap() - 1e-8).abs() < 1e-20);
        assert!(InitialCondition::PartialDonut.eval_2d(0.0, 0.0).unwrap() == 0.0);
        assert!(InitialCondition::PartialDonut.eval_2d(-0.75, 0.0).unwrap() > 0.0);
        assert!(InitialCondition::PartialDonut.eval_2d(0.0, 0.75).unwrap() > 0.0);
        assert!(InitialCondition::PartialDonut.eval_2d(0.5, 0.5).unwrap() == 0.0);
    }
}
