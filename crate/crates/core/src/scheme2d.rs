//! One time step of the planar flow-map schemes.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::energy::{
    energy_2d, energy_gradient_2d, interaction_force_2d, internal_energy_2d, internal_gradient_exact_2d, internal_hessian_exact_2d,
    unknown_index, EnergyModel, Level2D,
};
use crate::error::{Error, Result};
use crate::grid::{det_at, density_from_map_2d, min_determinant_2d, DensityField2D, FlowMap2D, RefGrid2D};
use crate::scheme1d::Regularization;
use crate::solver::{damped_newton, solve_screened_with_guess, LinearSystem, NewtonConfig, NewtonReport};

pub const DEFAULT_DET_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode2D {
    /// Linear decoupled solves with the energy gradient at the old level.
    #[default]
    Explicit,
    /// Newton on the stationarity system of the step objective.
    Implicit,
}

fn default_det_floor() -> f64 {
    DEFAULT_DET_FLOOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig2D {
    pub dt: f64,
    #[serde(default)]
    pub regularization: Regularization,
    pub epsilon: f64,
    #[serde(default)]
    pub mode: Mode2D,
    #[serde(default = "NewtonConfig::default_2d")]
    pub newton: NewtonConfig,
    #[serde(default = "default_det_floor")]
    pub det_floor: f64,
}

impl SchemeConfig2D {
    /// Explicit scheme, `ε Δ_X x^{k+1}` with `ε = δt`.
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            regularization: Regularization::LaplacianOfX,
            epsilon: dt,
            mode: Mode2D::Explicit,
            newton: NewtonConfig::default_2d(),
            det_floor: DEFAULT_DET_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("scheme.dt", "time step must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("scheme.epsilon", "must be nonnegative"));
        }
        if !(self.det_floor >= 0.0) {
            return Err(Error::validation("scheme.det_floor", "must be nonnegative"));
        }
        self.newton.validate()
    }

    fn kappa(&self) -> f64 {
        match self.regularization {
            Regularization::None => 0.0,
            _ => self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepState2D {
    pub map: FlowMap2D,
    pub rho: DensityField2D,
    pub rho0: DensityField2D,
    pub time: f64,
}

impl StepState2D {
    pub fn new(map: FlowMap2D, rho0: DensityField2D, time: f64, det_floor: f64) -> Result<Self> {
        if rho0.values.dim() != map.grid.shape() {
            return Err(Error::InvalidInput("reference density does not match the grid".into()));
        }
        let rho = density_from_map_2d(&map, &rho0, det_floor)?;
        Ok(Self { map, rho, rho0, time })
    }

    pub fn initial(grid: RefGrid2D, rho0: DensityField2D) -> Result<Self> {
        Self::new(FlowMap2D::identity(grid), rho0, 0.0, DEFAULT_DET_FLOOR)
    }

    pub fn level(&self) -> Level2D<'_> {
        Level2D { map: &self.map, rho: &self.rho }
    }

    pub fn energy(&self, model: &EnergyModel) -> Result<f64> {
        energy_2d(&self.map, &self.rho0, model)
    }
}

/// Explicit step: per coordinate `(ρ0/δt)(x^{k+1} - x^k) - ε Δ_h(·) + δĒ/δx(x^k) = 0`.
pub fn step_explicit_2d(state: &StepState2D, model: &EnergyModel, cfg: &SchemeConfig2D) -> Result<StepState2D> {
    cfg.validate()?;
    model.validate()?;
    let g = state.map.grid;
    let (gx, gy) = energy_gradient_2d(&state.map, &state.rho0, model, Some(state.level()))?;
    let diag = state.rho0.values.mapv(|r| r / cfg.dt);
    let increment = cfg.regularization == Regularization::LaplacianOfIncrement;
    let rhs = |pos: &Array2<f64>, grad: &Array2<f64>| {
        let mut r = if increment { Array2::zeros(g.shape()) } else { pos.clone() };
        for i in 1..g.my {
            for j in 1..g.mx {
                let own = if increment { 0.0 } else { diag[[i, j]] * pos[[i, j]] };
                r[[i, j]] = own - grad[[i - 1, j - 1]];
            }
        }
        r
    };
    let (rx, ry) = (rhs(&state.map.x, &gx), rhs(&state.map.y, &gy));
    // warm start from the old map (or a zero increment)
    let (gx0, gy0) = if increment { (None, None) } else { (Some(&state.map.x), Some(&state.map.y)) };
    let kappa = cfg.kappa();
    let (x, y) = rayon::join(
        || solve_screened_with_guess(&diag, kappa, &rx, gx0, &g),
        || solve_screened_with_guess(&diag, kappa, &ry, gy0, &g),
    );
    let (mut x, mut y) = (x?, y?);
    if increment {
        x += &state.map.x;
        y += &state.map.y;
    }
    StepState2D::new(FlowMap2D { x, y, grid: g }, state.rho0.clone(), state.time + cfg.dt, cfg.det_floor)
}

/// Pieces of the implicit step that stay fixed during the Newton solve.
struct Implicit<'a> {
    state: &'a StepState2D,
    model: &'a EnergyModel,
    cfg: &'a SchemeConfig2D,
    /// interaction force per unit label area, frozen at the old level
    force: Option<(Array2<f64>, Array2<f64>)>,
}

impl<'a> Implicit<'a> {
    fn new(state: &'a StepState2D, model: &'a EnergyModel, cfg: &'a SchemeConfig2D) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        let force = match model.interaction() {
            Some((kernel, _)) => Some(interaction_force_2d(kernel, &state.rho0.values, state.level())?),
            None => None,
        };
        Ok(Self { state, model, cfg, force })
    }

    fn grid(&self) -> RefGrid2D {
        self.state.map.grid
    }

    fn unpack(&self, z: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let g = self.grid();
        let (mut x, mut y) = (self.state.map.x.clone(), self.state.map.y.clone());
        for i in 1..g.my {
            for j in 1..g.mx {
                x[[i, j]] = z[unknown_index(&g, i, j, 0)];
                y[[i, j]] = z[unknown_index(&g, i, j, 1)];
            }
        }
        (x, y)
    }

    fn pack(&self, x: &Array2<f64>, y: &Array2<f64>) -> Vec<f64> {
        let g = self.grid();
        let mut z = vec![0.0; 2 * (g.mx - 1) * (g.my - 1)];
        for i in 1..g.my {
            for j in 1..g.mx {
                z[unknown_index(&g, i, j, 0)] = x[[i, j]];
                z[unknown_index(&g, i, j, 1)] = y[[i, j]];
            }
        }
        z
    }

    /// Field entering the regularization: the map or its increment.
    fn regularized(&self, pos: &Array2<f64>, old: &Array2<f64>) -> Array2<f64> {
        match self.cfg.regularization {
            Regularization::LaplacianOfIncrement => pos - old,
            _ => pos.clone(),
        }
    }

    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let g = self.grid();
        let area = g.hx() * g.hy();
        let (x, y) = self.unpack(z);
        let (ex, ey) = internal_gradient_exact_2d(&x, &y, &self.state.rho0.values, self.model, &g)?;
        let (ix, iy) = (1.0 / g.hx().powi(2), 1.0 / g.hy().powi(2));
        let kappa = self.cfg.kappa();
        let mut r = vec![0.0; z.len()];
        let coords = [(&x, &self.state.map.x, &ex), (&y, &self.state.map.y, &ey)];
        for (k, (pos, old, grad)) in coords.into_iter().enumerate() {
            let u = self.regularized(pos, old);
            for i in 1..g.my {
                for j in 1..g.mx {
                    let lap = (u[[i, j + 1]] - 2.0 * u[[i, j]] + u[[i, j - 1]]) * ix
                        + (u[[i + 1, j]] - 2.0 * u[[i, j]] + u[[i - 1, j]]) * iy;
                    let mut v = self.state.rho0.values[[i, j]] * (pos[[i, j]] - old[[i, j]]) / self.cfg.dt
                        - kappa * lap
                        + grad[[i, j]] / area;
                    if let Some((fx, fy)) = &self.force {
                        v += if k == 0 { fx[[i, j]] } else { fy[[i, j]] };
                    }
                    r[unknown_index(&g, i, j, k)] = v;
                }
            }
        }
        Ok(r)
    }

    fn jacobian(&self, z: &[f64]) -> Result<LinearSystem> {
        let g = self.grid();
        let area = g.hx() * g.hy();
        let (x, y) = self.unpack(z);
        let mut h: DMatrix<f64> = internal_hessian_exact_2d(&x, &y, &self.state.rho0.values, self.model, &g)? / area;
        let (ix, iy) = (1.0 / g.hx().powi(2), 1.0 / g.hy().powi(2));
        let kappa = self.cfg.kappa();
        for k in 0..2 {
            for i in 1..g.my {
                for j in 1..g.mx {
                    let p = unknown_index(&g, i, j, k);
                    h[(p, p)] += self.state.rho0.values[[i, j]] / self.cfg.dt + 2.0 * kappa * (ix + iy);
                    for (a, b, w) in [(i, j + 1, ix), (i, j - 1, ix), (i + 1, j, iy), (i - 1, j, iy)] {
                        if g.is_interior(a, b) {
                            h[(p, unknown_index(&g, a, b, k))] -= kappa * w;
                        }
                    }
                }
            }
        }
        Ok(LinearSystem::Dense(h))
    }

    fn admissible(&self, z: &[f64]) -> bool {
        if z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let g = self.grid();
        let (x, y) = self.unpack(z);
        (0..=g.my).all(|i| (0..=g.mx).all(|j| det_at(&x, &y, &g, i, j) > self.cfg.det_floor))
    }

    fn objective(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
        let g = self.grid();
        let area = g.hx() * g.hy();
        let (ox, oy) = (&self.state.map.x, &self.state.map.y);
        let mut kinetic = 0.0;
        let mut linear = 0.0;
        for i in 1..g.my {
            for j in 1..g.mx {
                let (dx, dy) = (x[[i, j]] - ox[[i, j]], y[[i, j]] - oy[[i, j]]);
                kinetic += self.state.rho0.values[[i, j]] * (dx * dx + dy * dy);
                if let Some((fx, fy)) = &self.force {
                    linear += fx[[i, j]] * dx + fy[[i, j]] * dy;
                }
            }
        }
        let dirichlet = |u: &Array2<f64>| {
            let mut s = 0.0;
            for i in 0..=g.my {
                for j in 0..=g.mx {
                    if j < g.mx {
                        s += ((u[[i, j + 1]] - u[[i, j]]) / g.hx()).powi(2);
                    }
                    if i < g.my {
                        s += ((u[[i + 1, j]] - u[[i, j]]) / g.hy()).powi(2);
                    }
                }
            }
            s
        };
        let reg = dirichlet(&self.regularized(x, ox)) + dirichlet(&self.regularized(y, oy));
        let map = FlowMap2D { x: x.clone(), y: y.clone(), grid: g };
        let internal = internal_energy_2d(&map, &self.state.rho0, self.model)?;
        Ok(kinetic * area / (2.0 * self.cfg.dt) + 0.5 * self.cfg.kappa() * reg * area + internal + linear * area)
    }
}

/// Step objective `J_k` with any interaction linearized at the old level.
pub fn objective_2d(state: &StepState2D, map: &FlowMap2D, model: &EnergyModel, cfg: &SchemeConfig2D) -> Result<f64> {
    Implicit::new(state, model, cfg)?.objective(&map.x, &map.y)
}

/// Implicit step by damped Newton on the stationarity system of [`objective_2d`].
pub fn step_implicit_2d(
    state: &StepState2D,
    model: &EnergyModel,
    cfg: &SchemeConfig2D,
) -> Result<(StepState2D, NewtonReport)> {
    let imp = Implicit::new(state, model, cfg)?;
    let z0 = imp.pack(&state.map.x, &state.map.y);
    let (z, report) =
        damped_newton(|z| imp.residual(z), |z| imp.jacobian(z), z0, &cfg.newton, |z| imp.admissible(z))?;
    let (x, y) = imp.unpack(&z);
    let before = imp.objective(&state.map.x, &state.map.y)?;
    let after = imp.objective(&x, &y)?;
    if after > before + 10.0 * cfg.newton.residual_tol {
        log::warn!("implicit step raised the step objective: {before:.12e} -> {after:.12e}");
    } else {
        log::debug!("implicit step objective {before:.12e} -> {after:.12e}");
    }
    let grid = state.map.grid;
    let next = StepState2D::new(FlowMap2D { x, y, grid }, state.rho0.clone(), state.time + cfg.dt, cfg.det_floor)?;
    Ok((next, report))
}

/// Step with the configured mode; the explicit path reports zero Newton iterations.
pub fn step_2d(state: &StepState2D, model: &EnergyModel, cfg: &SchemeConfig2D) -> Result<(StepState2D, NewtonReport)> {
    match cfg.mode {
        Mode2D::Explicit => {
            let next = step_explicit_2d(state, model, cfg)?;
            Ok((next, NewtonReport { converged: true, ..Default::default() }))
        }
        Mode2D::Implicit => step_implicit_2d(state, model, cfg),
    }
}

/// Analysis constants of the explicit-scheme dissipation conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Lower bound on the determinant; the current minimum when absent.
    pub delta0: Option<f64>,
}

impl Default for StabilityConstants {
    fn default() -> Self {
        Self { c0: 1.0, c1: 1.0, c2: 1.0, delta0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBounds {
    /// Largest step with dissipation guaranteed at `ε = 0`.
    pub tau_min: f64,
    /// Smallest increment regularization with dissipation guaranteed.
    pub eps_min: f64,
}

/// Largest spectral norm of the forward-difference deformation gradient.
pub fn max_gradient_norm(map: &FlowMap2D) -> f64 {
    let g = map.grid;
    let mut best = 0.0_f64;
    for i in 0..g.my {
        for j in 0..g.mx {
            let a = (map.x[[i, j + 1]] - map.x[[i, j]]) / g.hx();
            let b = (map.x[[i + 1, j]] - map.x[[i, j]]) / g.hy();
            let c = (map.y[[i, j + 1]] - map.y[[i, j]]) / g.hx();
            let d = (map.y[[i + 1, j]] - map.y[[i, j]]) / g.hy();
            let fro2 = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            let s2 = 0.5 * (fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt());
            best = best.max(s2.sqrt());
        }
    }
    best
}

/// `τ_min = min ρ0 δ0^{m+1} h² / (2 C1 C0 ‖∇x‖²)` and `ε_min = C0 ‖∇x‖² / δ0^{m+1}`.
pub fn stability_bounds(state: &StepState2D, m: f64, constants: &StabilityConstants) -> Result<StabilityBounds> {
    let g = state.map.grid;
    let delta0 = match constants.delta0 {
        Some(d) => d,
        None => min_determinant_2d(&state.map).0,
    };
    if !(delta0 > 0.0) {
        let (_, i, j) = min_determinant_2d(&state.map);
        return Err(Error::MapDistorted { i, j, det: delta0 });
    }
    let mut min_rho0 = f64::INFINITY;
    for i in 1..g.my {
        for j in 1..g.mx {
            min_rho0 = min_rho0.min(state.rho0.values[[i, j]]);
        }
    }
    if !(min_rho0 > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let grad2 = max_gradient_norm(&state.map).powi(2);
    let h = g.hx().min(g.hy());
    let d = delta0.powf(m + 1.0);
    Ok(StabilityBounds {
        tau_min: min_rho0 * d * h * h / (2.0 * constants.c1 * constants.c0 * grad2),
        eps_min: constants.c0 * grad2 / d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::barenblatt_2d;
    use crate::grid::total_mass_2d;

    fn barenblatt_state(n: usize) -> StepState2D {
        let g = RefGrid2D::new(2.0, 2.0, n, n).unwrap();
        StepState2D::initial(g, DensityField2D::sample(&g, |x, y| barenblatt_2d(x, y, 0.0, 2.0, 0.1))).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_identity() {
        let g = RefGrid2D::new(1.0, 1.0, 10, 10).unwrap();
        let s = StepState2D::initial(g, DensityField2D::sample(&g, |_, _| 1.0)).unwrap();
        let model = EnergyModel::PorousMedium2D { m: 2.0 };
        let next = step_explicit_2d(&s, &model, &SchemeConfig2D::new(0.01)).unwrap();
        for (a, b) in next.map.x.iter().zip(s.map.x.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
        let cfg = SchemeConfig2D { mode: Mode2D::Implicit, ..SchemeConfig2D::new(0.01) };
        let (next, rep) = step_implicit_2d(&s, &model, &cfg).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(next.map, s.map);
    }

    #[test]
    fn explicit_step_conserves_mass() {
        let s = barenblatt_state(16);
        let model = EnergyModel::PorousMedium2D { m: 2.0 };
        let h = s.map.grid.hx();
        let cfg = SchemeConfig2D { epsilon: h * h, ..SchemeConfig2D::new(0.01) };
        let next = step_explicit_2d(&s, &model, &cfg).unwrap();
        let (m0, m1) = (total_mass_2d(&s.map, &s.rho), total_mass_2d(&next.map, &next.rho));
        assert!((m0 - m1).abs() < 1e-12 * m0);
    }

    #[test]
    fn implicit_step_lowers_objective() {
        let s = barenblatt_state(12);
        let model = EnergyModel::PorousMedium2D { m: 2.0 };
        let h = s.map.grid.hx();
        let cfg = SchemeConfig2D { epsilon: h * h, mode: Mode2D::Implicit, ..SchemeConfig2D::new(0.01) };
        let (next, rep) = step_implicit_2d(&s, &model, &cfg).unwrap();
        assert!(rep.converged);
        let before = objective_2d(&s, &s.map, &model, &cfg).unwrap();
        let after = objective_2d(&s, &next.map, &model, &cfg).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn stability_bounds_of_identity() {
        let g = RefGrid2D::new(1.0, 1.0, 20, 20).unwrap();
        let s = StepState2D::initial(g, DensityField2D::sample(&g, |_, _| 1.0)).unwrap();
        let c = StabilityConstants { delta0: Some(1.0), ..Default::default() };
        let b = stability_bounds(&s, 2.0, &c).unwrap();
        assert!((b.tau_min - 0.005).abs() < 1e-15);
        assert!((b.eps_min - 1.0).abs() < 1e-14);
    }
}
