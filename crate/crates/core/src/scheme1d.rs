//! One time step of the 1D flow-map schemes.

use serde::{Deserialize, Serialize};

use crate::energy::{Energy1D, EnergyModel, Level1D, Potential};
use crate::error::{Error, Result};
use crate::grid::{admissible_positions, density_from_positions, DensityField1D, FlowMap1D, RefGrid1D};
use crate::solver::{damped_newton, LinearSystem, NewtonConfig, NewtonReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `ε Δ_X x^{k+1}`
    #[default]
    LaplacianOfX,
    /// `ε Δ_X (x^{k+1} - x^k)`
    LaplacianOfIncrement,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// End nodes pinned to the label grid.
    #[default]
    Dirichlet,
    /// End nodes follow the porous-medium edge law.
    FreeBoundaryPme,
    /// Edge law with the model's drift added.
    FreeBoundaryFp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOrder {
    #[default]
    First,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig1D {
    pub dt: f64,
    #[serde(default)]
    pub regularization: Regularization,
    pub epsilon: f64,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "NewtonConfig::default_1d")]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub time_order: TimeOrder,
}

impl SchemeConfig1D {
    /// First order, `ε Δ_X x^{k+1}` with `ε = δt`, Dirichlet ends.
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            regularization: Regularization::LaplacianOfX,
            epsilon: dt,
            boundary: Boundary::Dirichlet,
            newton: NewtonConfig::default_1d(),
            time_order: TimeOrder::First,
        }
    }

    /// Second order with the increment regularization, `ε = δt`.
    pub fn crank_nicolson(dt: f64) -> Self {
        Self { regularization: Regularization::LaplacianOfIncrement, time_order: TimeOrder::CrankNicolson, ..Self::new(dt) }
    }

    pub fn unregularized(dt: f64) -> Self {
        Self { regularization: Regularization::None, epsilon: 0.0, ..Self::new(dt) }
    }

    pub fn validate(&self, model: &EnergyModel) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("scheme.dt", "time step must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("scheme.epsilon", "must be nonnegative"));
        }
        self.newton.validate()?;
        match (self.boundary, model) {
            (Boundary::Dirichlet, _) | (Boundary::FreeBoundaryPme, EnergyModel::PorousMedium { .. }) => Ok(()),
            (Boundary::FreeBoundaryFp, EnergyModel::NonlinearFp { .. }) => Ok(()),
            _ => Err(Error::validation(
                "scheme.boundary",
                "free boundaries need the porous-medium (pme) or nonlinear Fokker-Planck (fp) model",
            )),
        }
    }
}

/// Map, density and reference density at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState1D {
    pub map: FlowMap1D,
    pub rho: DensityField1D,
    pub rho0: DensityField1D,
    pub time: f64,
}

impl StepState1D {
    pub fn new(map: FlowMap1D, rho0: DensityField1D, time: f64) -> Result<Self> {
        if rho0.cells.len() != map.grid.n_cells {
            return Err(Error::InvalidInput("reference density does not match the grid".into()));
        }
        let rho = density_from_positions(&map.positions, map.grid.delta_x(), &rho0.cells)?;
        Ok(Self { map, rho, rho0, time })
    }

    /// Identity map at `t = 0`.
    pub fn initial(grid: RefGrid1D, rho0: DensityField1D) -> Result<Self> {
        Self::new(FlowMap1D::identity(grid), rho0, 0.0)
    }

    pub fn level(&self) -> Level1D<'_> {
        Level1D { positions: &self.map.positions, rho: &self.rho.cells }
    }

    fn energy<'a>(&'a self, model: &EnergyModel) -> Result<Energy1D<'a>> {
        Energy1D::new(*model, self.map.grid.delta_x(), &self.rho0.cells, Some(self.level()))
    }

    /// Discrete energy of this state (interaction data taken from the state itself).
    pub fn discrete_energy(&self, model: &EnergyModel) -> Result<f64> {
        self.energy(model)?.energy(&self.map.positions)
    }
}

/// `(ε/2) Σ |x_{j+1} - x_j|² / δX`.
fn dirichlet_energy(x: &[f64], dx: f64) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (2.0 * dx)
}

fn regularization(x: &[f64], dx: f64, cfg: &SchemeConfig1D) -> f64 {
    match cfg.regularization {
        Regularization::LaplacianOfX => cfg.epsilon * dirichlet_energy(x, dx),
        _ => 0.0,
    }
}

/// Energy plus the regularization that the first-order scheme dissipates.
pub fn regularized_energy(state: &StepState1D, model: &EnergyModel, cfg: &SchemeConfig1D) -> Result<f64> {
    Ok(state.discrete_energy(model)? + regularization(&state.map.positions, state.map.grid.delta_x(), cfg))
}

/// [`regularized_energy`] for a state whose discrete energy is already known.
pub(crate) fn regularized_from(state: &StepState1D, energy: f64, cfg: &SchemeConfig1D) -> f64 {
    energy + regularization(&state.map.positions, state.map.grid.delta_x(), cfg)
}

/// Change of the regularized energy across a step, with any interaction
/// data frozen at the old level so both values come from one functional.
/// `old_energy` and `new_energy` are the discrete energies of the two states.
pub(crate) fn regularized_energy_change(
    (old, old_energy): (&StepState1D, f64),
    (new, new_energy): (&StepState1D, f64),
    model: &EnergyModel,
    cfg: &SchemeConfig1D,
) -> Result<f64> {
    let dx = old.map.grid.delta_x();
    let (a, b) = (&old.map.positions, &new.map.positions);
    let frozen = if model.interaction().is_some() { old.energy(model)?.energy(b)? } else { new_energy };
    Ok(frozen + regularization(b, dx, cfg) - old_energy - regularization(a, dx, cfg))
}

/// Objective whose stationarity conditions are the first-order scheme:
/// `(1/2δt) Σ ρ0 |x̄ - x̄^k|² δX + (ε/2) Σ |D(x or x - x^k)|² δX + E_h(x)`.
pub fn objective_1d(state: &StepState1D, x: &[f64], model: &EnergyModel, cfg: &SchemeConfig1D) -> Result<f64> {
    if !model.is_variational() {
        return Err(Error::Unsupported("this coupling variant is not the gradient of an objective".into()));
    }
    let dx = state.map.grid.delta_x();
    let xk = &state.map.positions;
    let mut kinetic = 0.0;
    for (c, r) in state.rho0.cells.iter().enumerate() {
        let d = 0.5 * (x[c] + x[c + 1]) - 0.5 * (xk[c] + xk[c + 1]);
        kinetic += r * d * d;
    }
    let reg = match cfg.regularization {
        Regularization::LaplacianOfX => dirichlet_energy(x, dx),
        Regularization::LaplacianOfIncrement => {
            let u: Vec<f64> = x.iter().zip(xk).map(|(a, b)| a - b).collect();
            dirichlet_energy(&u, dx)
        }
        Regularization::None => 0.0,
    };
    Ok(kinetic * dx / (2.0 * cfg.dt) + cfg.epsilon * reg + state.energy(model)?.energy(x)?)
}

/// Boundary data of the edge law at one end.
struct Edge {
    /// `(∂_X x)^{m-1}` at level k
    slope: f64,
    /// `(m/(m-1)) δ_X ρ0^{m-1}` across the end cell
    push: f64,
}

fn edges(state: &StepState1D, m: f64) -> Result<(Edge, Edge)> {
    let nodes = state
        .rho0
        .nodes
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("free boundaries need nodal reference densities".into()))?;
    let x = &state.map.positions;
    let n = x.len() - 1;
    let dx = state.map.grid.delta_x();
    let (s0, sn) = ((x[1] - x[0]) / dx, (x[n] - x[n - 1]) / dx);
    if !(s0 > 0.0 && sn > 0.0) {
        return Err(Error::DegenerateStencil);
    }
    let p = |r: f64| r.max(0.0).powf(m - 1.0);
    let k = m / (m - 1.0);
    Ok((
        Edge { slope: s0.powf(m - 1.0), push: k * (p(nodes[1]) - p(nodes[0])) / dx },
        Edge { slope: sn.powf(m - 1.0), push: k * (p(nodes[n]) - p(nodes[n - 1])) / dx },
    ))
}

fn drift_of(model: &EnergyModel, boundary: Boundary) -> Potential {
    match boundary {
        Boundary::FreeBoundaryFp => model.drift(),
        _ => Potential::None,
    }
}

/// Residual assembly for one step.
struct Step<'a> {
    state: &'a StepState1D,
    cfg: &'a SchemeConfig1D,
    energy: Energy1D<'a>,
    /// weight of the new-level gradient (1 or 1/2)
    theta: f64,
    /// `(1 - θ) ∇E(x^k)` for Crank–Nicolson
    explicit_part: Option<Vec<f64>>,
    edges: Option<(Edge, Edge)>,
    drift: Potential,
}

impl<'a> Step<'a> {
    fn new(state: &'a StepState1D, model: &EnergyModel, cfg: &'a SchemeConfig1D) -> Result<Self> {
        cfg.validate(model)?;
        model.validate()?;
        let energy = state.energy(model)?;
        let (theta, explicit_part) = match cfg.time_order {
            TimeOrder::First => (1.0, None),
            TimeOrder::CrankNicolson => {
                let g = energy.gradient(&state.map.positions)?;
                (0.5, Some(g.iter().map(|v| 0.5 * v).collect()))
            }
        };
        let edges = match (cfg.boundary, model.exponent()) {
            (Boundary::Dirichlet, _) => None,
            (_, Some(m)) if m > 1.0 => Some(edges(state, m)?),
            _ => return Err(Error::validation("scheme.boundary", "free boundaries need m > 1")),
        };
        Ok(Self { state, cfg, energy, theta, explicit_part, edges, drift: drift_of(model, cfg.boundary) })
    }

    fn n(&self) -> usize {
        self.state.rho0.cells.len()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let dx = self.state.map.grid.delta_x();
        let dt = self.cfg.dt;
        let xk = &self.state.map.positions;
        let r0 = &self.state.rho0.cells;
        let g = self.energy.gradient(x)?;
        let mut r = vec![0.0; n + 1];
        let mid_shift = |c: usize| 0.5 * (x[c] + x[c + 1] - xk[c] - xk[c + 1]);
        let eps = self.cfg.epsilon / dx;
        for j in 1..n {
            let mut v = dx / (2.0 * dt) * (r0[j] * mid_shift(j) + r0[j - 1] * mid_shift(j - 1));
            v += match self.cfg.regularization {
                Regularization::LaplacianOfX => eps * (2.0 * x[j] - x[j - 1] - x[j + 1]),
                Regularization::LaplacianOfIncrement => {
                    eps * (2.0 * (x[j] - xk[j]) - (x[j - 1] - xk[j - 1]) - (x[j + 1] - xk[j + 1]))
                }
                Regularization::None => 0.0,
            };
            v += self.theta * g[j];
            if let Some(e) = &self.explicit_part {
                v += e[j];
            }
            r[j] = v;
        }
        match &self.edges {
            None => {
                let grid = self.state.map.grid;
                r[0] = x[0] - grid.node(0);
                r[n] = x[n] - grid.node(n);
            }
            Some((left, right)) => {
                let d = self.drift;
                r[0] = dx
                    * (left.slope * ((x[0] - xk[0]) / dt + d.derivative(x[0])) + left.push * dx / (x[1] - x[0]));
                r[n] = dx
                    * (right.slope * ((x[n] - xk[n]) / dt + d.derivative(x[n]))
                        + right.push * dx / (x[n] - x[n - 1]));
            }
        }
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<LinearSystem> {
        let n = self.n();
        let dx = self.state.map.grid.delta_x();
        let dt = self.cfg.dt;
        let r0 = &self.state.rho0.cells;
        let mut sys = self.energy.jacobian(x)?;
        let scale = self.theta;
        let eps = match self.cfg.regularization {
            Regularization::None => 0.0,
            _ => self.cfg.epsilon / dx,
        };
        let mass = dx / (4.0 * dt);
        // local (row, col, value) contributions of mass and regularization terms
        let mut local = Vec::with_capacity(3 * (n - 1));
        for j in 1..n {
            local.push((j, j - 1, mass * r0[j - 1] - eps));
            local.push((j, j, mass * (r0[j - 1] + r0[j]) + 2.0 * eps));
            local.push((j, j + 1, mass * r0[j] - eps));
        }
        let boundary_rows: [(usize, Vec<(usize, f64)>); 2] = match &self.edges {
            None => [(0, vec![(0, 1.0)]), (n, vec![(n, 1.0)])],
            Some((left, right)) => {
                let d = self.drift;
                let cl = left.push * dx / (x[1] - x[0]).powi(2);
                let cr = right.push * dx / (x[n] - x[n - 1]).powi(2);
                [
                    (0, vec![(0, dx * (left.slope * (1.0 / dt + d.second_derivative(x[0])) + cl)), (1, -dx * cl)]),
                    (
                        n,
                        vec![(n, dx * (right.slope * (1.0 / dt + d.second_derivative(x[n])) - cr)), (n - 1, dx * cr)],
                    ),
                ]
            }
        };
        match &mut sys {
            LinearSystem::Tridiagonal(t) => {
                for v in t.diag.iter_mut().chain(t.lower.iter_mut()).chain(t.upper.iter_mut()) {
                    *v *= scale;
                }
                t.diag[0] = 0.0;
                t.upper[0] = 0.0;
                t.diag[n] = 0.0;
                t.lower[n - 1] = 0.0;
                for (i, j, v) in local {
                    t.add(i, j, v);
                }
                for (row, entries) in boundary_rows {
                    for (col, v) in entries {
                        t.add(row, col, v);
                    }
                }
            }
            LinearSystem::Dense(m) => {
                *m *= scale;
                m.row_mut(0).fill(0.0);
                m.row_mut(n).fill(0.0);
                for (i, j, v) in local {
                    m[(i, j)] += v;
                }
                for (row, entries) in boundary_rows {
                    for (col, v) in entries {
                        m[(row, col)] += v;
                    }
                }
            }
        }
        Ok(sys)
    }

    fn solve(&self, guess: Option<&[f64]>) -> Result<(StepState1D, NewtonReport)> {
        let x0 = match guess {
            Some(g) if g.len() == self.n() + 1 && admissible_positions(g) => g.to_vec(),
            _ => self.state.map.positions.clone(),
        };
        let (x, report) = damped_newton(
            |x| self.residual(x),
            |x| self.jacobian(x),
            x0,
            &self.cfg.newton,
            admissible_positions,
        )?;
        let grid = self.state.map.grid;
        let next = StepState1D::new(FlowMap1D { positions: x, grid }, self.state.rho0.clone(), self.state.time + self.cfg.dt)?;
        Ok((next, report))
    }
}

/// First-order step: the minimizer of [`objective_1d`] (or the analogous
/// stationarity system for the non-variational couplings).
pub fn step_first_order(
    state: &StepState1D,
    model: &EnergyModel,
    cfg: &SchemeConfig1D,
) -> Result<(StepState1D, NewtonReport)> {
    let cfg = SchemeConfig1D { time_order: TimeOrder::First, ..*cfg };
    Step::new(state, model, &cfg)?.solve(None)
}

/// Crank–Nicolson step: the energy gradient is averaged over both levels.
pub fn step_crank_nicolson(
    state: &StepState1D,
    model: &EnergyModel,
    cfg: &SchemeConfig1D,
) -> Result<(StepState1D, NewtonReport)> {
    let cfg = SchemeConfig1D { time_order: TimeOrder::CrankNicolson, ..*cfg };
    Step::new(state, model, &cfg)?.solve(None)
}

/// Step with the configured time order.
pub fn step_1d(state: &StepState1D, model: &EnergyModel, cfg: &SchemeConfig1D) -> Result<(StepState1D, NewtonReport)> {
    Step::new(state, model, cfg)?.solve(None)
}

/// [`step_1d`] with Newton started from `guess` (ignored unless admissible).
pub fn step_1d_from(
    state: &StepState1D,
    guess: &[f64],
    model: &EnergyModel,
    cfg: &SchemeConfig1D,
) -> Result<(StepState1D, NewtonReport)> {
    Step::new(state, model, cfg)?.solve(Some(guess))
}

/// Residual of the step system at `x` (all nodes), exposed for consistency checks.
pub fn step_residual_1d(state: &StepState1D, x: &[f64], model: &EnergyModel, cfg: &SchemeConfig1D) -> Result<Vec<f64>> {
    Step::new(state, model, cfg)?.residual(x)
}

/// Boundary positions after one step of the porous-medium edge law with the
/// neighbouring nodes held at the current level.
pub fn free_boundary_step_pme(state: &StepState1D, m: f64, dt: f64) -> Result<(f64, f64)> {
    free_boundary_step_fp(state, m, dt, Potential::None)
}

/// As [`free_boundary_step_pme`] with the drift `V'` added to the edge law.
pub fn free_boundary_step_fp(state: &StepState1D, m: f64, dt: f64, drift: Potential) -> Result<(f64, f64)> {
    if !(m > 1.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput("need m > 1 and a positive time step".into()));
    }
    let (left, right) = edges(state, m)?;
    let x = &state.map.positions;
    let n = x.len() - 1;
    let dx = state.map.grid.delta_x();
    // (u - x0)(x1 - u) = -cl and (u - xN)(u - x_{N-1}) = cr without drift
    let cl = left.push * dx * dt / left.slope;
    let cr = -right.push * dx * dt / right.slope;
    let mut ul = 0.5 * ((x[0] + x[1]) - ((x[1] - x[0]).powi(2) + 4.0 * cl).sqrt());
    let mut ur = 0.5 * ((x[n] + x[n - 1]) + ((x[n] - x[n - 1]).powi(2) + 4.0 * cr).sqrt());
    if drift != Potential::None {
        ul = scalar_newton(ul, |u| {
            let f = left.slope * ((u - x[0]) / dt + drift.derivative(u)) + left.push * dx / (x[1] - u);
            let df = left.slope * (1.0 / dt + drift.second_derivative(u)) + left.push * dx / (x[1] - u).powi(2);
            (f, df)
        })?;
        ur = scalar_newton(ur, |u| {
            let f = right.slope * ((u - x[n]) / dt + drift.derivative(u)) + right.push * dx / (u - x[n - 1]);
            let df = right.slope * (1.0 / dt + drift.second_derivative(u)) - right.push * dx / (u - x[n - 1]).powi(2);
            (f, df)
        })?;
    }
    if !(ul < x[1] && ur > x[n - 1]) {
        return Err(Error::NonAdmissibleMap { cell: if ul >= x[1] { 0 } else { n - 1 } });
    }
    Ok((ul, ur))
}

fn scalar_newton(mut u: f64, f: impl Fn(f64) -> (f64, f64)) -> Result<f64> {
    for _ in 0..100 {
        let (v, d) = f(u);
        if v.abs() <= 1e-13 * (1.0 + u.abs()) {
            return Ok(u);
        }
        if !(d != 0.0 && d.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        u -= v / d;
    }
    Err(Error::InvalidInput("edge equation did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::total_mass_1d;

    fn cosine_state(n: usize) -> StepState1D {
        let g = RefGrid1D::new(-1.0, 1.0, n).unwrap();
        StepState1D::initial(g, DensityField1D::sample(&g, |x| (std::f64::consts::PI * x / 2.0).cos())).unwrap()
    }

    #[test]
    fn zero_energy_keeps_identity() {
        let s = cosine_state(20);
        let (next, rep) = step_first_order(&s, &EnergyModel::Zero, &SchemeConfig1D::new(0.01)).unwrap();
        assert_eq!(next.map.positions, s.map.positions);
        assert_eq!(rep.iterations, 0);
        let (next, _) = step_crank_nicolson(&s, &EnergyModel::Zero, &SchemeConfig1D::crank_nicolson(0.01)).unwrap();
        assert_eq!(next.map.positions, s.map.positions);
    }

    #[test]
    fn porous_medium_step_conserves_mass_and_dissipates() {
        let s = cosine_state(40);
        let model = EnergyModel::PorousMedium { m: 2.0 };
        let cfg = SchemeConfig1D::new(0.01);
        let (next, rep) = step_first_order(&s, &model, &cfg).unwrap();
        assert!(rep.converged);
        let m0 = total_mass_1d(&s.map, &s.rho);
        assert!((total_mass_1d(&next.map, &next.rho) - m0).abs() < 1e-13 * m0);
        assert!(regularized_energy(&next, &model, &cfg).unwrap() < regularized_energy(&s, &model, &cfg).unwrap());
    }

    #[test]
    fn residual_is_objective_gradient() {
        let s = cosine_state(12);
        let model = EnergyModel::NonlinearFp { m: 2.0, drift: Potential::OneWell };
        let cfg = SchemeConfig1D::new(0.05);
        let mut x = s.map.positions.clone();
        for (j, v) in x.iter_mut().enumerate().skip(1).take(11) {
            *v += 0.01 * (j as f64).sin();
        }
        let r = step_residual_1d(&s, &x, &model, &cfg).unwrap();
        for j in 1..12 {
            let h = 1e-6;
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (objective_1d(&s, &a, &model, &cfg).unwrap() - objective_1d(&s, &b, &model, &cfg).unwrap()) / (2.0 * h);
            assert!((fd - r[j]).abs() < 1e-7, "{j}: {fd} vs {}", r[j]);
        }
    }

    #[test]
    fn symmetric_free_boundary_speeds() {
        let g = RefGrid1D::new(-12f64.sqrt(), 12f64.sqrt(), 50).unwrap();
        let rho0 = DensityField1D::sample(&g, |x| crate::exact::barenblatt_1d(x, 0.0, 2.0));
        let s = StepState1D::initial(g, rho0).unwrap();
        let (l, r) = free_boundary_step_pme(&s, 2.0, 1e-3).unwrap();
        assert!(l < g.x_left && r > g.x_right);
        assert!(((l - g.x_left) + (r - g.x_right)).abs() < 1e-10);
        let (l2, r2) = free_boundary_step_fp(&s, 2.0, 1e-3, Potential::None).unwrap();
        assert_eq!((l, r), (l2, r2));
    }
}
