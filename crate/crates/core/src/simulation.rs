//! Time loops driving the step functions and collecting diagnostics.

use std::cell::RefCell;

use crate::config::RunSpec;
use crate::diagnostics::{default_velocity_tol, detect_waiting_time, trace_row_1d, trace_row_2d, DiagnosticsTrace};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::exact::{waiting_time_exact, InitialCondition};
use crate::grid::{DensityField1D, DensityField2D, RefGrid1D};
use crate::scheme1d::{regularized_energy_change, regularized_from, step_1d, step_1d_from, Boundary, Regularization, StepState1D};
use crate::scheme2d::{stability_bounds, step_2d, SchemeConfig2D, StepState2D};

#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Line(StepState1D),
    Plane(StepState2D),
}

impl FinalState {
    pub fn time(&self) -> f64 {
        match self {
            FinalState::Line(s) => s.time,
            FinalState::Plane(s) => s.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Requested time.
    pub target: f64,
    pub state: FinalState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Stopped early because the maximum density passed the configured cap.
    DensityCap,
    Failed(String),
}

/// Everything a run produced, including a partial trace on failure.
#[derive(Debug)]
pub struct RunOutput {
    pub trace: DiagnosticsTrace,
    pub snapshots: Vec<Snapshot>,
    /// Last accepted state.
    pub final_state: FinalState,
    pub status: RunStatus,
    pub error: Option<Error>,
}

impl RunOutput {
    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Number of steps to reach `end_time`; the last step is not shortened.
pub fn step_count(end_time: f64, dt: f64) -> usize {
    ((end_time / dt) - 1e-9).ceil().max(0.0) as usize
}

pub fn initial_state_1d(spec: &RunSpec) -> Result<StepState1D> {
    let grid = spec.grid.line()?;
    let ic = spec.initial;
    let bad = RefCell::new(None);
    let rho0 = DensityField1D::sample(&grid, |x| {
        ic.eval_1d(x).unwrap_or_else(|e| {
            *bad.borrow_mut() = Some(e);
            0.0
        })
    });
    if let Some(e) = bad.into_inner() {
        return Err(e);
    }
    StepState1D::initial(grid, rho0)
}

pub fn initial_state_2d(spec: &RunSpec) -> Result<StepState2D> {
    let grid = spec.grid.plane()?;
    let ic = spec.initial;
    let bad = RefCell::new(None);
    let rho0 = DensityField2D::sample(&grid, |x, y| {
        ic.eval_2d(x, y).unwrap_or_else(|e| {
            *bad.borrow_mut() = Some(e);
            0.0
        })
    });
    if let Some(e) = bad.into_inner() {
        return Err(e);
    }
    StepState2D::initial(grid, rho0)
}

/// Snapshot bookkeeping: targets are taken at the first step reaching them.
struct Snapshots {
    targets: Vec<f64>,
    next: usize,
    taken: Vec<Snapshot>,
}

impl Snapshots {
    fn new(mut targets: Vec<f64>) -> Self {
        targets.sort_by(f64::total_cmp);
        Self { targets, next: 0, taken: Vec::new() }
    }

    fn offer(&mut self, time: f64, dt: f64, state: impl Fn() -> FinalState) {
        while self.next < self.targets.len() && time >= self.targets[self.next] - 0.5 * dt {
            self.taken.push(Snapshot { target: self.targets[self.next], state: state() });
            self.next += 1;
        }
    }
}

fn run_1d(spec: &RunSpec) -> RunOutput {
    let mut trace = DiagnosticsTrace::default();
    let mut snaps = Snapshots::new(spec.snapshot_times.clone());
    let fail = |e: Error, trace, snaps: Snapshots, state| RunOutput {
        trace,
        snapshots: snaps.taken,
        final_state: state,
        status: RunStatus::Failed(e.to_string()),
        error: Some(e),
    };
    let (model, cfg) = (spec.model, match spec.scheme_1d() {
        Ok(c) => c,
        Err(e) => return fail(e, trace, snaps, FinalState::Line(empty_1d())),
    });
    let mut state = match initial_state_1d(spec) {
        Ok(s) => s,
        Err(e) => return fail(e, trace, snaps, FinalState::Line(empty_1d())),
    };
    match state.discrete_energy(&model) {
        Ok(e) => trace.push(trace_row_1d(0, &state, e, regularized_from(&state, e, &cfg), 0.0, 0)),
        Err(e) => return fail(e, trace, snaps, FinalState::Line(state)),
    }
    snaps.offer(state.time, cfg.dt, || FinalState::Line(state.clone()));
    let steps = step_count(spec.end_time, cfg.dt);
    let mut previous: Option<Vec<f64>> = None;
    for k in 1..=steps {
        // start Newton from the linear extrapolation of the last two levels
        let stepped = match &previous {
            Some(p) => {
                let guess: Vec<f64> = state.map.positions.iter().zip(p).map(|(a, b)| 2.0 * a - b).collect();
                step_1d_from(&state, &guess, &model, &cfg)
            }
            None => step_1d(&state, &model, &cfg),
        };
        let next = stepped.and_then(|(next, rep)| {
            let old_energy = trace.rows.last().map_or(0.0, |r| r.energy);
            let e = next.discrete_energy(&model)?;
            let change = regularized_energy_change((&state, old_energy), (&next, e), &model, &cfg)?;
            let row = trace_row_1d(k, &next, e, regularized_from(&next, e, &cfg), change, rep.iterations);
            Ok((next, row))
        });
        match next {
            Ok((next, row)) => {
                log::debug!("step {k}: t = {:.6}, newton {}", next.time, row.newton_iterations);
                trace.push(row);
                previous = Some(std::mem::replace(&mut state, next).map.positions);
            }
            Err(e) => {
                log::error!("step {k} failed: {e}");
                return fail(e, trace, snaps, FinalState::Line(state));
            }
        }
        snaps.offer(state.time, cfg.dt, || FinalState::Line(state.clone()));
        if spec.density_cap.is_some_and(|cap| state.rho.max() > cap) {
            log::info!("density cap reached at t = {}", state.time);
            return RunOutput {
                trace,
                snapshots: snaps.taken,
                final_state: FinalState::Line(state),
                status: RunStatus::DensityCap,
                error: None,
            };
        }
    }
    RunOutput { trace, snapshots: snaps.taken, final_state: FinalState::Line(state), status: RunStatus::Completed, error: None }
}

fn empty_1d() -> StepState1D {
    let g = RefGrid1D { x_left: 0.0, x_right: 1.0, n_cells: 1 };
    StepState1D::initial(g, DensityField1D::uniform(&g, 0.0)).expect("trivial state")
}

/// Regularized planar energy: `Ē + (ε/2) Σ |D x|² h_x h_y` for the `ε Δ x` form.
pub fn regularized_energy_2d(state: &StepState2D, model: &EnergyModel, cfg: &SchemeConfig2D) -> Result<f64> {
    let e = state.energy(model)?;
    if cfg.regularization != Regularization::LaplacianOfX {
        return Ok(e);
    }
    let g = state.map.grid;
    let mut s = 0.0;
    for u in [&state.map.x, &state.map.y] {
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
    }
    Ok(e + 0.5 * cfg.epsilon * s * g.hx() * g.hy())
}

fn run_2d(spec: &RunSpec) -> RunOutput {
    let mut trace = DiagnosticsTrace::default();
    let mut snaps = Snapshots::new(spec.snapshot_times.clone());
    let model = spec.model;
    let setup = spec.scheme_2d().and_then(|cfg| Ok((cfg, initial_state_2d(spec)?)));
    let (cfg, mut state) = match setup {
        Ok(v) => v,
        Err(e) => {
            return RunOutput {
                trace,
                snapshots: Vec::new(),
                final_state: FinalState::Line(empty_1d()),
                status: RunStatus::Failed(e.to_string()),
                error: Some(e),
            }
        }
    };
    let fail = |e: Error, trace, snaps: Snapshots, state| RunOutput {
        trace,
        snapshots: snaps.taken,
        final_state: FinalState::Plane(state),
        status: RunStatus::Failed(e.to_string()),
        error: Some(e),
    };
    let mut prev_reg = match regularized_energy_2d(&state, &model, &cfg) {
        Ok(r) => r,
        Err(e) => return fail(e, trace, snaps, state),
    };
    trace.push(trace_row_2d(0, &state, state.energy(&model).unwrap_or(f64::NAN), prev_reg, 0.0, 0));
    snaps.offer(state.time, cfg.dt, || FinalState::Plane(state.clone()));
    if let (Some(constants), Some(m)) = (spec.stability, model.exponent()) {
        match stability_bounds(&state, m, &constants) {
            Ok(b) => log::info!("stability bounds: tau_min = {:.3e}, eps_min = {:.3e}", b.tau_min, b.eps_min),
            Err(e) => log::info!("stability bounds unavailable: {e}"),
        }
    }
    let steps = step_count(spec.end_time, cfg.dt);
    for k in 1..=steps {
        let next = step_2d(&state, &model, &cfg).and_then(|(next, rep)| {
            let e = next.energy(&model)?;
            let reg = regularized_energy_2d(&next, &model, &cfg)?;
            Ok((next, e, reg, rep.iterations))
        });
        match next {
            Ok((next, e, reg, it)) => {
                trace.push(trace_row_2d(k, &next, e, reg, reg - prev_reg, it));
                prev_reg = reg;
                state = next;
            }
            Err(e) => {
                log::error!("step {k} failed: {e}");
                return fail(e, trace, snaps, state);
            }
        }
        snaps.offer(state.time, cfg.dt, || FinalState::Plane(state.clone()));
        if spec.density_cap.is_some_and(|cap| state.rho.max() > cap) {
            return RunOutput {
                trace,
                snapshots: snaps.taken,
                final_state: FinalState::Plane(state),
                status: RunStatus::DensityCap,
                error: None,
            };
        }
    }
    RunOutput { trace, snapshots: snaps.taken, final_state: FinalState::Plane(state), status: RunStatus::Completed, error: None }
}

/// Runs a validated spec to its end time (or first failure).
pub fn run(spec: &RunSpec) -> RunOutput {
    if let Err(e) = spec.validate() {
        return RunOutput {
            trace: DiagnosticsTrace::default(),
            snapshots: Vec::new(),
            final_state: FinalState::Line(empty_1d()),
            status: RunStatus::Failed(e.to_string()),
            error: Some(e),
        };
    }
    match spec.dimension() {
        1 => run_1d(spec),
        _ => run_2d(spec),
    }
}

/// Measured and exact waiting time of one resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingTimeResult {
    pub cells: usize,
    pub dt: f64,
    pub measured: f64,
    pub exact: f64,
}

/// Runs the free-boundary porous-medium problem with the waiting-time data
/// until the left edge starts to move (or `end_time`).
pub fn measure_waiting_time(spec: &RunSpec, velocity_tol: Option<f64>) -> Result<WaitingTimeResult> {
    spec.validate()?;
    let (m, theta) = match spec.initial {
        InitialCondition::WaitingTime { m, theta } => (m, theta),
        _ => return Err(Error::validation("initial.name", "waiting-time runs need the waiting_time initial condition")),
    };
    let cfg = spec.scheme_1d()?;
    if cfg.boundary != Boundary::FreeBoundaryPme {
        return Err(Error::validation("scheme.boundary", "waiting-time runs need free_boundary_pme"));
    }
    let mut state = initial_state_1d(spec)?;
    let dx = state.map.grid.delta_x();
    let tol = velocity_tol.unwrap_or_else(|| default_velocity_tol(dx, cfg.dt));
    let mut edge = vec![(state.time, state.map.positions[0])];
    for _ in 0..step_count(spec.end_time, cfg.dt) {
        state = step_1d(&state, &spec.model, &cfg)?.0;
        edge.push((state.time, state.map.positions[0]));
        if detect_waiting_time(&edge[edge.len() - 2..], tol)?.is_finite() {
            break;
        }
    }
    Ok(WaitingTimeResult {
        cells: state.map.grid.n_cells,
        dt: cfg.dt,
        measured: detect_waiting_time(&edge, tol)?,
        exact: waiting_time_exact(m, theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_rounds_sensibly() {
        assert_eq!(step_count(0.5, 0.01), 50);
        assert_eq!(step_count(0.1, 0.1 / 64.0), 64);
        assert_eq!(step_count(1.0, 0.3), 4);
    }

    #[test]
    fn pme_run_is_structure_preserving() {
        let spec = crate::presets::preset("table1").unwrap();
        let out = run(&spec).into_result().unwrap();
        assert_eq!(out.trace.rows.len(), 51);
        let rep = crate::diagnostics::assert_structure(&out.trace, &Default::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
