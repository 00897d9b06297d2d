//! Per-step monitors, waiting-time detection and convergence studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunSpec;
use crate::error::{Error, Result};
use crate::energy::{EnergyModel, Potential};
use crate::exact::InitialCondition;
use crate::grid::{det_at, FlowMap1D};
use crate::scheme1d::StepState1D;
use crate::scheme2d::StepState2D;
use crate::simulation::{run, FinalState};

/// Monitors of one accepted step (the initial state is row 0).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub total_mass: f64,
    pub energy: f64,
    pub regularized_energy: f64,
    /// Change of the regularized energy across the step with interaction
    /// data frozen at the old level (zero on row 0).
    pub energy_change: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Smallest Jacobian determinant (planar runs; 1D runs store the
    /// smallest cell-length ratio).
    pub min_det: f64,
    pub left: f64,
    pub right: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsTrace {
    pub rows: Vec<TraceRow>,
}

impl DiagnosticsTrace {
    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().map_or(true, |r| r.time <= row.time));
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(time, left boundary)` pairs.
    pub fn left_boundary(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.time, r.left)).collect()
    }

    pub fn right_boundary(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.time, r.right)).collect()
    }
}

/// Row for a 1D state; `energy`, `regularized` and `change` are supplied by the caller.
pub fn trace_row_1d(step: usize, state: &StepState1D, energy: f64, regularized: f64, change: f64, newton: usize) -> TraceRow {
    let x = &state.map.positions;
    let dx = state.map.grid.delta_x();
    let min_ratio = x.windows(2).map(|w| (w[1] - w[0]) / dx).fold(f64::INFINITY, f64::min);
    TraceRow {
        step,
        time: state.time,
        total_mass: crate::grid::total_mass_1d(&state.map, &state.rho),
        energy,
        regularized_energy: regularized,
        energy_change: change,
        rho_min: state.rho.min(),
        rho_max: state.rho.max(),
        min_det: min_ratio,
        left: x[0],
        right: x[x.len() - 1],
        newton_iterations: newton,
    }
}

pub fn trace_row_2d(step: usize, state: &StepState2D, energy: f64, regularized: f64, change: f64, newton: usize) -> TraceRow {
    let (d, _, _) = crate::grid::min_determinant_2d(&state.map);
    let g = state.map.grid;
    let mut rho_min = f64::INFINITY;
    let mut rho_max = f64::NEG_INFINITY;
    for i in 1..g.my {
        for j in 1..g.mx {
            rho_min = rho_min.min(state.rho.values[[i, j]]);
            rho_max = rho_max.max(state.rho.values[[i, j]]);
        }
    }
    TraceRow {
        step,
        time: state.time,
        total_mass: crate::grid::total_mass_2d(&state.map, &state.rho),
        energy,
        regularized_energy: regularized,
        energy_change: change,
        rho_min,
        rho_max,
        min_det: d,
        left: state.map.x[[g.my / 2, 0]],
        right: state.map.x[[g.my / 2, g.mx]],
        newton_iterations: newton,
    }
}

/// `sqrt(Σ w_i (a_i - b_i)²)`.
pub fn l2h_error_1d(a: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::InvalidInput("error vectors differ in length".into()));
    }
    Ok(a.iter().zip(b).zip(weights).map(|((p, q), w)| w * (p - q).powi(2)).sum::<f64>().sqrt())
}

pub fn linf_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("error vectors differ in length".into()));
    }
    Ok(a.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs())))
}

/// Observed order between two levels whose resolution differs by `ratio`.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> f64 {
    (e_coarse / e_fine).ln() / ratio.ln()
}

/// Default edge-speed threshold for waiting-time detection.
pub fn default_velocity_tol(dx: f64, dt: f64) -> f64 {
    1e-2 * dx / dt
}

/// Start of the first interval on which the boundary speed exceeds
/// `velocity_tol`; `+∞` if the boundary never moves that fast.
pub fn detect_waiting_time(boundary_trace: &[(f64, f64)], velocity_tol: f64) -> Result<f64> {
    if boundary_trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    for w in boundary_trace.windows(2) {
        let ((t0, x0), (t1, x1)) = (w[0], w[1]);
        if t1 > t0 && ((x1 - x0) / (t1 - t0)).abs() > velocity_tol {
            return Ok(t0);
        }
    }
    Ok(f64::INFINITY)
}

/// Cell densities against `exact` at the cell midpoints, weighted by the
/// current cell lengths: `(L²_h, L∞)`.
pub fn density_error_1d(state: &StepState1D, exact: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let x = &state.map.positions;
    let mids = state.map.midpoints();
    let reference: Vec<f64> = mids.iter().map(|&m| exact(m)).collect();
    let lengths: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    Ok((l2h_error_1d(&state.rho.cells, &reference, &lengths)?, linf_error(&state.rho.cells, &reference)?))
}

/// Density at interior node `j` from the central difference of the map.
pub fn nodal_density_1d(state: &StepState1D, j: usize) -> Result<f64> {
    let x = &state.map.positions;
    if j == 0 || j + 1 >= x.len() {
        return Err(Error::InvalidInput(format!("node {j} is not interior")));
    }
    let r0 = match &state.rho0.nodes {
        Some(n) => n[j],
        None => 0.5 * (state.rho0.cells[j - 1] + state.rho0.cells[j]),
    };
    Ok(r0 * 2.0 * state.map.grid.delta_x() / (x[j + 1] - x[j - 1]))
}

/// Node whose label is closest to `label`.
fn nearest_node(map: &FlowMap1D, label: f64) -> usize {
    let g = map.grid;
    let j = ((label - g.x_left) / g.delta_x()).round();
    (j.max(0.0) as usize).min(g.n_cells)
}

/// Interior-node density errors against `exact` at the current positions, label-area weights.
pub fn density_error_2d(state: &StepState2D, exact: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let g = state.map.grid;
    let area = g.hx() * g.hy();
    let (mut l2, mut li) = (0.0, 0.0_f64);
    for i in 1..g.my {
        for j in 1..g.mx {
            let d = state.rho.values[[i, j]] - exact(state.map.x[[i, j]], state.map.y[[i, j]]);
            l2 += d * d * area;
            li = li.max(d.abs());
        }
    }
    (l2.sqrt(), li)
}

/// Reference used by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    /// A finer run of the same problem, compared by Lagrangian label.
    SelfFine { cells: usize, dt: f64 },
    /// The closed-form solution of the initial condition (Barenblatt profiles).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderLevel {
    pub cells: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub ladder: Vec<LadderLevel>,
    pub reference: Reference,
    /// Label at which the pointwise density error is taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub dt: f64,
    pub l2_x: Option<f64>,
    pub linf_x: Option<f64>,
    pub l2_rho: f64,
    pub linf_rho: f64,
    pub probe: Option<f64>,
    pub order_l2_x: Option<f64>,
    pub order_linf_x: Option<f64>,
    pub order_l2_rho: Option<f64>,
    pub order_linf_rho: Option<f64>,
    pub order_probe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Fills the order columns from consecutive rows.
    fn with_orders(mut rows: Vec<ConvergenceRow>) -> Self {
        for k in 1..rows.len() {
            let (c, f) = (rows[k - 1], rows[k]);
            let ratio = f.cells as f64 / c.cells as f64;
            let ord = |a: Option<f64>, b: Option<f64>| Some(observed_order(a?, b?, ratio));
            let r = &mut rows[k];
            r.order_l2_x = ord(c.l2_x, f.l2_x);
            r.order_linf_x = ord(c.linf_x, f.linf_x);
            r.order_l2_rho = ord(Some(c.l2_rho), Some(f.l2_rho));
            r.order_linf_rho = ord(Some(c.linf_rho), Some(f.linf_rho));
            r.order_probe = ord(c.probe, f.probe);
        }
        Self { rows }
    }

    /// Observed orders of one column (rows 1..).
    pub fn orders(&self, column: fn(&ConvergenceRow) -> Option<f64>) -> Vec<f64> {
        self.rows.iter().skip(1).filter_map(column).collect()
    }
}

fn level_spec(base: &RunSpec, cells: usize, dt: f64) -> RunSpec {
    let mut spec = base.clone();
    spec.grid = spec.grid.with_cells(cells);
    spec.scheme = spec.scheme.with_dt(dt);
    spec.snapshot_times.clear();
    spec
}

fn check_ladder(conv: &ConvergenceSpec) -> Result<()> {
    if conv.ladder.is_empty() {
        return Err(Error::validation("convergence.ladder", "needs at least one level"));
    }
    for w in conv.ladder.windows(2) {
        if !(w[1].cells > w[0].cells && w[1].dt <= w[0].dt) {
            return Err(Error::validation("convergence.ladder", "levels must strictly refine"));
        }
    }
    Ok(())
}

/// Reference density: the self-similar profile for Barenblatt data, the
/// steady state of the same mass for confined Fokker-Planck runs.
fn exact_1d(spec: &RunSpec, state: &StepState1D) -> Result<Box<dyn Fn(f64) -> f64>> {
    match (spec.initial, spec.model) {
        (InitialCondition::Barenblatt { m, t0 }, _) => {
            let t = t0 + state.time;
            Ok(Box::new(move |x| crate::exact::barenblatt_1d(x, t, m)))
        }
        (_, EnergyModel::NonlinearFp { m, drift }) if drift != Potential::None => {
            let mass = crate::grid::total_mass_1d(&state.map, &state.rho);
            let steady = crate::exact::FpSteadyState::new(drift, m, mass)?;
            Ok(Box::new(move |x| steady.density(x)))
        }
        _ => Err(Error::Unsupported("no closed-form solution for this setup".into())),
    }
}

fn exact_2d(ic: &InitialCondition, t: f64) -> Result<impl Fn(f64, f64) -> f64> {
    match *ic {
        InitialCondition::Barenblatt2D { m, c_b2, t0 } => {
            Ok(move |x, y| crate::exact::barenblatt_2d(x, y, t0 + t, m, c_b2))
        }
        _ => Err(Error::Unsupported("no closed-form solution for this initial condition".into())),
    }
}

fn compare_1d(coarse: &StepState1D, fine: Option<&StepState1D>, spec: &RunSpec, probe: Option<f64>) -> Result<ConvergenceRow> {
    let g = coarse.map.grid;
    let n = g.n_cells;
    let mut row = ConvergenceRow { cells: n, ..Default::default() };
    let probe_node = probe.map(|p| nearest_node(&coarse.map, p));
    match fine {
        Some(f) => {
            let fg = f.map.grid;
            if fg.n_cells % n != 0 || fg.x_left != g.x_left || fg.x_right != g.x_right {
                return Err(Error::NonNestedGrids);
            }
            let r = fg.n_cells / n;
            let xf: Vec<f64> = (0..=n).map(|j| f.map.positions[j * r]).collect();
            let w = vec![g.delta_x(); n + 1];
            row.l2_x = Some(l2h_error_1d(&coarse.map.positions, &xf, &w)?);
            row.linf_x = Some(linf_error(&coarse.map.positions, &xf)?);
            // fine density averaged over each coarse cell
            let rf: Vec<f64> = (0..n)
                .map(|c| {
                    let mass: f64 = (c * r..(c + 1) * r).map(|k| f.rho0.cells[k] * fg.delta_x()).sum();
                    mass / (xf[c + 1] - xf[c])
                })
                .collect();
            let lengths: Vec<f64> = coarse.map.positions.windows(2).map(|w| w[1] - w[0]).collect();
            row.l2_rho = l2h_error_1d(&coarse.rho.cells, &rf, &lengths)?;
            row.linf_rho = linf_error(&coarse.rho.cells, &rf)?;
            if let Some(j) = probe_node {
                row.probe = Some((nodal_density_1d(coarse, j)? - nodal_density_1d(f, j * r)?).abs());
            }
        }
        None => {
            let exact = exact_1d(spec, coarse)?;
            let (l2, li) = density_error_1d(coarse, &exact)?;
            row.l2_rho = l2;
            row.linf_rho = li;
            if let Some(j) = probe_node {
                row.probe = Some((nodal_density_1d(coarse, j)? - exact(coarse.map.positions[j])).abs());
            }
        }
    }
    Ok(row)
}

fn compare_2d(coarse: &StepState2D, fine: Option<&StepState2D>, spec: &RunSpec) -> Result<ConvergenceRow> {
    let g = coarse.map.grid;
    let mut row = ConvergenceRow { cells: g.mx, ..Default::default() };
    match fine {
        Some(f) => {
            let fg = f.map.grid;
            if fg.mx % g.mx != 0 || fg.my % g.my != 0 || fg.lx != g.lx || fg.ly != g.ly || fg.mx / g.mx != fg.my / g.my {
                return Err(Error::NonNestedGrids);
            }
            let r = fg.mx / g.mx;
            let area = g.hx() * g.hy();
            let (mut l2x, mut lix, mut l2r, mut lir) = (0.0, 0.0_f64, 0.0, 0.0_f64);
            for i in 1..g.my {
                for j in 1..g.mx {
                    let (fi, fj) = (i * r, j * r);
                    let dx = coarse.map.x[[i, j]] - f.map.x[[fi, fj]];
                    let dy = coarse.map.y[[i, j]] - f.map.y[[fi, fj]];
                    let d2 = dx * dx + dy * dy;
                    l2x += d2 * area;
                    lix = lix.max(d2.sqrt());
                    let fr = f.rho0.values[[fi, fj]] / det_at(&f.map.x, &f.map.y, &fg, fi, fj);
                    let dr = coarse.rho.values[[i, j]] - fr;
                    l2r += dr * dr * area;
                    lir = lir.max(dr.abs());
                }
            }
            row.l2_x = Some(l2x.sqrt());
            row.linf_x = Some(lix);
            row.l2_rho = l2r.sqrt();
            row.linf_rho = lir;
        }
        None => {
            let (l2, li) = density_error_2d(coarse, exact_2d(&spec.initial, coarse.time)?);
            row.l2_rho = l2;
            row.linf_rho = li;
        }
    }
    Ok(row)
}

/// Runs every ladder level (in parallel) and compares it with the reference.
pub fn convergence_study(base: &RunSpec, conv: &ConvergenceSpec) -> Result<ConvergenceReport> {
    check_ladder(conv)?;
    let mut specs: Vec<RunSpec> = conv.ladder.iter().map(|l| level_spec(base, l.cells, l.dt)).collect();
    if let Reference::SelfFine { cells, dt } = conv.reference {
        let finest = conv.ladder[conv.ladder.len() - 1];
        if !(cells > finest.cells && cells % finest.cells == 0) {
            return Err(Error::NonNestedGrids);
        }
        specs.push(level_spec(base, cells, dt));
    }
    let finals: Vec<FinalState> = specs
        .par_iter()
        .map(|s| {
            let out = run(s);
            match out.error {
                Some(e) => Err(e),
                None => Ok(out.final_state),
            }
        })
        .collect::<Result<_>>()?;
    let reference = match conv.reference {
        Reference::SelfFine { .. } => finals.last(),
        Reference::Exact => None,
    };
    let mut rows = Vec::with_capacity(conv.ladder.len());
    for (level, state) in conv.ladder.iter().zip(&finals) {
        let mut row = match (state, reference) {
            (FinalState::Line(s), Some(FinalState::Line(f))) => compare_1d(s, Some(f), base, conv.probe)?,
            (FinalState::Line(s), None) => compare_1d(s, None, base, conv.probe)?,
            (FinalState::Plane(s), Some(FinalState::Plane(f))) => compare_2d(s, Some(f), base)?,
            (FinalState::Plane(s), None) => compare_2d(s, None, base)?,
            _ => return Err(Error::InvalidInput("reference run has a different dimension".into())),
        };
        row.dt = level.dt;
        rows.push(row);
    }
    Ok(ConvergenceReport::with_orders(rows))
}

/// Tolerances for [`assert_structure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureOptions {
    pub mass_rel_tol: f64,
    /// Allowed per-step increase of the regularized energy; `None` skips the check.
    pub energy_tol: Option<f64>,
    pub det_floor: f64,
}

impl Default for StructureOptions {
    fn default() -> Self {
        Self { mass_rel_tol: 1e-11, energy_tol: Some(1e-7), det_floor: 0.0 }
    }
}

/// Outcome of one structural check: the worst violation and the row it occurred at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub worst: f64,
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    pub mass: Check,
    pub positivity: Check,
    pub energy: Option<Check>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.mass.passed && self.positivity.passed && self.energy.map_or(true, |c| c.passed)
    }
}

/// Mass drift, determinant positivity and energy monotonicity over a trace.
pub fn assert_structure(trace: &DiagnosticsTrace, options: &StructureOptions) -> Result<StructureReport> {
    let first = trace.rows.first().ok_or(Error::EmptyTrace)?;
    let m0 = first.total_mass;
    let mut mass = Check { passed: true, worst: 0.0, row: 0 };
    let mut pos = Check { passed: true, worst: f64::INFINITY, row: 0 };
    for (k, r) in trace.rows.iter().enumerate() {
        let drift = (r.total_mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE);
        if drift > mass.worst || drift.is_nan() {
            mass = Check { passed: true, worst: drift, row: k };
        }
        if r.min_det < pos.worst || r.min_det.is_nan() {
            pos = Check { passed: true, worst: r.min_det, row: k };
        }
    }
    mass.passed = mass.worst <= options.mass_rel_tol;
    pos.passed = pos.worst > options.det_floor;
    let energy = options.energy_tol.map(|tol| {
        let mut c = Check { passed: true, worst: f64::NEG_INFINITY, row: 0 };
        for (k, r) in trace.rows.iter().enumerate().skip(1) {
            if r.energy_change > c.worst || r.energy_change.is_nan() {
                c = Check { passed: true, worst: r.energy_change, row: k };
            }
        }
        c.passed = trace.rows.len() < 2 || c.worst <= tol;
        c
    });
    Ok(StructureReport { mass, positivity: pos, energy })
}

/// Least-squares slope `-d ln(y)/dt` over the samples with `y > floor`.
pub fn fit_decay_rate(samples: &[(f64, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|(_, y)| *y > floor).map(|&(t, y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt).powi(2)));
    Some(-num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_of_constant_offset() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|v| v + 0.3).collect();
        let w = [0.25; 4];
        assert!((l2h_error_1d(&a, &b, &w).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(l2h_error_1d(&a, &a, &w).unwrap(), 0.0);
        assert!((linf_error(&a, &b).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn order_of_power_law() {
        let p = 1.7;
        let e = |m: f64| 3.0 * m.powf(-p);
        assert!((observed_order(e(100.0), e(200.0), 2.0) - p).abs() < 1e-12);
    }

    #[test]
    fn waiting_time_detection() {
        assert!(matches!(detect_waiting_time(&[], 1.0), Err(Error::EmptyTrace)));
        let still: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.1, -1.0)).collect();
        assert_eq!(detect_waiting_time(&still, 1e-12).unwrap(), f64::INFINITY);
        let moving: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.1, if k > 4 { -1.0 - 0.1 * (k - 4) as f64 } else { -1.0 })).collect();
        assert!((detect_waiting_time(&moving, 0.5).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn structure_flags_mass_jump() {
        let mut trace = DiagnosticsTrace::default();
        for k in 0..5 {
            let mass = if k == 3 { 1.0 + 1e-6 } else { 1.0 };
            trace.push(TraceRow { step: k, time: k as f64, total_mass: mass, min_det: 1.0, energy_change: -1.0, ..Default::default() });
        }
        let rep = assert_structure(&trace, &StructureOptions::default()).unwrap();
        assert!(!rep.mass.passed);
        assert_eq!(rep.mass.row, 3);
        assert!(rep.positivity.passed && rep.energy.unwrap().passed);
    }

    #[test]
    fn decay_rate_of_exponential() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 0.1, 2.0 * (-6.0 * k as f64 * 0.1).exp())).collect();
        assert!((fit_decay_rate(&s, 0.0).unwrap() - 6.0).abs() < 1e-10);
    }
}
