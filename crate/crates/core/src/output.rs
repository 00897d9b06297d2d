//! CSV and manifest writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunSpec;
use crate::diagnostics::{ConvergenceReport, DiagnosticsTrace};
use crate::error::{Error, Result};
use crate::simulation::{FinalState, RunOutput, RunStatus};

/// Source revision baked in at build time.
pub const VERSION: &str = env!("WGFLOW_GIT_VERSION");

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn trace_csv(trace: &DiagnosticsTrace) -> String {
    let mut s = String::from(
        "step,time,total_mass,energy,regularized_energy,energy_change,rho_min,rho_max,min_det,left,right,newton_iterations\n",
    );
    for r in &trace.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            num(r.time),
            num(r.total_mass),
            num(r.energy),
            num(r.regularized_energy),
            num(r.energy_change),
            num(r.rho_min),
            num(r.rho_max),
            num(r.min_det),
            num(r.left),
            num(r.right),
            r.newton_iterations
        );
    }
    s
}

/// Line states are written per cell (label and position at the cell
/// centre); planar states per node.
pub fn state_csv(state: &FinalState) -> String {
    match state {
        FinalState::Line(st) => {
            let mut s = String::from("lagrangian_label,position,density\n");
            let mids = st.map.midpoints();
            for (j, (x, rho)) in mids.iter().zip(&st.rho.cells).enumerate() {
                let _ = writeln!(s, "{},{},{}", num(st.map.grid.cell_center(j)), num(*x), num(*rho));
            }
            s
        }
        FinalState::Plane(st) => {
            let g = st.map.grid;
            let mut s = String::from("X,Y,x,y,rho\n");
            for i in 0..=g.my {
                for j in 0..=g.mx {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{}",
                        num(g.x_node(j)),
                        num(g.y_node(i)),
                        num(st.map.x[[i, j]]),
                        num(st.map.y[[i, j]]),
                        num(st.rho.values[[i, j]])
                    );
                }
            }
            s
        }
    }
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from(
        "cells,dt,l2_x,order_l2_x,linf_x,order_linf_x,l2_rho,order_l2_rho,linf_rho,order_linf_rho,probe,order_probe\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cells,
            num(r.dt),
            opt(r.l2_x),
            opt(r.order_l2_x),
            opt(r.linf_x),
            opt(r.order_linf_x),
            num(r.l2_rho),
            opt(r.order_l2_rho),
            num(r.linf_rho),
            opt(r.order_linf_rho),
            opt(r.probe),
            opt(r.order_probe)
        );
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    status: String,
    error: Option<String>,
    files: Vec<String>,
    spec: &'a RunSpec,
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::DensityCap => "density_cap".into(),
        RunStatus::Failed(m) => format!("failed: {m}"),
    }
}

pub fn write_manifest(dir: &Path, spec: &RunSpec, status: &str, error: Option<String>, files: Vec<String>) -> Result<()> {
    let manifest = Manifest { version: VERSION, status: status.to_string(), error, files, spec };
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidInput(format!("manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Writes `trace.csv`, one CSV per snapshot, `final.csv` and
/// `manifest.toml` into `dir`.
pub fn write_run(dir: &Path, spec: &RunSpec, out: &RunOutput) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["trace.csv".to_string()];
    fs::write(dir.join("trace.csv"), trace_csv(&out.trace))?;
    for (k, snap) in out.snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:03}.csv");
        fs::write(dir.join(&name), state_csv(&snap.state))?;
        files.push(name);
    }
    fs::write(dir.join("final.csv"), state_csv(&out.final_state))?;
    files.push("final.csv".into());
    write_manifest(dir, spec, &status_text(&out.status), out.error.as_ref().map(|e| e.to_string()), files.clone())?;
    Ok(files)
}

pub fn write_convergence(dir: &Path, spec: &RunSpec, report: &ConvergenceReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("convergence.csv"), convergence_csv(report))?;
    write_manifest(dir, spec, "completed", None, vec!["convergence.csv".into()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::TraceRow;

    #[test]
    fn trace_has_header_and_full_precision() {
        let mut t = DiagnosticsTrace::default();
        t.push(TraceRow { time: 0.1, total_mass: 1.0 / 3.0, ..Default::default() });
        let s = trace_csv(&t);
        let mut lines = s.lines();
        assert!(lines.next().unwrap().starts_with("step,time"));
        let row = lines.next().unwrap();
        let mass: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(mass, 1.0 / 3.0);
    }

    #[test]
    fn missing_orders_are_blank() {
        let report = ConvergenceReport { rows: vec![Default::default()] };
        let s = convergence_csv(&report);
        let row = s.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), 12);
        assert!(row.contains(",,"));
    }
}
