//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, EpsilonSpec, RunSpec};
use crate::diagnostics::convergence_study;
use crate::error::{Error, Result};
use crate::exact::InitialCondition;
use crate::output;
use crate::presets::{list_presets, preset};
use crate::scheme1d::Regularization;
use crate::simulation::{measure_waiting_time, run, RunStatus};

#[derive(Debug, Parser)]
#[command(name = "wgflow", version = output::VERSION, about = "Lagrangian flow-map solvers for gradient flows")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write its trace and snapshots.
    Run(Common),
    /// Run a convergence ladder and print the error table.
    Convergence(Common),
    /// Measure the waiting time of the left support edge.
    WaitingTime(Common),
    /// Print the preset catalogue.
    ListPresets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reg {
    X,
    Increment,
    None,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run specification.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the spec).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ladder runs and dense solves.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Number of cells per direction.
    #[arg(long = "M", value_name = "CELLS")]
    cells: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    reg: Option<Reg>,
}

impl Common {
    fn spec(&self, fallback: Option<&str>) -> Result<RunSpec> {
        let mut spec = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => return Err(Error::validation("preset", "give either --config or --preset, not both")),
            (Some(path), None) => parse_config(&std::fs::read_to_string(path)?)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => match fallback {
                Some(name) => preset(name)?,
                None => return Err(Error::validation("config", "one of --config or --preset is required")),
            },
        };
        if let Some(m) = self.m {
            spec.set_exponent(m)?;
        }
        if let Some(theta) = self.theta {
            match &mut spec.initial {
                InitialCondition::WaitingTime { theta: t, .. } => *t = theta,
                _ => return Err(Error::validation("theta", "only the waiting-time data has a theta")),
            }
        }
        if let Some(cells) = self.cells {
            spec.grid = spec.grid.with_cells(cells);
            if self.dt.is_none() {
                // keep the preset's time step, except where it is tied to the mesh
                if let Some(wt) = &spec.waiting_time {
                    if let Some(level) = wt.ladder.iter().find(|l| l.cells == cells) {
                        spec.scheme = spec.scheme.with_dt(level.dt);
                    } else {
                        spec.scheme = spec.scheme.with_dt(1.0 / cells as f64);
                    }
                }
            }
        }
        if let Some(dt) = self.dt {
            spec.scheme = spec.scheme.with_dt(dt);
        }
        if let Some(reg) = self.reg {
            spec.scheme.regularization = match reg {
                Reg::X => Regularization::LaplacianOfX,
                Reg::Increment => Regularization::LaplacianOfIncrement,
                Reg::None => Regularization::None,
            };
        }
        if let Some(eps) = self.epsilon {
            spec.scheme.epsilon = Some(EpsilonSpec::Value(eps));
        }
        if let Some(out) = &self.out {
            spec.output_dir = out.clone();
        }
        spec.validate()?;
        Ok(spec)
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        }
        Ok(())
    }
}

fn run_cmd(c: &Common, out: &mut dyn Write) -> Result<()> {
    c.init_threads()?;
    let spec = c.spec(None)?;
    log::info!("running {} for t in [0, {}]", spec.preset.as_deref().unwrap_or("config"), spec.end_time);
    let result = run(&spec);
    let files = output::write_run(&spec.output_dir, &spec, &result)?;
    let last = result.trace.rows.last().copied().unwrap_or_default();
    writeln!(out, "status: {}", match &result.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::DensityCap => "density cap reached".to_string(),
        RunStatus::Failed(m) => format!("failed ({m})"),
    })?;
    writeln!(out, "steps: {}  time: {:.6}  mass: {:.12e}  energy: {:.12e}", last.step, last.time, last.total_mass, last.energy)?;
    writeln!(out, "wrote {} files to {}", files.len(), spec.output_dir.display())?;
    match result.error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn convergence_cmd(c: &Common, out: &mut dyn Write) -> Result<()> {
    c.init_threads()?;
    let spec = c.spec(None)?;
    let conv = spec
        .convergence
        .clone()
        .ok_or_else(|| Error::validation("convergence", "this spec has no convergence ladder"))?;
    let report = convergence_study(&spec, &conv)?;
    output::write_convergence(&spec.output_dir, &spec, &report)?;
    write!(out, "{}", output::convergence_csv(&report))?;
    Ok(())
}

fn waiting_time_cmd(c: &Common, out: &mut dyn Write) -> Result<()> {
    c.init_threads()?;
    let spec = c.spec(Some("table5"))?;
    let tol = spec.waiting_time.as_ref().and_then(|w| w.velocity_tol);
    let levels: Vec<RunSpec> = match (&spec.waiting_time, c.cells) {
        (Some(wt), None) => wt
            .ladder
            .iter()
            .map(|l| {
                let mut s = spec.clone();
                s.grid = s.grid.with_cells(l.cells);
                s.scheme = s.scheme.with_dt(l.dt);
                s
            })
            .collect(),
        _ => vec![spec.clone()],
    };
    writeln!(out, "cells,dt,t_w,t_w_exact")?;
    for s in &levels {
        let r = measure_waiting_time(s, tol)?;
        writeln!(out, "{},{:.6e},{:.6},{:.6}", r.cells, r.dt, r.measured, r.exact)?;
    }
    Ok(())
}

fn list_cmd(out: &mut dyn Write) -> Result<()> {
    for (name, description) in list_presets() {
        writeln!(out, "{name:34} {description}")?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => run_cmd(c, out),
        Command::Convergence(c) => convergence_cmd(c, out),
        Command::WaitingTime(c) => waiting_time_cmd(c, out),
        Command::ListPresets => list_cmd(out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
