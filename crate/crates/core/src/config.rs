//! Run specifications and their TOML form.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{ConvergenceSpec, LadderLevel};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::exact::InitialCondition;
use crate::grid::{RefGrid1D, RefGrid2D};
use crate::scheme1d::{Boundary, Regularization, SchemeConfig1D, TimeOrder};
use crate::scheme2d::{Mode2D, SchemeConfig2D, StabilityConstants, DEFAULT_DET_FLOOR};
use crate::solver::NewtonConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Line { x_left: f64, x_right: f64, cells: usize },
    /// `[-half_width_x, half_width_x] x [-half_width_y, half_width_y]`
    Plane { half_width_x: f64, half_width_y: f64, cells_x: usize, cells_y: usize },
}

impl GridSpec {
    pub fn dimension(&self) -> usize {
        match self {
            GridSpec::Line { .. } => 1,
            GridSpec::Plane { .. } => 2,
        }
    }

    pub fn line(&self) -> Result<RefGrid1D> {
        match *self {
            GridSpec::Line { x_left, x_right, cells } => RefGrid1D::new(x_left, x_right, cells),
            GridSpec::Plane { .. } => Err(Error::validation("grid.kind", "expected a line grid")),
        }
    }

    pub fn plane(&self) -> Result<RefGrid2D> {
        match *self {
            GridSpec::Plane { half_width_x, half_width_y, cells_x, cells_y } => {
                RefGrid2D::new(half_width_x, half_width_y, cells_x, cells_y)
            }
            GridSpec::Line { .. } => Err(Error::validation("grid.kind", "expected a plane grid")),
        }
    }

    /// Same domain with `cells` cells along x (y scaled in proportion).
    pub fn with_cells(self, cells: usize) -> Self {
        match self {
            GridSpec::Line { x_left, x_right, .. } => GridSpec::Line { x_left, x_right, cells },
            GridSpec::Plane { half_width_x, half_width_y, cells_x, cells_y } => GridSpec::Plane {
                half_width_x,
                half_width_y,
                cells_x: cells,
                cells_y: (cells * cells_y).div_ceil(cells_x),
            },
        }
    }

    /// Label spacing along x.
    pub fn spacing(&self) -> f64 {
        match *self {
            GridSpec::Line { x_left, x_right, cells } => (x_right - x_left) / cells as f64,
            GridSpec::Plane { half_width_x, cells_x, .. } => 2.0 * half_width_x / cells_x as f64,
        }
    }
}

/// Regularization strength: a number, or a multiple of `δt` or of `h²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    DtFactor { dt_factor: f64 },
    H2Factor { h2_factor: f64 },
}

impl EpsilonSpec {
    pub fn resolve(&self, dt: f64, h: f64) -> f64 {
        match *self {
            EpsilonSpec::Value(v) => v,
            EpsilonSpec::DtFactor { dt_factor } => dt_factor * dt,
            EpsilonSpec::H2Factor { h2_factor } => h2_factor * h * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub dt: f64,
    #[serde(default)]
    pub regularization: Regularization,
    /// Defaults to `δt` when regularized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonSpec>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub time_order: TimeOrder,
    #[serde(default)]
    pub mode: Mode2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonConfig>,
    #[serde(default = "default_det_floor")]
    pub det_floor: f64,
}

fn default_det_floor() -> f64 {
    DEFAULT_DET_FLOOR
}

impl SchemeSpec {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            regularization: Regularization::LaplacianOfX,
            epsilon: None,
            boundary: Boundary::Dirichlet,
            time_order: TimeOrder::First,
            mode: Mode2D::Explicit,
            newton: None,
            det_floor: DEFAULT_DET_FLOOR,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn epsilon_value(&self, h: f64) -> f64 {
        match (self.regularization, self.epsilon) {
            (Regularization::None, _) => 0.0,
            (_, Some(e)) => e.resolve(self.dt, h),
            (_, None) => self.dt,
        }
    }
}

/// Waiting-time measurement over a ladder of resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingTimeSpec {
    pub ladder: Vec<LadderLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_tol: Option<f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub end_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Stop (successfully) once the maximum density exceeds this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_cap: Option<f64>,
    pub model: EnergyModel,
    pub initial: InitialCondition,
    pub grid: GridSpec,
    pub scheme: SchemeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waiting_time: Option<WaitingTimeSpec>,
}

impl RunSpec {
    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.end_time > 0.0 && self.end_time.is_finite()) {
            return Err(Error::validation("end_time", "must be positive"));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.end_time)) {
            return Err(Error::validation("snapshot_times", "must lie in [0, end_time]"));
        }
        self.model.validate()?;
        self.initial.validate()?;
        let d = self.dimension();
        if self.model.dimension() != d {
            return Err(Error::validation("model.kind", format!("model does not fit a {d}D grid")));
        }
        if self.initial.dimension() != 0 && self.initial.dimension() != d {
            return Err(Error::validation("initial.name", format!("initial condition does not fit a {d}D grid")));
        }
        match d {
            1 => {
                self.grid.line()?;
                self.scheme_1d()?.validate(&self.model)?;
            }
            _ => {
                self.grid.plane()?;
                self.scheme_2d()?.validate()?;
            }
        }
        if let Some(c) = &self.convergence {
            if c.ladder.is_empty() {
                return Err(Error::validation("convergence.ladder", "needs at least one level"));
            }
        }
        Ok(())
    }

    pub fn scheme_1d(&self) -> Result<SchemeConfig1D> {
        let s = &self.scheme;
        if !(s.dt > 0.0) {
            return Err(Error::validation("scheme.dt", "time step must be positive"));
        }
        Ok(SchemeConfig1D {
            dt: s.dt,
            regularization: s.regularization,
            epsilon: s.epsilon_value(self.grid.spacing()),
            boundary: s.boundary,
            newton: s.newton.unwrap_or_else(NewtonConfig::default_1d),
            time_order: s.time_order,
        })
    }

    pub fn scheme_2d(&self) -> Result<SchemeConfig2D> {
        let s = &self.scheme;
        if !(s.dt > 0.0) {
            return Err(Error::validation("scheme.dt", "time step must be positive"));
        }
        if s.regularization == Regularization::None && s.mode == Mode2D::Explicit {
            return Err(Error::validation("scheme.regularization", "the explicit planar scheme needs a regularization"));
        }
        Ok(SchemeConfig2D {
            dt: s.dt,
            regularization: s.regularization,
            epsilon: s.epsilon_value(self.grid.spacing()),
            mode: s.mode,
            newton: s.newton.unwrap_or_else(NewtonConfig::default_2d),
            det_floor: s.det_floor,
        })
    }

    /// Sets the exponent `m` of the model and, where it has one, of the initial data.
    pub fn set_exponent(&mut self, m: f64) -> Result<()> {
        match &mut self.model {
            EnergyModel::PorousMedium { m: mm }
            | EnergyModel::NonlinearFp { m: mm, .. }
            | EnergyModel::PorousMedium2D { m: mm }
            | EnergyModel::AggregationDiffusion2D { m: mm, .. }
            | EnergyModel::KellerSegel2D { m: mm, .. } => *mm = m,
            _ => return Err(Error::validation("m", "this model has no exponent")),
        }
        match &mut self.initial {
            InitialCondition::Barenblatt { m: mm, .. }
            | InitialCondition::WaitingTime { m: mm, .. }
            | InitialCondition::Barenblatt2D { m: mm, .. } => *mm = m,
            _ => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize run spec: {e}")))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let (mut line, mut column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    // Tagged tables are buffered before decoding, so an unknown key is
    // reported at its table header. Point at the key itself instead.
    if let Some(key) = unknown_field(e.message()) {
        if let Some((l, c)) = find_key(text, line, key) {
            (line, column) = (l, c);
        }
    }
    Error::Parse { line, column, message: e.message().to_string() }
}

fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

fn find_key(text: &str, from_line: usize, key: &str) -> Option<(usize, usize)> {
    for (n, raw) in text.lines().enumerate().skip(from_line.saturating_sub(1)) {
        let trimmed = raw.trim_start();
        if n + 1 > from_line && trimmed.starts_with('[') {
            return None;
        }
        if let Some(after) = trimmed.strip_prefix(key) {
            if after.trim_start().starts_with('=') {
                return Some((n + 1, raw.len() - trimmed.len() + 1));
            }
        }
    }
    None
}

fn tag(t: &toml::Table) -> Option<&toml::Value> {
    t.get("kind").or_else(|| t.get("name"))
}

/// Overlays `over` onto `base`, merging tables key by key. A table that
/// names a different variant replaces the base table whole.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if tag(&o).map_or(true, |t| Some(t) == tag(b)) => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses and validates a run specification. A `preset = "name"` key
/// starts from that preset; the remaining keys override it.
pub fn parse_config(text: &str) -> Result<RunSpec> {
    let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let spec: RunSpec = match table.get("preset").and_then(|v| v.as_str()) {
        Some(name) => {
            let base = crate::presets::preset(name)?;
            let mut merged: toml::Table = toml::from_str(&base.to_toml()?)
                .map_err(|e| Error::InvalidInput(format!("preset does not round-trip: {e}")))?;
            merge(&mut merged, table);
            merged.try_into().map_err(|e: toml::de::Error| Error::Parse { line: 0, column: 0, message: e.message().to_string() })?
        }
        None => toml::from_str(text).map_err(|e| parse_error(text, e))?,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
end_time = 0.5

[model]
kind = "porous_medium"
m = 2.0

[initial]
name = "cosine"

[grid]
kind = "line"
x_left = -1.0
x_right = 1.0
cells = 100

[scheme]
dt = 0.01
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(spec.scheme.regularization, Regularization::LaplacianOfX);
        assert_eq!(spec.scheme_1d().unwrap().epsilon, 0.01);
        assert_eq!(spec.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn small_exponent_is_rejected() {
        let text = MINIMAL.replace("m = 2.0", "m = 0.5");
        match parse_config(&text) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "m");
                assert_eq!(message, "m must exceed 1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = MINIMAL.replace("cells = 100", "cells = 100\ncolour = 3");
        match parse_config(&text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 16);
                assert_eq!(column, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&spec.to_toml().unwrap()).unwrap(), spec);
    }

    #[test]
    fn preset_with_override() {
        let spec = parse_config("preset = \"table1\"\nend_time = 0.25\n").unwrap();
        assert_eq!(spec.end_time, 0.25);
        assert_eq!(spec.convergence.as_ref().unwrap().ladder.len(), 4);
    }
}
