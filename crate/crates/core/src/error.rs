use thiserror::Error;

use crate::solver::NewtonReport;

pub type Result<T> = std::result::Result<T, Error>;

/// Iterate and report left behind by a Newton solve that ran out of iterations.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub best: Vec<f64>,
    pub report: NewtonReport,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("flow map is not admissible: cell {cell} has non-positive length")]
    NonAdmissibleMap { cell: usize },

    #[error("flow map distorted at node ({i}, {j}): determinant {det:e}")]
    MapDistorted { i: usize, j: usize, det: f64 },

    #[error("node ({i}, {j}) is not an interior node")]
    OutOfRange { i: usize, j: usize },

    #[error("interaction kernel evaluated at a singular separation ({separation:e})")]
    KernelSingularity { separation: f64 },

    #[error("model needs the previous time level but none was supplied")]
    MissingPrevState,

    #[error("linearized system is singular")]
    SingularJacobian,

    #[error("Newton did not converge in {} iterations (residual {:e})", .0.report.iterations, .0.report.final_residual_norm)]
    NoConvergence(Box<NewtonFailure>),

    #[error("damping could not restore admissibility at Newton iteration {iteration}")]
    AdmissibilityStall { iteration: usize },

    #[error("zero pivot in tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },

    #[error("iterative solver stalled after {iterations} iterations (residual {residual:e})")]
    SolverBreakdown { iterations: usize, residual: f64 },

    #[error("boundary stencil is degenerate (first cell has zero length)")]
    DegenerateStencil,

    #[error("reference density vanishes at some node")]
    ZeroDensity,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("reference grid does not contain the coarse grid nodes")]
    NonNestedGrids,

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::Unsupported(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 3
    }
}
