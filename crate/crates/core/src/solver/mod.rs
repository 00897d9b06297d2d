//! Linear and nonlinear solvers shared by the time-stepping schemes.

mod elliptic;
mod linear;
mod newton;

pub use elliptic::{apply_screened_laplacian_2d, solve_screened_laplacian_2d, solve_screened_laplacian_2d_dense};
pub(crate) use elliptic::solve_screened_with_guess;
pub use linear::{solve_dense, solve_tridiagonal, LinearSystem, Tridiagonal};
pub use newton::{damped_newton, NewtonConfig, NewtonReport};

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    // NaN entries poison the norm so that callers never accept them
    if v.iter().any(|x| x.is_nan()) {
        return f64::INFINITY;
    }
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
