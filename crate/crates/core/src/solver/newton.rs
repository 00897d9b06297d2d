use serde::{Deserialize, Serialize};

use super::{max_norm, LinearSystem};
use crate::error::{Error, NewtonFailure, Result};

/// Maximum number of step halvings spent on restoring admissibility.
const MAX_ADMISSIBILITY_HALVINGS: usize = 60;
const MAX_LINE_SEARCH_HALVINGS: usize = 30;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    pub line_search: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self::default_1d()
    }
}

impl NewtonConfig {
    pub fn default_1d() -> Self {
        Self { alpha: 0.8, max_iters: 100, residual_tol: 1e-10, step_tol: 1e-14, line_search: true }
    }

    pub fn default_2d() -> Self {
        Self { residual_tol: 1e-8, ..Self::default_1d() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::validation("newton.alpha", "alpha must lie in (0, 1]"));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("newton.max_iters", "must be positive"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::validation("newton.residual_tol", "must be positive"));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::validation("newton.step_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    pub admissibility_rejections: usize,
}

/// Damped Newton iteration `x <- x + t δx` with `t` starting at `alpha`.
///
/// The trial step is halved until `admissible` accepts it, then (with line
/// search on) until the residual max-norm decreases sufficiently.
pub fn damped_newton<R, J, A>(
    mut residual: R,
    mut jacobian: J,
    x0: Vec<f64>,
    cfg: &NewtonConfig,
    mut admissible: A,
) -> Result<(Vec<f64>, NewtonReport)>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<LinearSystem>,
    A: FnMut(&[f64]) -> bool,
{
    cfg.validate()?;
    if !admissible(&x0) {
        return Err(Error::InvalidInput("Newton start point is not admissible".into()));
    }
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut rn = max_norm(&r);
    let mut report = NewtonReport { final_residual_norm: rn, ..Default::default() };
    let mut best = (x.clone(), rn);

    while rn > cfg.residual_tol {
        if report.iterations == cfg.max_iters {
            return Err(no_convergence(best, report));
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = match jacobian(&x)?.solve(&neg) {
            Ok(d) => d,
            Err(Error::ZeroPivot { .. }) => return Err(Error::SingularJacobian),
            Err(e) => return Err(e),
        };

        let mut t = cfg.alpha;
        let mut trial = axpy(&x, t, &dx);
        let mut halvings = 0;
        while !admissible(&trial) {
            halvings += 1;
            report.admissibility_rejections += 1;
            if halvings > MAX_ADMISSIBILITY_HALVINGS {
                return Err(Error::AdmissibilityStall { iteration: report.iterations + 1 });
            }
            t *= 0.5;
            trial = axpy(&x, t, &dx);
        }
        let first = (t, trial.clone(), residual(&trial));

        let mut accepted = None;
        if cfg.line_search {
            let mut cand = (t, trial, first.2.as_ref().ok().cloned());
            for _ in 0..=MAX_LINE_SEARCH_HALVINGS {
                if let Some(rt) = &cand.2 {
                    if max_norm(rt) <= (1.0 - ARMIJO * cand.0) * rn {
                        accepted = Some((cand.0, cand.1, rt.clone()));
                        break;
                    }
                }
                let tt = 0.5 * cand.0;
                let tr = axpy(&x, tt, &dx);
                let rr = if admissible(&tr) { residual(&tr).ok() } else { None };
                cand = (tt, tr, rr);
            }
        }
        let (t, xn, rnew) = match accepted {
            Some(a) => a,
            // no sufficient decrease found: fall back to the admissible damped step
            None => (first.0, first.1, first.2?),
        };

        report.iterations += 1;
        x = xn;
        r = rnew;
        rn = max_norm(&r);
        report.final_residual_norm = rn;
        if rn < best.1 {
            best = (x.clone(), rn);
        }
        if rn > cfg.residual_tol && t * max_norm(&dx) <= cfg.step_tol {
            // the iteration has stagnated short of the residual tolerance
            return Err(no_convergence(best, report));
        }
    }
    report.converged = true;
    Ok((x, report))
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

fn no_convergence(best: (Vec<f64>, f64), mut report: NewtonReport) -> Error {
    report.final_residual_norm = best.1;
    Error::NoConvergence(Box::new(NewtonFailure { best: best.0, report }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Tridiagonal;
    use nalgebra::DMatrix;

    fn scalar(alpha: f64, line_search: bool) -> (Vec<f64>, NewtonReport) {
        let cfg = NewtonConfig { alpha, residual_tol: 1e-12, line_search, ..NewtonConfig::default() };
        damped_newton(
            |x| Ok(vec![x[0] * x[0] - 4.0]),
            |x| Ok(LinearSystem::Dense(DMatrix::from_element(1, 1, 2.0 * x[0]))),
            vec![3.0],
            &cfg,
            |_| true,
        )
        .unwrap()
    }

    #[test]
    fn square_root_of_four() {
        let (x, rep) = scalar(1.0, true);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!(rep.converged && rep.iterations <= 7);
    }

    #[test]
    fn damping_slows_but_converges() {
        let (_, full) = scalar(1.0, false);
        let (x, half) = scalar(0.5, false);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!(half.iterations >= full.iterations);
    }

    #[test]
    fn linear_system_takes_one_step() {
        let n = 6;
        let a = Tridiagonal { lower: vec![-1.0; n - 1], diag: vec![3.0; n], upper: vec![-1.0; n - 1] };
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let cfg = NewtonConfig { alpha: 1.0, ..NewtonConfig::default() };
        let (_, rep) = damped_newton(
            |x| Ok(a.mul_vec(x).iter().zip(&b).map(|(p, q)| p - q).collect()),
            |_| Ok(LinearSystem::Tridiagonal(a.clone())),
            vec![0.0; n],
            &cfg,
            |_| true,
        )
        .unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn admissibility_halving_keeps_iterates_inside() {
        // root at x = 2, but iterates must stay below 2.5; start far right of the root
        let cfg = NewtonConfig { alpha: 1.0, ..NewtonConfig::default() };
        let (x, rep) = damped_newton(
            |x| Ok(vec![(x[0] - 2.0).powi(3)]),
            |x| Ok(LinearSystem::Dense(DMatrix::from_element(1, 1, 3.0 * (x[0] - 2.0).powi(2)))),
            vec![2.4],
            &cfg,
            |x| x[0] > 1.9 && x[0] < 2.5,
        )
        .unwrap_or_else(|e| match e {
            Error::NoConvergence(f) => (f.best, f.report),
            e => panic!("{e}"),
        });
        assert!(x[0] > 1.9 && x[0] < 2.5);
        let _ = rep;
    }

    #[test]
    fn stall_when_nothing_is_admissible() {
        let err = damped_newton(
            |x| Ok(vec![x[0] - 10.0]),
            |_| Ok(LinearSystem::Dense(DMatrix::from_element(1, 1, 1.0))),
            vec![0.0],
            &NewtonConfig::default(),
            |x| x[0] == 0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::AdmissibilityStall { .. }));
    }

    #[test]
    fn singular_jacobian() {
        let err = damped_newton(
            |x| Ok(vec![x[0] - 1.0]),
            |_| Ok(LinearSystem::Dense(DMatrix::zeros(1, 1))),
            vec![0.0],
            &NewtonConfig::default(),
            |_| true,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularJacobian));
    }
}
