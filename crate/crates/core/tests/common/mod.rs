//! Independent reference computations shared by the oracle and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use wgflow::energy::{
    discrete_energy_1d, energy_gradient_1d, energy_jacobian_1d, internal_energy_2d, internal_energy_gradient_2d,
    internal_energy_hessian_2d, CouplingVariant, EnergyModel, KernelKind, Level1D, Potential,
};
use wgflow::exact::adaptive_simpson;
use wgflow::grid::{DensityField1D, DensityField2D, FlowMap1D, FlowMap2D, RefGrid1D, RefGrid2D};
use wgflow::scheme1d::{step_1d, SchemeConfig1D, StepState1D};
use wgflow::scheme2d::{step_2d, Mode2D, SchemeConfig2D, StepState2D};
use wgflow::solver::{solve_screened_laplacian_2d, solve_screened_laplacian_2d_dense, solve_tridiagonal};

pub type Check = Result<(), String>;

/// Every 1D model the implicit scheme accepts.
pub fn models_1d() -> Vec<EnergyModel> {
    let mut v = vec![
        EnergyModel::PorousMedium { m: 2.0 },
        EnergyModel::PorousMedium { m: 2.5 },
        EnergyModel::LinearFpLog { drift: Potential::OneWell },
        EnergyModel::NonlinearFp { m: 2.0, drift: Potential::OneWell },
        EnergyModel::NonlinearFp { m: 3.0, drift: Potential::DoubleWell },
        EnergyModel::KellerSegel1D,
    ];
    for coupling in [
        CouplingVariant::ImplicitExplicit,
        CouplingVariant::ExplicitImplicit,
        CouplingVariant::ImplicitImplicit,
        CouplingVariant::FullyExplicit,
    ] {
        v.push(EnergyModel::Aggregation1D { kernel: KernelKind::QuadraticMinusLog, coupling });
    }
    v
}

pub fn models_2d() -> Vec<EnergyModel> {
    vec![
        EnergyModel::PorousMedium2D { m: 2.0 },
        EnergyModel::PorousMedium2D { m: 3.5 },
        EnergyModel::AggregationDiffusion2D { m: 3.0, nu: 0.1, kernel: KernelKind::GaussianAttraction2D },
        EnergyModel::KellerSegel2D { m: 1.0, nu: 1.0 },
    ]
}

/// Map on `[-1, 1]` with interior nodes moved by `shift[j] * δX / 4`.
pub fn perturbed_line(shift: &[f64]) -> FlowMap1D {
    let n = shift.len() + 1;
    let grid = RefGrid1D::new(-1.0, 1.0, n).unwrap();
    let dx = grid.delta_x();
    let mut x = grid.nodes();
    for (j, s) in shift.iter().enumerate() {
        x[j + 1] += 0.25 * dx * s;
    }
    FlowMap1D::new(grid, x).unwrap()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = max_abs(b.iter().copied()).max(1.0);
    max_abs(a.iter().zip(b).map(|(p, q)| p - q)) / scale
}

/// Central difference of `f` in each interior coordinate.
fn fd_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (1..x.len() - 1)
        .map(|j| {
            y[j] = x[j] + h;
            let up = f(&y);
            y[j] = x[j] - h;
            let down = f(&y);
            y[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Gradient and Jacobian of a 1D model against central differences.
///
/// `shift` moves the current nodes, `prev_shift` the previous level (used by
/// the interaction models), `rho` is the cell density.
pub fn check_derivatives_1d(model: &EnergyModel, shift: &[f64], prev_shift: &[f64], rho: &[f64]) -> Check {
    let map = perturbed_line(shift);
    let prev = perturbed_line(prev_shift);
    let rho0 = DensityField1D::from_cells(rho.to_vec());
    let prev_rho: Vec<f64> = rho
        .iter()
        .enumerate()
        .map(|(j, r)| r * map.grid.delta_x() / prev.cell_length(j))
        .collect();
    let level = Some(Level1D { positions: &prev.positions, rho: &prev_rho });
    let h = 1e-6 * map.grid.delta_x();
    let energy = |x: &[f64]| {
        let m = FlowMap1D::new(map.grid, x.to_vec()).unwrap();
        discrete_energy_1d(&m, &rho0, model, level).unwrap()
    };
    let gradient = |x: &[f64]| {
        let m = FlowMap1D::new(map.grid, x.to_vec()).unwrap();
        energy_gradient_1d(&m, &rho0, model, level).unwrap()
    };
    let g = energy_gradient_1d(&map, &rho0, model, level).map_err(|e| e.to_string())?;
    if model.is_variational() {
        let fd = fd_gradient(&map.positions, h, energy);
        let gap = rel_gap(&g, &fd);
        if gap > 1e-5 {
            return Err(format!("{model:?}: gradient differs from differences by {gap:.3e}"));
        }
    }
    let jac = energy_jacobian_1d(&map, &rho0, model, level).map_err(|e| e.to_string())?.to_dense();
    let n = g.len();
    let mut y = map.positions.clone();
    let mut worst: f64 = 0.0;
    let scale = jac.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for j in 0..n {
        y[j + 1] = map.positions[j + 1] + h;
        let up = gradient(&y);
        y[j + 1] = map.positions[j + 1] - h;
        let down = gradient(&y);
        y[j + 1] = map.positions[j + 1];
        for i in 0..n {
            let fd = (up[i] - down[i]) / (2.0 * h);
            worst = worst.max((jac[(i, j)] - fd).abs() / scale);
        }
    }
    if worst > 1e-4 {
        return Err(format!("{model:?}: Jacobian differs from differences by {worst:.3e}"));
    }
    Ok(())
}

/// Planar map on `[-1, 1]²` with interior nodes displaced by `shift * h / 5`.
pub fn perturbed_plane(mx: usize, my: usize, shift: &[(f64, f64)]) -> FlowMap2D {
    let grid = RefGrid2D::new(1.0, 1.0, mx, my).unwrap();
    let mut map = FlowMap2D::identity(grid);
    let mut k = 0;
    for i in 1..my {
        for j in 1..mx {
            let (a, b) = shift[k % shift.len()];
            map.x[[i, j]] += 0.2 * grid.hx() * a;
            map.y[[i, j]] += 0.2 * grid.hy() * b;
            k += 1;
        }
    }
    map
}

/// Internal-energy gradient and Hessian of a planar model against differences.
pub fn check_derivatives_2d(model: &EnergyModel, map: &FlowMap2D, rho0: &DensityField2D) -> Check {
    let g = map.grid;
    let h = 1e-6 * g.hx();
    let energy = |m: &FlowMap2D| internal_energy_2d(m, rho0, model).unwrap();
    let (gx, gy) = internal_energy_gradient_2d(map, rho0, model).map_err(|e| e.to_string())?;
    let hess = internal_energy_hessian_2d(map, rho0, model).map_err(|e| e.to_string())?;
    let interior: Vec<(usize, usize)> = (1..g.my).flat_map(|i| (1..g.mx).map(move |j| (i, j))).collect();
    let n = interior.len();
    let mut analytic = Vec::with_capacity(2 * n);
    analytic.extend(interior.iter().map(|&p| gx[p]));
    analytic.extend(interior.iter().map(|&p| gy[p]));

    let moved = |k: usize, d: f64| {
        let mut m = map.clone();
        let p = interior[k % n];
        if k < n {
            m.x[p] += d;
        } else {
            m.y[p] += d;
        }
        m
    };
    let fd: Vec<f64> = (0..2 * n).map(|k| (energy(&moved(k, h)) - energy(&moved(k, -h))) / (2.0 * h)).collect();
    let gap = rel_gap(&analytic, &fd);
    if gap > 1e-5 {
        return Err(format!("{model:?}: planar gradient differs from differences by {gap:.3e}"));
    }

    let grad_vec = |m: &FlowMap2D| {
        let (a, b) = internal_energy_gradient_2d(m, rho0, model).unwrap();
        let mut v: Vec<f64> = interior.iter().map(|&p| a[p]).collect();
        v.extend(interior.iter().map(|&p| b[p]));
        v
    };
    let scale = hess.iter().fold(1e-300_f64, |a, v| a.max(v.abs()));
    let mut worst: f64 = 0.0;
    for k in 0..2 * n {
        let up = grad_vec(&moved(k, h));
        let down = grad_vec(&moved(k, -h));
        for r in 0..2 * n {
            worst = worst.max((hess[(r, k)] - (up[r] - down[r]) / (2.0 * h)).abs() / scale);
        }
    }
    if worst > 1e-4 {
        return Err(format!("{model:?}: planar Hessian differs from differences by {worst:.3e}"));
    }
    Ok(())
}

/// Thomas elimination against a dense LU of the same matrix.
pub fn check_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Check {
    let n = diag.len();
    let x = solve_tridiagonal(lower, diag, upper, rhs).map_err(|e| e.to_string())?;
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i == j + 1 {
            lower[j]
        } else if j == i + 1 {
            upper[i]
        } else {
            0.0
        }
    });
    let y = a.lu().solve(&DVector::from_column_slice(rhs)).ok_or("dense oracle is singular")?;
    let gap = rel_gap(&x, y.as_slice());
    if gap > 1e-10 {
        return Err(format!("tridiagonal solve differs from dense LU by {gap:.3e}"));
    }
    Ok(())
}

/// Iterative screened-Laplacian solve against the assembled dense system.
pub fn check_screened(mx: usize, my: usize, diag: &Array2<f64>, kappa: f64, rhs: &Array2<f64>) -> Check {
    let grid = RefGrid2D::new(1.5, 1.0, mx, my).unwrap();
    let (u, _) = solve_screened_laplacian_2d(diag, kappa, rhs, rhs, &grid).map_err(|e| e.to_string())?;
    let v = solve_screened_laplacian_2d_dense(diag, kappa, rhs, &grid).map_err(|e| e.to_string())?;
    let a: Vec<f64> = u.iter().copied().collect();
    let b: Vec<f64> = v.iter().copied().collect();
    let gap = rel_gap(&a, &b);
    if gap > 1e-10 {
        return Err(format!("screened solve differs from dense solve by {gap:.3e}"));
    }
    Ok(())
}

/// Closed-form cell integral of the kernel against adaptive quadrature on `[a, b]`.
pub fn check_primitive(kernel: KernelKind, a: f64, b: f64) -> Check {
    let closed = kernel.primitive(b).map_err(|e| e.to_string())? - kernel.primitive(a).map_err(|e| e.to_string())?;
    let f = |t: f64| kernel.value(t).unwrap();
    let quad = adaptive_simpson(&f, a, b, 1e-13);
    if (closed - quad).abs() > 1e-10 {
        return Err(format!("{kernel:?} on [{a}, {b}]: primitive {closed} vs quadrature {quad}"));
    }
    Ok(())
}

/// One step from a stationary state must return it to round-off.
pub fn check_fixed_points() -> Check {
    let grid = RefGrid1D::new(-1.0, 1.0, 40).unwrap();
    for cfg in [SchemeConfig1D::new(0.01), SchemeConfig1D::unregularized(0.01), SchemeConfig1D::crank_nicolson(0.01)] {
        let state = StepState1D::initial(grid, DensityField1D::uniform(&grid, 0.7)).unwrap();
        let (next, _) = step_1d(&state, &EnergyModel::PorousMedium { m: 2.0 }, &cfg).map_err(|e| e.to_string())?;
        let gap = max_abs(next.map.positions.iter().zip(&state.map.positions).map(|(a, b)| a - b));
        if gap > 1e-13 {
            return Err(format!("1D uniform state moved by {gap:.3e} ({cfg:?})"));
        }
    }
    let grid = RefGrid2D::new(1.0, 1.0, 12, 10).unwrap();
    for mode in [Mode2D::Explicit, Mode2D::Implicit] {
        let rho0 = DensityField2D { values: Array2::from_elem(grid.shape(), 0.5) };
        let state = StepState2D::initial(grid, rho0).map_err(|e| e.to_string())?;
        let cfg = SchemeConfig2D { mode, ..SchemeConfig2D::new(0.01) };
        let (next, _) = step_2d(&state, &EnergyModel::PorousMedium2D { m: 2.0 }, &cfg).map_err(|e| e.to_string())?;
        let gap = max_abs(
            next.map.x.iter().zip(&state.map.x).chain(next.map.y.iter().zip(&state.map.y)).map(|(a, b)| a - b),
        );
        if gap > 1e-13 {
            return Err(format!("planar uniform state moved by {gap:.3e} ({mode:?})"));
        }
    }
    Ok(())
}
