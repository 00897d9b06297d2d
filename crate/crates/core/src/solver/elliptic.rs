//! `(a_ij) u - κ Δ_h u = f` on interior nodes with Dirichlet data on the frame.
//!
//! Right-hand sides are full node arrays: interior entries hold `f`, boundary
//! entries hold the Dirichlet values of the solution.

use nalgebra::DMatrix;
use ndarray::Array2;

use super::solve_dense;
use crate::error::{Error, Result};
use crate::grid::RefGrid2D;

/// Largest grid (cells per direction) accepted by the dense path.
const DENSE_LIMIT: usize = 32;

pub fn solve_screened_laplacian_2d(
    diag: &Array2<f64>,
    kappa: f64,
    rhs_x: &Array2<f64>,
    rhs_y: &Array2<f64>,
    grid: &RefGrid2D,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (x, y) = rayon::join(
        || solve_screened_with_guess(diag, kappa, rhs_x, None, grid),
        || solve_screened_with_guess(diag, kappa, rhs_y, None, grid),
    );
    Ok((x?, y?))
}

/// Operator applied at interior nodes; boundary entries of the result are zero.
pub fn apply_screened_laplacian_2d(diag: &Array2<f64>, kappa: f64, u: &Array2<f64>, grid: &RefGrid2D) -> Array2<f64> {
    let (ix, iy) = (1.0 / grid.hx().powi(2), 1.0 / grid.hy().powi(2));
    let mut out = Array2::zeros(grid.shape());
    for i in 1..grid.my {
        for j in 1..grid.mx {
            let c = u[[i, j]];
            let lap = (u[[i, j + 1]] - 2.0 * c + u[[i, j - 1]]) * ix + (u[[i + 1, j]] - 2.0 * c + u[[i - 1, j]]) * iy;
            out[[i, j]] = diag[[i, j]] * c - kappa * lap;
        }
    }
    out
}

struct Interior {
    nx: usize,
    ny: usize,
}

impl Interior {
    fn idx(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.nx + (j - 1)
    }
    fn len(&self) -> usize {
        self.nx * self.ny
    }
}

/// Right-hand side with the Dirichlet frame folded in.
fn interior_rhs(kappa: f64, rhs: &Array2<f64>, g: &RefGrid2D, n: &Interior) -> Vec<f64> {
    let (ix, iy) = (1.0 / g.hx().powi(2), 1.0 / g.hy().powi(2));
    let mut b = vec![0.0; n.len()];
    for i in 1..g.my {
        for j in 1..g.mx {
            let mut v = rhs[[i, j]];
            if j == 1 {
                v += kappa * ix * rhs[[i, 0]];
            }
            if j + 1 == g.mx {
                v += kappa * ix * rhs[[i, g.mx]];
            }
            if i == 1 {
                v += kappa * iy * rhs[[0, j]];
            }
            if i + 1 == g.my {
                v += kappa * iy * rhs[[g.my, j]];
            }
            b[n.idx(i, j)] = v;
        }
    }
    b
}

fn apply_interior(diag: &Array2<f64>, kappa: f64, g: &RefGrid2D, n: &Interior, u: &[f64], out: &mut [f64]) {
    let (ix, iy) = (kappa / g.hx().powi(2), kappa / g.hy().powi(2));
    for i in 1..g.my {
        for j in 1..g.mx {
            let k = n.idx(i, j);
            let c = u[k];
            let mut s = (diag[[i, j]] + 2.0 * ix + 2.0 * iy) * c;
            if j > 1 {
                s -= ix * u[k - 1];
            }
            if j + 1 < g.mx {
                s -= ix * u[k + 1];
            }
            if i > 1 {
                s -= iy * u[k - n.nx];
            }
            if i + 1 < g.my {
                s -= iy * u[k + n.nx];
            }
            out[k] = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Jacobi-preconditioned conjugate gradients, optionally warm-started.
pub(crate) fn solve_screened_with_guess(
    diag: &Array2<f64>,
    kappa: f64,
    rhs: &Array2<f64>,
    guess: Option<&Array2<f64>>,
    g: &RefGrid2D,
) -> Result<Array2<f64>> {
    if !(kappa > 0.0) && diag.iter().any(|d| *d <= 0.0) {
        return Err(Error::InvalidInput("screened operator is not definite".into()));
    }
    let n = Interior { nx: g.mx - 1, ny: g.my - 1 };
    let b = interior_rhs(kappa, rhs, g, &n);
    let (ix, iy) = (kappa / g.hx().powi(2), kappa / g.hy().powi(2));
    let precond: Vec<f64> = (1..g.my)
        .flat_map(|i| (1..g.mx).map(move |j| (i, j)))
        .map(|(i, j)| 1.0 / (diag[[i, j]] + 2.0 * ix + 2.0 * iy))
        .collect();

    let mut u = vec![0.0; n.len()];
    if let Some(x0) = guess {
        for i in 1..g.my {
            for j in 1..g.mx {
                u[n.idx(i, j)] = x0[[i, j]];
            }
        }
    }
    let tol = 1e-11 * (inf_norm(rhs.as_slice().unwrap_or(&b)) + 1.0);
    let mut au = vec![0.0; n.len()];
    apply_interior(diag, kappa, g, &n, &u, &mut au);
    let mut r: Vec<f64> = b.iter().zip(&au).map(|(p, q)| p - q).collect();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(p, q)| p * q).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let cap = 10 * g.mx * g.my;
    let mut it = 0;
    while inf_norm(&r) > tol {
        if it == cap {
            return Err(Error::SolverBreakdown { iterations: it, residual: inf_norm(&r) });
        }
        apply_interior(diag, kappa, g, &n, &p, &mut au);
        let pap = dot(&p, &au);
        if !(pap > 0.0) {
            return Err(Error::SolverBreakdown { iterations: it, residual: inf_norm(&r) });
        }
        let a = rz / pap;
        for k in 0..u.len() {
            u[k] += a * p[k];
            r[k] -= a * au[k];
        }
        for k in 0..z.len() {
            z[k] = r[k] * precond[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
        it += 1;
    }

    let mut out = rhs.clone();
    for i in 1..g.my {
        for j in 1..g.mx {
            out[[i, j]] = u[n.idx(i, j)];
        }
    }
    Ok(out)
}

/// Direct dense solve, kept as a reference for small grids.
pub fn solve_screened_laplacian_2d_dense(
    diag: &Array2<f64>,
    kappa: f64,
    rhs: &Array2<f64>,
    grid: &RefGrid2D,
) -> Result<Array2<f64>> {
    if grid.mx > DENSE_LIMIT || grid.my > DENSE_LIMIT {
        return Err(Error::Unsupported(format!("dense elliptic solve is limited to {DENSE_LIMIT} cells per side")));
    }
    let n = Interior { nx: grid.mx - 1, ny: grid.my - 1 };
    let mut a = DMatrix::zeros(n.len(), n.len());
    let mut e = vec![0.0; n.len()];
    let mut col = vec![0.0; n.len()];
    for k in 0..n.len() {
        e[k] = 1.0;
        apply_interior(diag, kappa, grid, &n, &e, &mut col);
        for (r, v) in col.iter().enumerate() {
            a[(r, k)] = *v;
        }
        e[k] = 0.0;
    }
    let b = interior_rhs(kappa, rhs, grid, &n);
    let u = solve_dense(&a, &b)?;
    let mut out = rhs.clone();
    for i in 1..grid.my {
        for j in 1..grid.mx {
            out[[i, j]] = u[n.idx(i, j)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_gives_zero() {
        let g = RefGrid2D::new(1.0, 1.0, 8, 8).unwrap();
        let diag = Array2::from_elem(g.shape(), 1.0);
        let z = Array2::zeros(g.shape());
        let (x, y) = solve_screened_laplacian_2d(&diag, 0.01, &z, &z, &g).unwrap();
        assert!(x.iter().chain(y.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn manufactured_field_is_recovered() {
        let g = RefGrid2D::new(1.0, 1.5, 20, 24).unwrap();
        let diag = Array2::from_elem(g.shape(), 1.0);
        let u = Array2::from_shape_fn(g.shape(), |(i, j)| (g.x_node(j) * 2.0).sin() * (1.0 + g.y_node(i).powi(2)));
        let mut rhs = apply_screened_laplacian_2d(&diag, 0.01, &u, &g);
        for ((i, j), v) in rhs.indexed_iter_mut() {
            if !g.is_interior(i, j) {
                *v = u[[i, j]];
            }
        }
        let (x, _) = solve_screened_laplacian_2d(&diag, 0.01, &rhs, &rhs, &g).unwrap();
        for (a, b) in x.iter().zip(u.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
