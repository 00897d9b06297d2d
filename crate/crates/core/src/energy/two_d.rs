use nalgebra::DMatrix;
use ndarray::{s, Array2};
use rayon::prelude::*;

use super::{EnergyModel, KernelKind};
use crate::error::{Error, Result};
use crate::grid::{det_at, det_scale, neighbours, DensityField2D, FlowMap2D, RefGrid2D};

/// Map and node densities of the previous time level.
#[derive(Debug, Clone, Copy)]
pub struct Level2D<'a> {
    pub map: &'a FlowMap2D,
    pub rho: &'a DensityField2D,
}

fn check_model(model: &EnergyModel) -> Result<()> {
    if model.dimension() != 2 {
        return Err(Error::Unsupported("a 1D model was given a planar map".into()));
    }
    Ok(())
}

/// Determinants on all nodes, failing on the first non-positive one.
fn positive_determinants(x: &Array2<f64>, y: &Array2<f64>, g: &RefGrid2D) -> Result<Array2<f64>> {
    let mut dets = Array2::zeros(g.shape());
    for i in 0..=g.my {
        for j in 0..=g.mx {
            let d = det_at(x, y, g, i, j);
            if !(d > 0.0) {
                return Err(Error::MapDistorted { i, j, det: d });
            }
            dets[[i, j]] = d;
        }
    }
    Ok(dets)
}

/// `ν P(ρ0 / F)` on all nodes.
pub(crate) fn pressure_2d(rho0: &Array2<f64>, dets: &Array2<f64>, model: &EnergyModel) -> Array2<f64> {
    let u = model.internal();
    let nu = model.diffusion();
    Array2::from_shape_fn(rho0.dim(), |(i, j)| nu * u.pressure(rho0[[i, j]] / dets[[i, j]]))
}

fn quad_area(x: &Array2<f64>, y: &Array2<f64>, i: usize, j: usize) -> f64 {
    // corners of cell (i, j)..(i+1, j+1), counter-clockwise
    let p = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)];
    let mut a = 0.0;
    for k in 0..4 {
        let (p0, p1) = (p[k], p[(k + 1) % 4]);
        a += x[p0] * y[p1] - x[p1] * y[p0];
    }
    0.5 * a
}

/// Area attributed to each node: mean of the four adjacent cells inside,
/// `h_x h_y` on the frame.
pub fn control_volumes_2d(map: &FlowMap2D) -> Array2<f64> {
    let g = map.grid;
    let base = g.hx() * g.hy();
    let (x, y) = (&map.x, &map.y);
    Array2::from_shape_fn(g.shape(), |(i, j)| {
        if g.is_interior(i, j) {
            0.25 * (quad_area(x, y, i - 1, j - 1) + quad_area(x, y, i - 1, j) + quad_area(x, y, i, j - 1) + quad_area(x, y, i, j))
        } else {
            base
        }
    })
}

/// `ρ0_n Σ_{p≠n} ρ_p V_p ∇W(x_n - x_p)` at interior nodes, everything at the given level.
pub(crate) fn interaction_force_2d(
    kernel: KernelKind,
    rho0: &Array2<f64>,
    level: Level2D,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let g = level.map.grid;
    let vol = control_volumes_2d(level.map);
    let (x, y) = (&level.map.x, &level.map.y);
    let sources: Vec<(f64, f64, f64)> = level
        .rho
        .values
        .indexed_iter()
        .filter(|(_, r)| **r != 0.0)
        .map(|((i, j), r)| (x[[i, j]], y[[i, j]], r * vol[[i, j]]))
        .collect();
    let targets: Vec<(usize, usize)> = (1..g.my).flat_map(|i| (1..g.mx).map(move |j| (i, j))).collect();
    let forces: Vec<(f64, f64)> = targets
        .par_iter()
        .map(|&(i, j)| {
            let r0 = rho0[[i, j]];
            if r0 == 0.0 {
                return Ok((0.0, 0.0));
            }
            let (xn, yn) = (x[[i, j]], y[[i, j]]);
            let (mut fx, mut fy) = (0.0, 0.0);
            for &(xp, yp, m) in &sources {
                if xp == xn && yp == yn {
                    continue;
                }
                let (gx, gy) = kernel.gradient_2d(xn - xp, yn - yp)?;
                fx += m * gx;
                fy += m * gy;
            }
            Ok((r0 * fx, r0 * fy))
        })
        .collect::<Result<_>>()?;
    let mut fx = Array2::zeros(g.shape());
    let mut fy = Array2::zeros(g.shape());
    for (&(i, j), (a, b)) in targets.iter().zip(forces) {
        fx[[i, j]] = a;
        fy[[i, j]] = b;
    }
    Ok((fx, fy))
}

/// `Ē_h = Σ w_n U(ρ0_n / F_n) F_n h_x h_y` (trapezoid weights `w_n`)
/// plus `½ Σ_{p≠n} M_n M_p W(x_n - x_p)` with `M = ρ0 h_x h_y`.
pub fn energy_2d(map: &FlowMap2D, rho0: &DensityField2D, model: &EnergyModel) -> Result<f64> {
    let mut e = internal_energy_2d(map, rho0, model)?;
    let area = map.grid.hx() * map.grid.hy();
    if let Some((kernel, _)) = model.interaction() {
        let pts: Vec<(f64, f64, f64)> = rho0
            .values
            .indexed_iter()
            .filter(|(_, r)| **r != 0.0)
            .map(|((i, j), r)| (map.x[[i, j]], map.y[[i, j]], r * area))
            .collect();
        let pair: f64 = (0..pts.len())
            .into_par_iter()
            .map(|n| {
                let (xn, yn, mn) = pts[n];
                let mut s = 0.0;
                for &(xp, yp, mp) in &pts[n + 1..] {
                    s += mp * kernel.value_2d(((xn - xp).powi(2) + (yn - yp).powi(2)).sqrt())?;
                }
                Ok(mn * s)
            })
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        e += pair;
    }
    Ok(e)
}

/// Internal part of [`energy_2d`].
pub fn internal_energy_2d(map: &FlowMap2D, rho0: &DensityField2D, model: &EnergyModel) -> Result<f64> {
    check_model(model)?;
    let g = map.grid;
    let area = g.hx() * g.hy();
    let dets = positive_determinants(&map.x, &map.y, &g)?;
    let u = model.internal();
    let nu = model.diffusion();
    let mut e = 0.0;
    for ((i, j), r0) in rho0.values.indexed_iter() {
        let f = dets[[i, j]];
        e += g.trapezoid_weight(i, j) * nu * u.density(r0 / f) * f * area;
    }
    Ok(e)
}

/// Variational derivative of the energy (partial derivatives per unit label
/// area) at interior nodes, as `(my-1) x (mx-1)` arrays.
///
/// Diffusion uses central differences of `ν P(ρ0/F)`; the interaction part is
/// evaluated at the supplied previous level.
pub fn energy_gradient_2d(
    map: &FlowMap2D,
    rho0: &DensityField2D,
    model: &EnergyModel,
    prev: Option<Level2D>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_model(model)?;
    let g = map.grid;
    let dets = positive_determinants(&map.x, &map.y, &g)?;
    let p = pressure_2d(&rho0.values, &dets, model);
    let (hx2, hy2) = (2.0 * g.hx(), 2.0 * g.hy());
    let mut gx = Array2::from_shape_fn((g.my - 1, g.mx - 1), |(a, b)| {
        let (i, j) = (a + 1, b + 1);
        (p[[i, j + 1]] - p[[i, j - 1]]) / hx2
    });
    let mut gy = Array2::from_shape_fn((g.my - 1, g.mx - 1), |(a, b)| {
        let (i, j) = (a + 1, b + 1);
        (p[[i + 1, j]] - p[[i - 1, j]]) / hy2
    });
    if let Some((kernel, _)) = model.interaction() {
        let level = prev.ok_or(Error::MissingPrevState)?;
        let (fx, fy) = interaction_force_2d(kernel, &rho0.values, level)?;
        gx += &fx.slice(s![1..g.my, 1..g.mx]);
        gy += &fy.slice(s![1..g.my, 1..g.mx]);
    }
    Ok((gx, gy))
}

type MixedEntry = ((usize, usize), (usize, usize), f64);

/// Stencil of the central determinant at node `(i, j)`:
/// `F = s [(xE - xW)(yN - yS) - (yE - yW)(xN - xS)]`.
struct Stencil {
    s: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    nb: [(usize, usize); 4],
}

impl Stencil {
    fn at(x: &Array2<f64>, y: &Array2<f64>, g: &RefGrid2D, i: usize, j: usize) -> Self {
        let nb = neighbours(g, i, j);
        let [e, w, n, so] = nb;
        Self { s: det_scale(g, i, j), a: x[e] - x[w], d: y[n] - y[so], c: y[e] - y[w], b: x[n] - x[so], nb }
    }

    /// `(node, coordinate (0 = x, 1 = y), ∂F/∂·)` for the eight entries.
    fn first(&self) -> [((usize, usize), usize, f64); 8] {
        let Stencil { s, a, b, c, d, nb: [e, w, n, so] } = *self;
        [
            (e, 0, d * s),
            (w, 0, -d * s),
            (n, 0, -c * s),
            (so, 0, c * s),
            (n, 1, a * s),
            (so, 1, -a * s),
            (e, 1, -b * s),
            (w, 1, b * s),
        ]
    }

    /// Nonzero mixed second derivatives, each listed once as `(x-node, y-node, value)`.
    fn second(&self) -> [MixedEntry; 8] {
        let s = self.s;
        let [e, w, n, so] = self.nb;
        [(e, n, s), (e, so, -s), (w, n, -s), (w, so, s), (n, e, -s), (so, e, s), (n, w, s), (so, w, -s)]
    }
}

/// Exact partial derivatives of the internal part of [`energy_2d`] (not
/// scaled by the label area); boundary entries are zero.
///
/// Every node contributes through its determinant stencil, so frame nodes
/// push on their interior neighbours.
pub(crate) fn internal_gradient_exact_2d(
    x: &Array2<f64>,
    y: &Array2<f64>,
    rho0: &Array2<f64>,
    model: &EnergyModel,
    g: &RefGrid2D,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let dets = positive_determinants(x, y, g)?;
    let area = g.hx() * g.hy();
    let p = pressure_2d(rho0, &dets, model);
    let mut gr = [Array2::zeros(g.shape()), Array2::zeros(g.shape())];
    for i in 0..=g.my {
        for j in 0..=g.mx {
            let dg = -g.trapezoid_weight(i, j) * p[[i, j]] * area;
            if dg == 0.0 {
                continue;
            }
            for (node, k, v) in Stencil::at(x, y, g, i, j).first() {
                if g.is_interior(node.0, node.1) {
                    gr[k][node] += dg * v;
                }
            }
        }
    }
    let [gx, gy] = gr;
    Ok((gx, gy))
}

/// Partial derivatives of [`internal_energy_2d`] with respect to every node;
/// frame entries are zero.
pub fn internal_energy_gradient_2d(
    map: &FlowMap2D,
    rho0: &DensityField2D,
    model: &EnergyModel,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_model(model)?;
    internal_gradient_exact_2d(&map.x, &map.y, &rho0.values, model, &map.grid)
}

/// Hessian of [`internal_energy_2d`] in the unknowns `[x interior, y interior]`,
/// both blocks row-major over interior nodes.
pub fn internal_energy_hessian_2d(map: &FlowMap2D, rho0: &DensityField2D, model: &EnergyModel) -> Result<DMatrix<f64>> {
    check_model(model)?;
    internal_hessian_exact_2d(&map.x, &map.y, &rho0.values, model, &map.grid)
}

/// Index of interior node `(i, j)` and coordinate `k` in the unknown vector
/// `[x interior (row-major), y interior]`.
pub(crate) fn unknown_index(g: &RefGrid2D, i: usize, j: usize, k: usize) -> usize {
    let n = (g.mx - 1) * (g.my - 1);
    k * n + (i - 1) * (g.mx - 1) + (j - 1)
}

/// Exact Hessian of the internal part of [`energy_2d`] with respect to the
/// interior unknowns, ordered as in [`unknown_index`].
pub(crate) fn internal_hessian_exact_2d(
    x: &Array2<f64>,
    y: &Array2<f64>,
    rho0: &Array2<f64>,
    model: &EnergyModel,
    g: &RefGrid2D,
) -> Result<DMatrix<f64>> {
    let dets = positive_determinants(x, y, g)?;
    let area = g.hx() * g.hy();
    let u = model.internal();
    let nu = model.diffusion();
    let n = 2 * (g.mx - 1) * (g.my - 1);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..=g.my {
        for j in 0..=g.mx {
            let f = dets[[i, j]];
            let rho = rho0[[i, j]] / f;
            let w = g.trapezoid_weight(i, j) * nu * area;
            let d1 = -w * u.pressure(rho);
            let d2 = w * u.pressure_slope(rho) / f;
            if d1 == 0.0 && d2 == 0.0 {
                continue;
            }
            let st = Stencil::at(x, y, g, i, j);
            let first: Vec<(usize, f64)> = st
                .first()
                .iter()
                .filter(|(node, _, _)| g.is_interior(node.0, node.1))
                .map(|&(node, k, v)| (unknown_index(g, node.0, node.1, k), v))
                .collect();
            for &(p, vp) in &first {
                for &(q, vq) in &first {
                    h[(p, q)] += d2 * vp * vq;
                }
            }
            for (nx, ny, v) in st.second() {
                if g.is_interior(nx.0, nx.1) && g.is_interior(ny.0, ny.1) {
                    let p = unknown_index(g, nx.0, nx.1, 0);
                    let q = unknown_index(g, ny.0, ny.1, 1);
                    h[(p, q)] += d1 * v;
                    h[(q, p)] += d1 * v;
                }
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pme() -> EnergyModel {
        EnergyModel::PorousMedium2D { m: 2.0 }
    }

    #[test]
    fn uniform_density_energy_is_area() {
        let g = RefGrid2D::new(1.0, 1.0, 8, 8).unwrap();
        let map = FlowMap2D::identity(g);
        let rho0 = DensityField2D::sample(&g, |_, _| 1.0);
        assert!((energy_2d(&map, &rho0, &pme()).unwrap() - 4.0).abs() < 1e-12);
        let (gx, gy) = energy_gradient_2d(&map, &rho0, &pme(), None).unwrap();
        assert!(gx.iter().chain(gy.iter()).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_density_has_zero_energy() {
        let g = RefGrid2D::new(1.0, 1.0, 6, 6).unwrap();
        let rho0 = DensityField2D::sample(&g, |_, _| 0.0);
        assert_eq!(energy_2d(&FlowMap2D::identity(g), &rho0, &pme()).unwrap(), 0.0);
    }

    #[test]
    fn control_volumes_of_identity() {
        let g = RefGrid2D::new(1.0, 2.0, 4, 5).unwrap();
        let v = control_volumes_2d(&FlowMap2D::identity(g));
        assert!(v.iter().all(|a| (a - g.hx() * g.hy()).abs() < 1e-14));
    }

    #[test]
    fn exact_gradient_matches_differences() {
        let g = RefGrid2D::new(1.0, 1.0, 6, 5).unwrap();
        let mut map = FlowMap2D::identity(g);
        for ((i, j), v) in map.x.indexed_iter_mut() {
            if g.is_interior(i, j) {
                *v += 0.02 * ((i * 7 + j * 3) as f64).sin();
            }
        }
        let rho0 = DensityField2D::sample(&g, |x, y| 1.0 + 0.3 * x - 0.2 * y * y);
        let model = EnergyModel::PorousMedium2D { m: 2.5 };
        let (gx, gy) = internal_gradient_exact_2d(&map.x, &map.y, &rho0.values, &model, &g).unwrap();
        let h = 1e-6;
        for (i, j) in [(1, 1), (2, 3), (4, 5)] {
            let mut plus = map.clone();
            plus.y[[i, j]] += h;
            let mut minus = map.clone();
            minus.y[[i, j]] -= h;
            let fd = (energy_2d(&plus, &rho0, &model).unwrap() - energy_2d(&minus, &rho0, &model).unwrap()) / (2.0 * h);
            assert!((fd - gy[[i, j]]).abs() < 1e-7 * (1.0 + fd.abs()), "{fd} {}", gy[[i, j]]);
            let _ = gx[[i, j]];
        }
    }
}
