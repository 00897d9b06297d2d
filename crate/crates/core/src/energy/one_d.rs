use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{CouplingVariant, EnergyModel, Internal, KernelKind, SINGULAR_SEPARATION};
use crate::error::{Error, Result};
use crate::grid::{DensityField1D, FlowMap1D};
use crate::solver::{LinearSystem, Tridiagonal};

/// Positions and cell densities of the previous time level.
#[derive(Debug, Clone, Copy)]
pub struct Level1D<'a> {
    pub positions: &'a [f64],
    pub rho: &'a [f64],
}

/// Discrete energy of a 1D model, evaluated on full node vectors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Energy1D<'a> {
    pub model: EnergyModel,
    pub dx: f64,
    pub rho0: &'a [f64],
    pub prev: Option<Level1D<'a>>,
}

fn midpoints(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

#[derive(Clone, Copy)]
enum Order {
    Primitive,
    Value,
    Slope,
}

fn weighted_sums(centers: &[f64], ends: &[f64], w: &[f64], k: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    centers.par_iter().map(|&c| ends.iter().zip(w).map(|(e, wl)| wl * k(c - e)).sum()).collect()
}

/// Closest approach of a centre to an end; both slices are sorted.
fn nearest_separation(centers: &[f64], ends: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for &c in centers {
        let p = ends.partition_point(|&e| e < c);
        for e in ends[p.saturating_sub(1)..(p + 1).min(ends.len())].iter() {
            if (c - e).abs() < best.abs() {
                best = c - e;
            }
        }
    }
    best
}

/// For each centre `c`: `Σ_j ρ_j [K(c - e_j) - K(c - e_{j+1})]` with `K` the
/// kernel primitive, the kernel or its derivative.
fn cell_sums(kernel: KernelKind, centers: &[f64], ends: &[f64], rho: &[f64], order: Order) -> Result<Vec<f64>> {
    // summed by parts: Σ_l (ρ_l - ρ_{l-1}) K(c - e_l)
    let n = rho.len();
    let w: Vec<f64> = (0..=n)
        .map(|l| if l < n { rho[l] } else { 0.0 } - if l > 0 { rho[l - 1] } else { 0.0 })
        .collect();
    let logarithmic = kernel.is_logarithmic();
    if logarithmic && !matches!(order, Order::Primitive) {
        let sep = nearest_separation(centers, ends);
        if sep.abs() < SINGULAR_SEPARATION {
            return Err(Error::KernelSingularity { separation: sep });
        }
    }
    Ok(match order {
        Order::Primitive => {
            if !logarithmic {
                kernel.primitive(0.0)?;
            }
            weighted_sums(centers, ends, &w, |t| kernel.primitive_unchecked(t))
        }
        Order::Value => weighted_sums(centers, ends, &w, |t| kernel.value_unchecked(t)),
        Order::Slope => weighted_sums(centers, ends, &w, |t| kernel.derivative_unchecked(t)),
    })
}

impl<'a> Energy1D<'a> {
    pub fn new(model: EnergyModel, dx: f64, rho0: &'a [f64], prev: Option<Level1D<'a>>) -> Result<Self> {
        if let Some(p) = prev {
            if p.positions.len() != rho0.len() + 1 || p.rho.len() != rho0.len() {
                return Err(Error::InvalidInput("previous level does not match the grid".into()));
            }
        }
        Ok(Self { model, dx, rho0, prev })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.rho0.len() + 1 {
            return Err(Error::InvalidInput("position vector does not match the grid".into()));
        }
        for (c, w) in x.windows(2).enumerate() {
            if !(w[1] - w[0] > 0.0) {
                return Err(Error::NonAdmissibleMap { cell: c });
            }
        }
        Ok(())
    }

    fn level(&self) -> Result<Level1D<'a>> {
        self.prev.ok_or(Error::MissingPrevState)
    }

    /// Cell energy as a function of the cell length, with its first two derivatives.
    fn cell(&self, c: usize, d: f64) -> (f64, f64, f64) {
        let w = self.rho0[c] * self.dx;
        if w == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        match self.model.internal() {
            Internal::None => (0.0, 0.0, 0.0),
            Internal::Entropy => (w * (w / d).ln(), -w / d, w / (d * d)),
            Internal::Power(m) => {
                let p = (w / d).powf(m);
                (p * d / (m - 1.0), -p, m * p / d)
            }
        }
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let drift = self.model.drift();
        let mut e = 0.0;
        for c in 0..self.rho0.len() {
            let d = x[c + 1] - x[c];
            e += self.cell(c, d).0 + self.rho0[c] * self.dx * drift.value(0.5 * (x[c] + x[c + 1]));
        }
        if let Some((kernel, coupling)) = self.model.interaction() {
            let prev = self.level()?;
            e += match coupling {
                CouplingVariant::FullyExplicit => {
                    let base = self.interaction_energy(kernel, prev.positions, prev)?;
                    let g = self.interaction_gradient(kernel, coupling, prev.positions)?;
                    base + g.iter().zip(x.iter().zip(prev.positions)).map(|(gi, (a, b))| gi * (a - b)).sum::<f64>()
                }
                _ => self.interaction_energy(kernel, x, prev)?,
            };
        }
        Ok(e)
    }

    /// `δX Σ_c ρ0_c Σ_j ρ^k_j ∫_{cell j at level k} W(x̄_c - y) dy`.
    fn interaction_energy(&self, kernel: KernelKind, x: &[f64], prev: Level1D) -> Result<f64> {
        let s = cell_sums(kernel, &midpoints(x), prev.positions, prev.rho, Order::Primitive)?;
        Ok(self.dx * self.rho0.iter().zip(&s).map(|(r, v)| r * v).sum::<f64>())
    }

    fn interaction_gradient(&self, kernel: KernelKind, coupling: CouplingVariant, x: &[f64]) -> Result<Vec<f64>> {
        let prev = self.level()?;
        let (centers, ends) = match coupling {
            CouplingVariant::ImplicitExplicit => (midpoints(x), prev.positions),
            CouplingVariant::ExplicitImplicit => (midpoints(prev.positions), x),
            CouplingVariant::ImplicitImplicit => (midpoints(x), x),
            CouplingVariant::FullyExplicit => (midpoints(prev.positions), prev.positions),
        };
        let s = cell_sums(kernel, &centers, ends, prev.rho, Order::Value)?;
        let n = self.rho0.len();
        let mut g = vec![0.0; n + 1];
        for c in 0..n {
            let v = 0.5 * self.dx * self.rho0[c] * s[c];
            g[c] += v;
            g[c + 1] += v;
        }
        Ok(g)
    }

    /// Gradient with respect to every node, boundary nodes included.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let n = self.rho0.len();
        let drift = self.model.drift();
        let mut g = vec![0.0; n + 1];
        for c in 0..n {
            let d = x[c + 1] - x[c];
            let (_, dphi, _) = self.cell(c, d);
            g[c] -= dphi;
            g[c + 1] += dphi;
            if drift != super::Potential::None {
                let v = 0.5 * self.rho0[c] * self.dx * drift.derivative(0.5 * (x[c] + x[c + 1]));
                g[c] += v;
                g[c + 1] += v;
            }
        }
        if let Some((kernel, coupling)) = self.model.interaction() {
            let gi = self.interaction_gradient(kernel, coupling, x)?;
            for (a, b) in g.iter_mut().zip(gi) {
                *a += b;
            }
        }
        Ok(g)
    }

    /// Jacobian of [`Self::gradient`]; tridiagonal unless the interaction
    /// endpoints sit at the unknown level.
    pub fn jacobian(&self, x: &[f64]) -> Result<LinearSystem> {
        self.check(x)?;
        let n = self.rho0.len();
        let drift = self.model.drift();
        let mut t = Tridiagonal::zeros(n + 1);
        for c in 0..n {
            let d = x[c + 1] - x[c];
            let (_, _, d2) = self.cell(c, d);
            let mut diag = d2;
            let mut off = -d2;
            if drift != super::Potential::None {
                let v = 0.25 * self.rho0[c] * self.dx * drift.second_derivative(0.5 * (x[c] + x[c + 1]));
                diag += v;
                off += v;
            }
            t.add(c, c, diag);
            t.add(c + 1, c + 1, diag);
            t.add_symmetric(c, c + 1, off);
        }
        let Some((kernel, coupling)) = self.model.interaction() else {
            return Ok(LinearSystem::Tridiagonal(t));
        };
        let prev = self.level()?;
        let mid_ends = match coupling {
            CouplingVariant::ImplicitExplicit => Some(prev.positions),
            CouplingVariant::ImplicitImplicit => Some(x),
            _ => None,
        };
        if let Some(ends) = mid_ends {
            let s = cell_sums(kernel, &midpoints(x), ends, prev.rho, Order::Slope)?;
            for (c, (&r, &sc)) in self.rho0.iter().zip(&s).enumerate() {
                let v = 0.25 * self.dx * r * sc;
                t.add(c, c, v);
                t.add(c + 1, c + 1, v);
                t.add_symmetric(c, c + 1, v);
            }
        }
        let centers = match coupling {
            CouplingVariant::ExplicitImplicit => midpoints(prev.positions),
            CouplingVariant::ImplicitImplicit => midpoints(x),
            _ => return Ok(LinearSystem::Tridiagonal(t)),
        };
        // endpoint dependence couples every node to every other node
        let rho = prev.rho;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|c| {
                (0..=n)
                    .map(|l| {
                        let left = if l > 0 { rho[l - 1] } else { 0.0 };
                        let right = if l < n { rho[l] } else { 0.0 };
                        Ok(self.rho0[c] * (left - right) * kernel.derivative(centers[c] - x[l])?)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut m = t.to_dense();
        for c in 0..n {
            for l in 0..=n {
                let v = 0.5 * self.dx * rows[c][l];
                m[(c, l)] += v;
                m[(c + 1, l)] += v;
            }
        }
        Ok(LinearSystem::Dense(m))
    }
}

fn evaluator<'a>(
    map: &FlowMap1D,
    rho0: &'a DensityField1D,
    model: &EnergyModel,
    prev: Option<Level1D<'a>>,
) -> Result<Energy1D<'a>> {
    if model.dimension() != 1 {
        return Err(Error::Unsupported("a planar model was given a 1D map".into()));
    }
    if rho0.cells.len() != map.grid.n_cells {
        return Err(Error::InvalidInput("reference density does not match the grid".into()));
    }
    Energy1D::new(*model, map.grid.delta_x(), &rho0.cells, prev)
}

/// `E_h(x) = Σ F(ρ0 δX / (x_{j+1} - x_j)) (x_{j+1} - x_j)` plus drift and interaction parts.
pub fn discrete_energy_1d(
    map: &FlowMap1D,
    rho0: &DensityField1D,
    model: &EnergyModel,
    prev: Option<Level1D>,
) -> Result<f64> {
    evaluator(map, rho0, model, prev)?.energy(&map.positions)
}

/// Gradient at the interior nodes `1..N`.
pub fn energy_gradient_1d(
    map: &FlowMap1D,
    rho0: &DensityField1D,
    model: &EnergyModel,
    prev: Option<Level1D>,
) -> Result<Vec<f64>> {
    let g = evaluator(map, rho0, model, prev)?.gradient(&map.positions)?;
    Ok(g[1..g.len() - 1].to_vec())
}

/// Interior block of the Jacobian of the gradient, in whatever storage it needs.
pub fn energy_jacobian_1d(
    map: &FlowMap1D,
    rho0: &DensityField1D,
    model: &EnergyModel,
    prev: Option<Level1D>,
) -> Result<LinearSystem> {
    let n = map.grid.n_cells;
    Ok(match evaluator(map, rho0, model, prev)?.jacobian(&map.positions)? {
        LinearSystem::Tridiagonal(t) => LinearSystem::Tridiagonal(t.block(1, n)),
        LinearSystem::Dense(m) => LinearSystem::Dense(DMatrix::from_fn(n - 1, n - 1, |i, j| m[(i + 1, j + 1)])),
    })
}

/// Interior Hessian; fails for coupling variants whose Jacobian is not tridiagonal.
pub fn energy_hessian_1d(
    map: &FlowMap1D,
    rho0: &DensityField1D,
    model: &EnergyModel,
    prev: Option<Level1D>,
) -> Result<Tridiagonal> {
    match energy_jacobian_1d(map, rho0, model, prev)? {
        LinearSystem::Tridiagonal(t) => Ok(t),
        LinearSystem::Dense(_) => Err(Error::Unsupported(
            "this coupling variant has a dense Jacobian; use energy_jacobian_1d".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Potential;
    use crate::grid::RefGrid1D;

    #[test]
    fn uniform_porous_medium() {
        let g = RefGrid1D::new(-1.0, 1.0, 16).unwrap();
        let map = FlowMap1D::identity(g);
        let rho0 = DensityField1D::uniform(&g, 1.0);
        let model = EnergyModel::PorousMedium { m: 2.0 };
        assert!((discrete_energy_1d(&map, &rho0, &model, None).unwrap() - 2.0).abs() < 1e-14);
        assert!(energy_gradient_1d(&map, &rho0, &model, None).unwrap().iter().all(|v| v.abs() < 1e-13));
        let h = energy_hessian_1d(&map, &rho0, &model, None).unwrap();
        // each cell contributes m (ρ0 δX)^m δX^{-m-1} = 2/δX
        assert!(h.diag.iter().all(|d| (d - 4.0 / g.delta_x()).abs() < 1e-9));
    }

    #[test]
    fn interaction_needs_previous_level() {
        let g = RefGrid1D::new(-1.0, 1.0, 4).unwrap();
        let model = EnergyModel::KellerSegel1D;
        let err = discrete_energy_1d(&FlowMap1D::identity(g), &DensityField1D::uniform(&g, 1.0), &model, None);
        assert!(matches!(err, Err(Error::MissingPrevState)));
    }

    #[test]
    fn one_well_linear_fp_energy() {
        let g = RefGrid1D::new(-1.0, 1.0, 200).unwrap();
        let model = EnergyModel::LinearFpLog { drift: Potential::OneWell };
        let e = discrete_energy_1d(&FlowMap1D::identity(g), &DensityField1D::uniform(&g, 1.0), &model, None).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-4);
    }
}
