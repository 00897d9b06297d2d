//! Reference grids, flow maps and the densities they carry.
//!
//! In 1D the density lives on cells (between consecutive nodes); in 2D it
//! lives on nodes, with the determinant of the deformation gradient taken
//! from central differences.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform label grid on `[x_left, x_right]` with `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefGrid1D {
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
}

impl RefGrid1D {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::validation("cells", "need at least 2 cells"));
        }
        if !(x_right > x_left) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(Error::validation("domain", "x_right must exceed x_left"));
        }
        Ok(Self { x_left, x_right, n_cells })
    }

    pub fn delta_x(&self) -> f64 {
        (self.x_right - self.x_left) / self.n_cells as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.x_right
        } else {
            self.x_left + j as f64 * self.delta_x()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|j| self.node(j)).collect()
    }

    /// Label of the centre of cell `j`.
    pub fn cell_center(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.delta_x()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap1D {
    pub positions: Vec<f64>,
    pub grid: RefGrid1D,
}

impl FlowMap1D {
    pub fn identity(grid: RefGrid1D) -> Self {
        Self { positions: grid.nodes(), grid }
    }

    pub fn new(grid: RefGrid1D, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != grid.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "expected {} positions, got {}",
                grid.n_nodes(),
                positions.len()
            )));
        }
        Ok(Self { positions, grid })
    }

    pub fn cell_length(&self, j: usize) -> f64 {
        self.positions[j + 1] - self.positions[j]
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.positions.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Cell densities. A reference (initial) density additionally keeps its
/// nodal samples, which the free-boundary conditions need.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField1D {
    pub cells: Vec<f64>,
    pub nodes: Option<Vec<f64>>,
}

impl DensityField1D {
    pub fn from_cells(cells: Vec<f64>) -> Self {
        Self { cells, nodes: None }
    }

    /// Samples `f` at cell centres and at nodes of `grid`.
    pub fn sample(grid: &RefGrid1D, f: impl Fn(f64) -> f64) -> Self {
        let cells = (0..grid.n_cells).map(|j| f(grid.cell_center(j))).collect();
        let nodes = grid.nodes().into_iter().map(&f).collect();
        Self { cells, nodes: Some(nodes) }
    }

    pub fn uniform(grid: &RefGrid1D, value: f64) -> Self {
        Self::sample(grid, |_| value)
    }

    pub fn max(&self) -> f64 {
        self.cells.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.cells.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn admissible_1d(map: &FlowMap1D) -> bool {
    admissible_positions(&map.positions)
}

pub(crate) fn admissible_positions(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite()) && x.windows(2).all(|w| w[1] > w[0])
}

/// `ρ_{j+1/2} = ρ0_{j+1/2} δX / (x_{j+1} - x_j)`.
pub fn density_from_map_1d(map: &FlowMap1D, rho0: &DensityField1D) -> Result<DensityField1D> {
    density_from_positions(&map.positions, map.grid.delta_x(), &rho0.cells)
}

pub(crate) fn density_from_positions(x: &[f64], dx: f64, rho0: &[f64]) -> Result<DensityField1D> {
    let mut cells = Vec::with_capacity(rho0.len());
    for (j, r) in rho0.iter().enumerate() {
        let len = x[j + 1] - x[j];
        if !(len > 0.0) {
            return Err(Error::NonAdmissibleMap { cell: j });
        }
        cells.push(r * dx / len);
    }
    Ok(DensityField1D::from_cells(cells))
}

/// `Σ ρ_{j+1/2} (x_{j+1} - x_j)`.
pub fn total_mass_1d(map: &FlowMap1D, rho: &DensityField1D) -> f64 {
    rho.cells.iter().enumerate().map(|(j, r)| r * map.cell_length(j)).sum()
}

/// Tensor label grid on `[-lx, lx] x [-ly, ly]`; arrays are indexed `[i, j]`
/// with `i` along y (rows) and `j` along x (columns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefGrid2D {
    pub lx: f64,
    pub ly: f64,
    pub mx: usize,
    pub my: usize,
}

impl RefGrid2D {
    pub fn new(lx: f64, ly: f64, mx: usize, my: usize) -> Result<Self> {
        if mx < 2 || my < 2 {
            return Err(Error::validation("cells", "need at least 2 cells per direction"));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::validation("extent", "half-widths must be positive"));
        }
        Ok(Self { lx, ly, mx, my })
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.lx / self.mx as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.ly / self.my as f64
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.my + 1, self.mx + 1)
    }

    pub fn x_node(&self, j: usize) -> f64 {
        if j == self.mx {
            self.lx
        } else {
            -self.lx + j as f64 * self.hx()
        }
    }

    pub fn y_node(&self, i: usize) -> f64 {
        if i == self.my {
            self.ly
        } else {
            -self.ly + i as f64 * self.hy()
        }
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i < self.my && j < self.mx
    }

    /// Trapezoid weight of node `(i, j)`: 1 inside, 1/2 on edges, 1/4 at corners.
    pub fn trapezoid_weight(&self, i: usize, j: usize) -> f64 {
        let wy = if i == 0 || i == self.my { 0.5 } else { 1.0 };
        let wx = if j == 0 || j == self.mx { 0.5 } else { 1.0 };
        wx * wy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap2D {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub grid: RefGrid2D,
}

impl FlowMap2D {
    pub fn identity(grid: RefGrid2D) -> Self {
        let x = Array2::from_shape_fn(grid.shape(), |(_, j)| grid.x_node(j));
        let y = Array2::from_shape_fn(grid.shape(), |(i, _)| grid.y_node(i));
        Self { x, y, grid }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField2D {
    pub values: Array2<f64>,
}

impl DensityField2D {
    pub fn sample(grid: &RefGrid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.x_node(j), grid.y_node(i)));
        Self { values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Central-difference determinant of the deformation gradient at an interior node.
pub fn det_jacobian_2d(map: &FlowMap2D, i: usize, j: usize) -> Result<f64> {
    if !map.grid.is_interior(i, j) {
        return Err(Error::OutOfRange { i, j });
    }
    Ok(det_at(&map.x, &map.y, &map.grid, i, j))
}

/// Neighbours `(east, west, north, south)` of node `(i, j)`; on the frame the
/// missing neighbour is replaced by the node itself (one-sided difference).
#[inline]
pub(crate) fn neighbours(g: &RefGrid2D, i: usize, j: usize) -> [(usize, usize); 4] {
    [(i, (j + 1).min(g.mx)), (i, j.saturating_sub(1)), ((i + 1).min(g.my), j), (i.saturating_sub(1), j)]
}

/// Reciprocal of the product of the two difference spans at `(i, j)`.
#[inline]
pub(crate) fn det_scale(g: &RefGrid2D, i: usize, j: usize) -> f64 {
    let sx = if j == 0 || j == g.mx { 1.0 } else { 2.0 };
    let sy = if i == 0 || i == g.my { 1.0 } else { 2.0 };
    1.0 / (sx * g.hx() * sy * g.hy())
}

/// Discrete Jacobian determinant: central differences inside, one-sided
/// normal differences on the frame.
#[inline]
pub(crate) fn det_at(x: &Array2<f64>, y: &Array2<f64>, g: &RefGrid2D, i: usize, j: usize) -> f64 {
    let [e, w, n, s] = neighbours(g, i, j);
    let xx = x[e] - x[w];
    let yy = y[n] - y[s];
    let yx = y[e] - y[w];
    let xy = x[n] - x[s];
    (xx * yy - yx * xy) * det_scale(g, i, j)
}

pub fn determinants_2d(map: &FlowMap2D) -> Array2<f64> {
    let g = map.grid;
    Array2::from_shape_fn(g.shape(), |(i, j)| det_at(&map.x, &map.y, &g, i, j))
}

/// Smallest determinant over all nodes and where it occurs.
pub fn min_determinant_2d(map: &FlowMap2D) -> (f64, usize, usize) {
    let g = map.grid;
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..=g.my {
        for j in 0..=g.mx {
            let d = det_at(&map.x, &map.y, &g, i, j);
            // NaN counts as the worst possible value
            if d < best.0 || d.is_nan() {
                best = (d, i, j);
                if d.is_nan() {
                    return best;
                }
            }
        }
    }
    best
}

pub fn admissible_2d(map: &FlowMap2D, det_floor: f64) -> bool {
    let (d, _, _) = min_determinant_2d(map);
    d > det_floor
}

/// `ρ = ρ0 / det` on every node.
pub fn density_from_map_2d(map: &FlowMap2D, rho0: &DensityField2D, det_floor: f64) -> Result<DensityField2D> {
    let g = map.grid;
    let mut values = rho0.values.clone();
    for i in 0..=g.my {
        for j in 0..=g.mx {
            let d = det_at(&map.x, &map.y, &g, i, j);
            if !(d > det_floor) {
                return Err(Error::MapDistorted { i, j, det: d });
            }
            values[[i, j]] = rho0.values[[i, j]] / d;
        }
    }
    Ok(DensityField2D { values })
}

/// `Σ_interior ρ det h_x h_y`.
pub fn total_mass_2d(map: &FlowMap2D, rho: &DensityField2D) -> f64 {
    let g = map.grid;
    let area = g.hx() * g.hy();
    let mut total = 0.0;
    for i in 1..g.my {
        for j in 1..g.mx {
            total += rho.values[[i, j]] * det_at(&map.x, &map.y, &g, i, j) * area;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_density_is_reference() {
        let g = RefGrid1D::new(-1.0, 1.0, 10).unwrap();
        let rho0 = DensityField1D::sample(&g, |x| 1.0 + x * x);
        let rho = density_from_map_1d(&FlowMap1D::identity(g), &rho0).unwrap();
        for (a, b) in rho.cells.iter().zip(&rho0.cells) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_stretch_halves_density() {
        let g = RefGrid1D::new(-1.0, 1.0, 8).unwrap();
        let map = FlowMap1D::new(g, g.nodes().iter().map(|x| 2.0 * x).collect()).unwrap();
        let rho = density_from_map_1d(&map, &DensityField1D::uniform(&g, 1.0)).unwrap();
        assert!(rho.cells.iter().all(|r| (r - 0.5).abs() < 1e-15));
    }

    #[test]
    fn swapped_pair_is_rejected() {
        let g = RefGrid1D::new(0.0, 1.0, 4).unwrap();
        let mut map = FlowMap1D::identity(g);
        map.positions.swap(1, 2);
        assert!(!admissible_1d(&map));
        assert!(matches!(
            density_from_map_1d(&map, &DensityField1D::uniform(&g, 1.0)),
            Err(Error::NonAdmissibleMap { cell: 1 })
        ));
    }

    #[test]
    fn determinant_of_linear_maps() {
        let g = RefGrid2D::new(1.0, 1.0, 6, 6).unwrap();
        let mut map = FlowMap2D::identity(g);
        assert!((det_jacobian_2d(&map, 3, 3).unwrap() - 1.0).abs() < 1e-14);
        map.x.mapv_inplace(|v| 2.0 * v);
        assert!((det_jacobian_2d(&map, 2, 4).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(det_jacobian_2d(&map, 0, 3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn displaced_node_breaks_admissibility() {
        let g = RefGrid2D::new(1.0, 1.0, 8, 8).unwrap();
        let mut map = FlowMap2D::identity(g);
        assert!(admissible_2d(&map, 1e-10));
        // push node (4,4) past its right neighbour: det at (4,5) flips sign
        map.x[[4, 4]] = map.x[[4, 6]] + 0.1;
        assert!(!admissible_2d(&map, 1e-10));
    }
}
