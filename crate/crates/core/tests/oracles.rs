mod common;

use ndarray::Array2;
use proptest::prelude::*;

use common::*;
use wgflow::energy::KernelKind;
use wgflow::grid::DensityField2D;

const CELLS: usize = 8;

fn shifts(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn line_derivatives_match_differences(
        model in prop::sample::select(models_1d()),
        shift in shifts(CELLS - 1),
        prev_shift in shifts(CELLS - 1),
        rho in prop::collection::vec(0.2..2.0f64, CELLS),
    ) {
        check_derivatives_1d(&model, &shift, &prev_shift, &rho).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn plane_derivatives_match_differences(
        model in prop::sample::select(models_2d()),
        shift in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        rho in prop::collection::vec(0.0..2.0f64, 30),
    ) {
        let map = perturbed_plane(5, 4, &shift);
        let rho0 = DensityField2D { values: Array2::from_shape_fn(map.grid.shape(), |(i, j)| rho[(i * 6 + j) % rho.len()]) };
        check_derivatives_2d(&model, &map, &rho0).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tridiagonal_matches_dense(
        n in 1usize..40,
        seed in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -5.0..5.0f64), 40),
    ) {
        let lower: Vec<f64> = seed[..n.saturating_sub(1)].iter().map(|s| s.0).collect();
        let upper: Vec<f64> = seed[..n.saturating_sub(1)].iter().map(|s| s.1).collect();
        let diag: Vec<f64> = seed[..n].iter().map(|s| 2.5 + s.2).collect();
        let rhs: Vec<f64> = seed[..n].iter().map(|s| s.3).collect();
        check_tridiagonal(&lower, &diag, &upper, &rhs).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn screened_solve_matches_dense(
        mx in 2usize..12,
        my in 2usize..12,
        kappa in 1e-4..1.0f64,
        vals in prop::collection::vec((0.0..50.0f64, -3.0..3.0f64), 169),
    ) {
        let diag = Array2::from_shape_fn((my + 1, mx + 1), |(i, j)| vals[i * 13 + j].0);
        let rhs = Array2::from_shape_fn((my + 1, mx + 1), |(i, j)| vals[i * 13 + j].1);
        check_screened(mx, my, &diag, kappa, &rhs).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn primitive_matches_quadrature(
        kernel in prop::sample::select(vec![KernelKind::QuadraticMinusLog, KernelKind::LogNewtonian1D]),
        a in 0.01..3.0f64,
        len in 0.001..2.0f64,
        negative in any::<bool>(),
    ) {
        let (lo, hi) = if negative { (-a - len, -a) } else { (a, a + len) };
        check_primitive(kernel, lo, hi).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn stationary_states_are_fixed_points() {
    check_fixed_points().unwrap();
}
