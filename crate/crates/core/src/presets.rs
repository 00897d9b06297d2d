//! Named experiment setups.

use std::f64::consts::PI;
use std::path::PathBuf;

use crate::config::{EpsilonSpec, GridSpec, RunSpec, SchemeSpec, WaitingTimeSpec};
use crate::diagnostics::{ConvergenceSpec, LadderLevel, Reference};
use crate::energy::{CouplingVariant, EnergyModel, KernelKind, Potential};
use crate::error::{Error, Result};
use crate::exact::{barenblatt_interface_1d, InitialCondition};
use crate::scheme1d::{Boundary, Regularization};
use crate::scheme2d::{Mode2D, StabilityConstants};
use crate::solver::NewtonConfig;

/// Newton settings used by the presets: undamped steps with line search.
fn newton_1d() -> Option<NewtonConfig> {
    Some(NewtonConfig { alpha: 1.0, ..NewtonConfig::default_1d() })
}

fn line(x_left: f64, x_right: f64, cells: usize) -> GridSpec {
    GridSpec::Line { x_left, x_right, cells }
}

fn square(half_width: f64, cells: usize) -> GridSpec {
    GridSpec::Plane { half_width_x: half_width, half_width_y: half_width, cells_x: cells, cells_y: cells }
}

fn scheme(dt: f64, regularization: Regularization, epsilon: Option<EpsilonSpec>) -> SchemeSpec {
    SchemeSpec { regularization, epsilon, newton: newton_1d(), ..SchemeSpec::new(dt) }
}

fn plain(dt: f64) -> SchemeSpec {
    scheme(dt, Regularization::None, None)
}

fn free(dt: f64, boundary: Boundary) -> SchemeSpec {
    SchemeSpec { boundary, ..plain(dt) }
}

fn explicit_2d(dt: f64, epsilon: EpsilonSpec) -> SchemeSpec {
    SchemeSpec { regularization: Regularization::LaplacianOfX, epsilon: Some(epsilon), mode: Mode2D::Explicit, ..SchemeSpec::new(dt) }
}

fn dt_factor(f: f64) -> Option<EpsilonSpec> {
    Some(EpsilonSpec::DtFactor { dt_factor: f })
}

fn ladder(rows: &[(usize, f64)]) -> Vec<LadderLevel> {
    rows.iter().map(|&(cells, dt)| LadderLevel { cells, dt }).collect()
}

/// `M = 100, 200, 400, 800` with `δt = 1/100, 1/400, 1/1600, 1/6400`.
fn quadratic_ladder() -> Vec<LadderLevel> {
    ladder(&[(100, 1.0 / 100.0), (200, 1.0 / 400.0), (400, 1.0 / 1600.0), (800, 1.0 / 6400.0)])
}

struct Entry {
    name: &'static str,
    description: &'static str,
    end_time: f64,
    model: EnergyModel,
    initial: InitialCondition,
    grid: GridSpec,
    scheme: SchemeSpec,
}

impl Entry {
    fn spec(self) -> RunSpec {
        RunSpec {
            preset: Some(self.name.to_string()),
            description: Some(self.description.to_string()),
            end_time: self.end_time,
            snapshot_times: Vec::new(),
            output_dir: PathBuf::from("out").join(self.name),
            density_cap: None,
            model: self.model,
            initial: self.initial,
            grid: self.grid,
            scheme: self.scheme,
            stability: None,
            convergence: None,
            waiting_time: None,
        }
    }
}

fn barenblatt_line(m: f64, cells: usize, dt: f64, end_time: f64, name: &'static str, description: &'static str) -> RunSpec {
    let r = barenblatt_interface_1d(0.0, m);
    Entry {
        name,
        description,
        end_time,
        model: EnergyModel::PorousMedium { m },
        initial: InitialCondition::Barenblatt { m, t0: 0.0 },
        grid: line(-r, r, cells),
        scheme: free(dt, Boundary::FreeBoundaryPme),
    }
    .spec()
}

fn waiting_time_line(m: f64, theta: f64, cells: usize, dt: f64, name: &'static str, description: &'static str) -> RunSpec {
    Entry {
        name,
        description,
        end_time: 0.5,
        model: EnergyModel::PorousMedium { m },
        initial: InitialCondition::WaitingTime { m, theta },
        grid: line(-PI, 0.0, cells),
        scheme: free(dt, Boundary::FreeBoundaryPme),
    }
    .spec()
}

fn fp(name: &'static str, description: &'static str, drift: Potential, initial: InitialCondition, end_time: f64) -> RunSpec {
    Entry {
        name,
        description,
        end_time,
        model: EnergyModel::NonlinearFp { m: 2.0, drift },
        initial,
        grid: line(-1.0, 1.0, 800),
        scheme: free(1.0 / 800.0, Boundary::FreeBoundaryFp),
    }
    .spec()
}

fn aggregation(
    name: &'static str,
    description: &'static str,
    coupling: CouplingVariant,
    sigma: f64,
    eps_factor: f64,
) -> RunSpec {
    Entry {
        name,
        description,
        end_time: 10.0,
        model: EnergyModel::Aggregation1D { kernel: KernelKind::QuadraticMinusLog, coupling },
        initial: InitialCondition::Gaussian { amplitude: 1.0, sigma },
        grid: line(-5.0, 5.0, 200),
        scheme: scheme(1.0 / 200.0, Regularization::LaplacianOfX, dt_factor(eps_factor)),
    }
    .spec()
}

fn keller_segel_line(name: &'static str, description: &'static str, initial: InitialCondition, cap: Option<f64>) -> RunSpec {
    let mut spec = Entry {
        name,
        description,
        end_time: 5.0,
        model: EnergyModel::KellerSegel1D,
        initial,
        grid: line(-15.0, 15.0, 800),
        scheme: plain(1.0 / 800.0),
    }
    .spec();
    spec.density_cap = cap;
    spec
}

fn barenblatt_plane(name: &'static str, description: &'static str, m: f64, eps: EpsilonSpec, reg: Regularization) -> RunSpec {
    let mut spec = Entry {
        name,
        description,
        end_time: 1.0,
        model: EnergyModel::PorousMedium2D { m },
        initial: InitialCondition::Barenblatt2D { m, c_b2: 0.1, t0: 0.0 },
        grid: square(2.0, 64),
        scheme: SchemeSpec { regularization: reg, ..explicit_2d(0.01, eps) },
    }
    .spec();
    spec.stability = Some(StabilityConstants::default());
    spec
}

fn catalog() -> Vec<RunSpec> {
    let mut v = Vec::new();

    let mut t1 = Entry {
        name: "table1",
        description: "porous medium m=2, cosine data, Dirichlet ends; trajectory and density convergence at T=0.5",
        end_time: 0.5,
        model: EnergyModel::PorousMedium { m: 2.0 },
        initial: InitialCondition::Cosine,
        grid: line(-1.0, 1.0, 100),
        scheme: plain(1.0 / 100.0),
    }
    .spec();
    t1.convergence = Some(ConvergenceSpec {
        ladder: quadratic_ladder(),
        reference: Reference::SelfFine { cells: 1600, dt: 1.0 / 25600.0 },
        probe: None,
    });
    v.push(t1);

    let mut t2 = barenblatt_line(2.0, 100, 1.0 / 100.0, 0.5, "table2", "Barenblatt m=2 with free boundaries; density against the exact profile at T=0.5");
    t2.convergence = Some(ConvergenceSpec { ladder: quadratic_ladder(), reference: Reference::Exact, probe: Some(0.0) });
    v.push(t2);

    let mut t3 = fp(
        "table3",
        "nonlinear Fokker-Planck m=2, one-well drift, tent data; density against the steady state at T=10",
        Potential::OneWell,
        InitialCondition::Tent,
        10.0,
    );
    t3.grid = line(-1.0, 1.0, 100);
    t3.scheme = t3.scheme.with_dt(1.0 / 100.0);
    t3.convergence = Some(ConvergenceSpec { ladder: quadratic_ladder(), reference: Reference::Exact, probe: None });
    v.push(t3);

    let mut t4 = barenblatt_line(2.5, 100, 1.0 / 100.0, 0.5, "table4", "Barenblatt m=2.5 with free boundaries; global and centre density errors at T=0.5");
    t4.convergence = Some(ConvergenceSpec { ladder: quadratic_ladder(), reference: Reference::Exact, probe: Some(0.0) });
    v.push(t4);

    let mut t5 = waiting_time_line(2.0, 0.25, 1000, 1.0 / 1000.0, "table5", "waiting time of sin^2/sin^4 data, m=2, theta=0.25");
    t5.waiting_time = Some(WaitingTimeSpec {
        ladder: ladder(&[(1000, 1e-3), (2000, 5e-4), (4000, 2.5e-4), (8000, 1.25e-4)]),
        velocity_tol: None,
    });
    v.push(t5);

    let mut t6 = barenblatt_plane(
        "table6",
        "planar Barenblatt m=2, explicit scheme with eps=h^2; density against the exact profile at T=0.1",
        2.0,
        EpsilonSpec::H2Factor { h2_factor: 1.0 },
        Regularization::LaplacianOfX,
    );
    t6.end_time = 0.1;
    t6.grid = square(2.0, 16);
    t6.scheme = t6.scheme.with_dt(0.1 / 16.0);
    t6.convergence = Some(ConvergenceSpec {
        ladder: ladder(&[(16, 0.1 / 16.0), (32, 0.1 / 32.0), (64, 0.1 / 64.0), (128, 0.1 / 128.0)]),
        reference: Reference::Exact,
        probe: None,
    });
    v.push(t6);

    v.push(
        Entry {
            name: "pme-energy-mass",
            description: "porous medium m=2, cosine data, fine grid; energy and mass histories",
            end_time: 0.5,
            model: EnergyModel::PorousMedium { m: 2.0 },
            initial: InitialCondition::Cosine,
            grid: line(-1.0, 1.0, 800),
            scheme: plain(1.0 / 6400.0),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "pme-regularized",
            description: "porous medium m=2, cosine data, first order with eps*Lap(x), eps=dt",
            end_time: 0.5,
            model: EnergyModel::PorousMedium { m: 2.0 },
            initial: InitialCondition::Cosine,
            grid: line(-1.0, 1.0, 200),
            scheme: scheme(1.0 / 200.0, Regularization::LaplacianOfX, None),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "pme-crank-nicolson",
            description: "porous medium m=2, cosine data, Crank-Nicolson with eps*Lap(x - x^k), eps=dt",
            end_time: 0.5,
            model: EnergyModel::PorousMedium { m: 2.0 },
            initial: InitialCondition::Cosine,
            grid: line(-1.0, 1.0, 200),
            scheme: SchemeSpec {
                time_order: crate::scheme1d::TimeOrder::CrankNicolson,
                ..scheme(1.0 / 200.0, Regularization::LaplacianOfIncrement, None)
            },
        }
        .spec(),
    );
    v.push(barenblatt_line(2.0, 800, 1.0 / 6400.0, 0.5, "barenblatt-m2", "Barenblatt m=2, free boundaries moving at finite speed"));
    v.push(barenblatt_line(3.0, 800, 1.0 / 6400.0, 0.5, "barenblatt-m3", "Barenblatt m=3, free boundaries moving at finite speed"));
    v.push(waiting_time_line(2.0, 0.25, 800, 1.0 / 800.0, "waiting-time-m2", "sin^2/sin^4 data, m=2, theta=0.25; edges static until t near 2/9"));
    v.push(fp("fp-one-well", "nonlinear Fokker-Planck m=2, one-well drift, tent data", Potential::OneWell, InitialCondition::Tent, 10.0));
    v.push(fp(
        "fp-double-well-data-double-well",
        "nonlinear Fokker-Planck m=2, double-well drift, double-bump data",
        Potential::DoubleWell,
        InitialCondition::DoubleWellBump { sigma: 1.0 },
        10.0,
    ));
    v.push(fp(
        "fp-double-well-data-one-well",
        "nonlinear Fokker-Planck m=2, one-well drift, double-bump data",
        Potential::OneWell,
        InitialCondition::DoubleWellBump { sigma: 1.0 },
        10.0,
    ));
    v.push(fp(
        "fp-parabola-double-well",
        "nonlinear Fokker-Planck m=2, double-well drift, parabola data",
        Potential::DoubleWell,
        InitialCondition::Parabola,
        10.0,
    ));
    v.push(
        Entry {
            name: "fp-log",
            description: "linear Fokker-Planck with entropy and one-well drift, Gaussian data",
            end_time: 5.0,
            model: EnergyModel::LinearFpLog { drift: Potential::OneWell },
            initial: InitialCondition::Gaussian { amplitude: 1.0, sigma: 1.0 },
            grid: line(-5.0, 5.0, 800),
            scheme: plain(1.0 / 800.0),
        }
        .spec(),
    );
    v.push(aggregation(
        "aggregation",
        "aggregation with |x|^2/2 - ln|x|, implicit-explicit coupling, eps=1e-4 dt",
        CouplingVariant::ImplicitExplicit,
        1.0,
        1e-4,
    ));
    v.push(aggregation(
        "aggregation-eps-large",
        "aggregation, implicit-explicit coupling, eps=1e-2 dt",
        CouplingVariant::ImplicitExplicit,
        1.0,
        1e-2,
    ));
    v.push(aggregation(
        "aggregation-narrow",
        "aggregation, implicit-explicit coupling, narrow Gaussian sigma=0.1",
        CouplingVariant::ImplicitExplicit,
        0.1,
        1e-4,
    ));
    v.push(aggregation(
        "aggregation-fully-explicit",
        "aggregation, fully explicit coupling, eps=1e-2 dt",
        CouplingVariant::FullyExplicit,
        1.0,
        1e-2,
    ));
    v.push(aggregation(
        "aggregation-explicit-implicit",
        "aggregation, explicit-implicit coupling, eps=1e-4 dt",
        CouplingVariant::ExplicitImplicit,
        1.0,
        1e-4,
    ));
    v.push(aggregation(
        "aggregation-implicit-implicit",
        "aggregation, implicit-implicit coupling, eps=1e-2 dt",
        CouplingVariant::ImplicitImplicit,
        1.0,
        1e-2,
    ));
    v.push(keller_segel_line(
        "ks1d-subcritical",
        "Keller-Segel on the line, single bump, C=1; stays bounded",
        InitialCondition::ChemotaxisSingle { amplitude: 1.0 },
        None,
    ));
    v.push(keller_segel_line(
        "ks1d-supercritical",
        "Keller-Segel on the line, single bump, C=5pi; concentrates",
        InitialCondition::ChemotaxisSingle { amplitude: 5.0 * PI },
        Some(1e4),
    ));
    v.push(keller_segel_line(
        "ks1d-double-subcritical",
        "Keller-Segel on the line, two bumps, C=1",
        InitialCondition::ChemotaxisDouble { amplitude: 1.0 },
        None,
    ));
    v.push(keller_segel_line(
        "ks1d-double-supercritical",
        "Keller-Segel on the line, two bumps, C=5pi",
        InitialCondition::ChemotaxisDouble { amplitude: 5.0 * PI },
        Some(1e4),
    ));
    v.push(barenblatt_plane(
        "pme2d-barenblatt-m2",
        "planar Barenblatt m=2, 64x64, eps=1e-3 dt, to t=1",
        2.0,
        EpsilonSpec::DtFactor { dt_factor: 1e-3 },
        Regularization::LaplacianOfX,
    ));
    v.push(barenblatt_plane(
        "pme2d-barenblatt-m5",
        "planar Barenblatt m=5, 64x64, eps=0.1 dt, to t=1",
        5.0,
        EpsilonSpec::DtFactor { dt_factor: 0.1 },
        Regularization::LaplacianOfX,
    ));
    v.push(barenblatt_plane(
        "pme2d-energy-h2",
        "planar Barenblatt m=2, eps*Lap(x) with eps=h^2",
        2.0,
        EpsilonSpec::H2Factor { h2_factor: 1.0 },
        Regularization::LaplacianOfX,
    ));
    v.push(barenblatt_plane(
        "pme2d-energy-increment",
        "planar Barenblatt m=2, eps*Lap(x - x^k) with eps=0.1",
        2.0,
        EpsilonSpec::Value(0.1),
        Regularization::LaplacianOfIncrement,
    ));
    v.push(
        Entry {
            name: "pme2d-donut",
            description: "planar porous medium m=3, partial-donut support",
            end_time: 0.1,
            model: EnergyModel::PorousMedium2D { m: 3.0 },
            initial: InitialCondition::PartialDonut,
            grid: square(1.5, 64),
            scheme: explicit_2d(0.001, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "pme2d-offset-gaussian",
            description: "planar porous medium m=2, off-centre Gaussian",
            end_time: 1.0,
            model: EnergyModel::PorousMedium2D { m: 2.0 },
            initial: InitialCondition::OffsetGaussian,
            grid: square(2.0, 64),
            scheme: explicit_2d(0.01, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "aggregation2d",
            description: "planar aggregation with |x|^2/2 - ln|x|, Gaussian data; tends to the unit disc",
            end_time: 1.0,
            model: EnergyModel::AggregationDiffusion2D { m: 1.0, nu: 0.0, kernel: KernelKind::QuadraticMinusLog },
            initial: InitialCondition::Gaussian2D { amplitude: 1.0 },
            grid: square(2.0, 64),
            scheme: explicit_2d(0.01, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "aggregation-diffusion2d",
            description: "planar aggregation-diffusion, Gaussian attraction, m=3, nu=0.1, square data, eps=dt",
            end_time: 5.0,
            model: EnergyModel::AggregationDiffusion2D { m: 3.0, nu: 0.1, kernel: KernelKind::GaussianAttraction2D },
            initial: InitialCondition::HalfSquare,
            grid: square(3.0, 32),
            scheme: explicit_2d(0.01, EpsilonSpec::DtFactor { dt_factor: 1.0 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "ks2d-m1",
            description: "planar Keller-Segel, linear diffusion, C=1; decays",
            end_time: 0.5,
            model: EnergyModel::KellerSegel2D { m: 1.0, nu: 1.0 },
            initial: InitialCondition::Gaussian2D { amplitude: 1.0 },
            grid: square(2.0, 64),
            scheme: explicit_2d(0.001, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "ks2d-m1-blowup",
            description: "planar Keller-Segel, linear diffusion, C=20; concentrates until the map distorts",
            end_time: 0.5,
            model: EnergyModel::KellerSegel2D { m: 1.0, nu: 1.0 },
            initial: InitialCondition::Gaussian2D { amplitude: 20.0 },
            grid: square(2.0, 64),
            scheme: explicit_2d(0.001, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v.push(
        Entry {
            name: "ks2d-m2",
            description: "planar Keller-Segel, m=2, C=20; single bump",
            end_time: 0.12,
            model: EnergyModel::KellerSegel2D { m: 2.0, nu: 1.0 },
            initial: InitialCondition::Gaussian2D { amplitude: 20.0 },
            grid: square(2.0, 64),
            scheme: explicit_2d(0.001, EpsilonSpec::DtFactor { dt_factor: 0.1 }),
        }
        .spec(),
    );
    v
}

/// All preset names with their descriptions, in catalogue order.
pub fn list_presets() -> Vec<(String, String)> {
    catalog()
        .into_iter()
        .map(|s| (s.preset.unwrap_or_default(), s.description.unwrap_or_default()))
        .collect()
}

pub fn preset(name: &str) -> Result<RunSpec> {
    catalog()
        .into_iter()
        .find(|s| s.preset.as_deref() == Some(name))
        .ok_or_else(|| Error::validation("preset", format!("unknown preset `{name}`")))
}

pub fn all_presets() -> Vec<RunSpec> {
    catalog()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        let all = all_presets();
        assert!(all.len() >= 20);
        for spec in all {
            spec.validate().unwrap_or_else(|e| panic!("{:?}: {e}", spec.preset));
            let text = spec.to_toml().unwrap();
            assert_eq!(crate::config::parse_config(&text).unwrap(), spec, "{:?}", spec.preset);
        }
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<String> = list_presets().into_iter().map(|p| p.0).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }
}
