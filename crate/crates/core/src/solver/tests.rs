use std::sync::Arc;

use super::*;
use crate::collision::{CollisionParams, KernelTable, LatticeCollision};
use crate::diagnostics::NormSettings;
use crate::domain::DomainGeometry;
use crate::field::PotentialField;
use crate::weights::{nu_tilde_integral_free, weight, WeightParams};

fn setup(nx: usize, n: usize, config: SolverConfig) -> Stepper {
    let lat = VelocityLattice::new(n, 5.0).unwrap();
    let op = Arc::new(LatticeCollision::new(&CollisionParams::new(-1.0, 0.01, 26, lat).unwrap()).unwrap());
    let table = Arc::new(KernelTable::build(&op));
    let grid = PhaseGrid { space: SpatialGrid::new(DomainGeometry::slab(1.0), nx).unwrap(), velocity: lat };
    Stepper::new(grid, config, WeightParams::default(), op, table).unwrap()
}

fn grid(nx: usize, n: usize) -> PhaseGrid {
    PhaseGrid { space: SpatialGrid::new(DomainGeometry::slab(1.0), nx).unwrap(), velocity: VelocityLattice::new(n, 5.0).unwrap() }
}

fn quiet_norms() -> NormSettings {
    NormSettings { alpha_every: 0, ..NormSettings::default() }
}

#[test]
fn zero_data_stays_exactly_zero() {
    let cfg = SolverConfig { dt: 0.02, t_end: 0.6, ..SolverConfig::default() };
    let mut s = setup(9, 8, cfg);
    let f0 = DistributionField::zeros(&s.grid, 0.0);
    let h = run_simulation(&mut s, &f0, BoundaryDatum::zero(), &quiet_norms()).unwrap();
    assert_eq!(h.rows.len(), cfg.steps() + 1);
    assert!(h.final_state.values.iter().all(|x| *x == 0.0));
    assert!(h.final_potential.phi.iter().all(|x| *x == 0.0));
    assert!(h.rows.iter().all(|r| r.sup_w == 0.0 && r.energy_identity_residual == 0.0 && r.mass_residual == 0.0));
}

#[test]
fn transport_with_damping_matches_closed_form() {
    let cfg = SolverConfig { dt: 0.01, ..SolverConfig::default() };
    let mut s = setup(11, 8, cfg).without_collisions();
    let profile = |x: f64| 1.0 + 0.3 * x - 0.2 * x * x + 0.1 * x * x * x;
    let f0 = DistributionField::from_fn(&s.grid, 0.2, |x, v| profile(x[0]) * crate::weights::sqrt_maxwellian(v));
    let field = PotentialField::zero(&s.grid.space);
    let f1 = s.duhamel_step(&f0, &field, &BoundaryDatum::zero()).unwrap().field;
    let nodes = s.grid.velocity.nodes();
    let nu = s.table().nu.clone();
    let wp = s.weights;
    let mut checked = 0;
    for i in 0..s.grid.space.nodes {
        let x = s.grid.space.coord(i);
        for (k, v) in nodes.iter().enumerate() {
            let foot = x - v[0] * cfg.dt;
            if !(0.0..=1.0).contains(&foot) {
                continue;
            }
            let decay = (-nu_tilde_integral_free(0.2, 0.21, *v, &wp, nu[k])).exp();
            let expect = decay * weight(0.2, *v, &wp) / weight(0.21, *v, &wp) * profile(foot) * crate::weights::sqrt_maxwellian(*v);
            assert!((f1.row(i)[k] - expect).abs() < 1e-12, "node {i} v {v:?}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn exits_with_zero_boundary_give_zero() {
    let cfg = SolverConfig { dt: 0.1, ..SolverConfig::default() };
    let mut s = setup(9, 8, cfg).without_collisions();
    let f0 = DistributionField::from_fn(&s.grid, 0.0, |_, v| crate::weights::sqrt_maxwellian(v));
    let field = PotentialField::zero(&s.grid.space);
    let f1 = s.duhamel_step(&f0, &field, &BoundaryDatum::zero()).unwrap().field;
    let x1 = s.grid.space.coord(1);
    let nodes = s.grid.velocity.nodes();
    let mut exits = 0;
    for (k, v) in nodes.iter().enumerate() {
        if x1 - v[0] * cfg.dt < 0.0 {
            assert_eq!(f1.row(1)[k], 0.0);
            exits += 1;
        } else {
            assert!(f1.row(1)[k] > 0.0);
        }
    }
    assert!(exits > 0);
}

#[test]
fn flux_compatibility_oracles() {
    let g24 = grid(5, 24);
    let f = DistributionField::from_fn(&g24, 0.0, |_, v| crate::weights::sqrt_maxwellian(v));
    let g = BoundaryDatum::function(1.0, 0.0, |_, _, v| crate::weights::sqrt_maxwellian(v));
    for r in boundary_flux_compatibility(&f, &g, 0.0) {
        assert!(r.abs() < 1e-12);
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    for r in boundary_flux_compatibility(&f, &BoundaryDatum::zero(), 0.0) {
        assert!((r - two_pi).abs() < 1e-2 * two_pi, "{r}");
    }
    let half = BoundaryDatum::function(0.5, 0.0, |_, _, v| crate::weights::sqrt_maxwellian(v));
    for r in boundary_flux_compatibility(&f, &half, 0.0) {
        assert!((r - 0.5 * two_pi).abs() < 1e-2 * two_pi, "{r}");
    }
    let zero = DistributionField::zeros(&g24, 0.0);
    assert!(boundary_flux_compatibility(&zero, &BoundaryDatum::zero(), 0.0).iter().all(|r| *r == 0.0));
}

#[test]
fn flux_balanced_datum_cancels_boundary_flux() {
    let f = DistributionField::from_fn(&grid(9, 10), 0.0, |x, v| (0.3 + x[0]) * (1.0 + v[0]) * crate::weights::sqrt_maxwellian(v));
    let mut g = BoundaryDatum::flux_balanced();
    g.update_balance(&f);
    for r in boundary_flux_compatibility(&f, &g, 0.0) {
        assert!(r.abs() < 1e-12, "{r}");
    }
}

#[test]
fn maxwellian_is_a_fixed_point_of_the_iteration() {
    let cfg = SolverConfig { dt: 0.05, ..SolverConfig::default() };
    let s = setup(5, 8, cfg);
    let f = DistributionField::zeros(&s.grid, 0.0).to_absolute();
    let field = PotentialField::zero(&s.grid.space);
    let out = picard_solve(&s, &f, &field, &BoundaryDatum::zero()).unwrap();
    let dev = out.field.values.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-13, "{dev}");
    assert!(out.converged && out.iterations <= 2);
}

#[test]
fn iteration_rejects_negative_input_and_keeps_sign() {
    let cfg = SolverConfig { dt: 0.05, ..SolverConfig::default() };
    let s = setup(5, 8, cfg);
    let field = PotentialField::zero(&s.grid.space);
    let mut bad = DistributionField::zeros(&s.grid, 0.0).to_absolute();
    bad.values[7] = -1e-3;
    assert!(matches!(picard_solve(&s, &bad, &field, &BoundaryDatum::zero()), Err(Error::NonPositiveInput { index: 7, .. })));

    // Nonnegative but far from equilibrium: half of every row removed.
    let mut f = DistributionField::zeros(&s.grid, 0.0).to_absolute();
    let nv = s.grid.velocity.len();
    for (idx, x) in f.values.iter_mut().enumerate() {
        if (idx % nv) % 2 == 0 {
            *x = 0.0;
        }
    }
    let out = picard_solve(&s, &f, &field, &BoundaryDatum::zero()).unwrap();
    assert!(out.field.values.iter().all(|x| *x >= 0.0));
}

#[test]
fn iteration_increments_contract() {
    let cfg = SolverConfig { dt: 0.01, picard_tol: 1e-12, picard_max_iter: 200, ..SolverConfig::default() };
    let s = setup(5, 8, cfg);
    let field = PotentialField::zero(&s.grid.space);
    let increments = |a: f64| {
        let f = DistributionField::from_fn(&s.grid, 0.0, |x, v| a * (1.0 + x[0]) * (1.0 + 0.3 * v[1]) * crate::weights::sqrt_maxwellian(v)).to_absolute();
        picard_solve(&s, &f, &field, &BoundaryDatum::zero()).unwrap()
    };
    let big = increments(1e-2);
    assert!(big.converged);
    for w in big.increments.windows(2) {
        assert!(w[1] < w[0], "{:?}", big.increments);
    }
    // Increments are linear in the data to leading order.
    let small = increments(5e-3);
    for (a, b) in small.increments.iter().zip(&big.increments).take(4) {
        assert!((a / b - 0.5).abs() < 0.05, "{a} {b}");
    }
}

#[test]
fn run_checks_compatibility_and_smallness() {
    let cfg = SolverConfig { dt: 0.05, t_end: 0.1, ..SolverConfig::default() };
    let mut s = setup(5, 8, cfg);
    let f0 = DistributionField::from_fn(&s.grid, 0.0, |_, v| 1e-3 * crate::weights::sqrt_maxwellian(v));
    assert!(matches!(run_simulation(&mut s, &f0, BoundaryDatum::zero(), &quiet_norms()), Err(Error::CompatibilityViolated(_))));
    let big = DistributionField::from_fn(&s.grid, 0.0, |_, v| 2.0 * crate::weights::sqrt_maxwellian(v));
    assert!(matches!(run_simulation(&mut s, &big, BoundaryDatum::flux_balanced(), &quiet_norms()), Err(Error::SmallnessViolated { .. })));
    let ok = run_simulation(&mut s, &f0, BoundaryDatum::flux_balanced(), &quiet_norms()).unwrap();
    assert_eq!(ok.rows.len(), 3);
}

#[test]
fn absolute_run_stays_nonnegative() {
    let cfg = SolverConfig { dt: 0.01, t_end: 0.05, picard_max_iter: 200, ..SolverConfig::default() };
    let mut s = setup(5, 8, cfg);
    let f0 = DistributionField::from_fn(&s.grid, 0.0, |x, v| 0.01 * (std::f64::consts::PI * x[0]).cos() * crate::weights::sqrt_maxwellian(v)).to_absolute();
    let h = run_simulation(&mut s, &f0, BoundaryDatum::flux_balanced(), &quiet_norms()).unwrap();
    assert!(h.steps.iter().all(|r| r.min_absolute >= -1e-12));
    assert!(h.steps[1..].iter().all(|r| r.picard_converged));
    assert_eq!(h.final_state.representation, Representation::Absolute);
}

#[test]
fn ball_stepping_is_unsupported() {
    let lat = VelocityLattice::new(4, 5.0).unwrap();
    let op = Arc::new(LatticeCollision::new(&CollisionParams::new(-1.0, 0.01, 6, lat).unwrap()).unwrap());
    let table = Arc::new(KernelTable::build(&op));
    let grid = PhaseGrid { space: SpatialGrid::new(DomainGeometry::ball(1.0), 5).unwrap(), velocity: lat };
    assert!(matches!(Stepper::new(grid, SolverConfig::default(), WeightParams::default(), op, table), Err(Error::Unsupported(_))));
}

#[test]
fn representation_roundtrip() {
    let f = DistributionField::from_fn(&grid(4, 6), 0.0, |x, v| x[0] - 0.1 * v[2]);
    let back = f.to_absolute().to_perturbation();
    for (a, b) in f.values.iter().zip(&back.values) {
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }
}
