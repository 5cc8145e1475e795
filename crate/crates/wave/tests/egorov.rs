use conical_core::{ConicalPotential, Error as CoreError, FlowOptions, InitialStateSpec, ParticleMeasure, PhasePoint, PotentialSpec, ScalarField, Symbol, SymbolSpec};
use conical_core::measure::Particle;
use conical_wave::egorov::{
    check_exclusion_tube, egorov_gap, fit_loglog_slope, husimi_particles, par_pushforward, wigner_particles, EgorovConfig, Realization,
};
use conical_wave::grid::{Axis, Grid};
use conical_wave::phase::{pair_symbol, wigner_transform};
use conical_wave::solver::make_initial_state;
use conical_wave::WaveError;

fn pot1(w: f64, v0: ScalarField, half: f64) -> ConicalPotential {
    ConicalPotential::new(&PotentialSpec::canonical(1, 1, w, v0, half)).unwrap()
}

fn bump(xc: f64, kc: f64, sx: f64, sk: f64) -> Symbol {
    Symbol::from_spec(
        &SymbolSpec::GaussianBump { amplitude: 1.0, x_center: vec![xc], xi_center: vec![kc], x_width: sx, xi_width: sk },
        1,
    )
    .unwrap()
}

fn coherent(q: f64, p: f64) -> InitialStateSpec {
    InitialStateSpec::Coherent { q: vec![q], p: vec![p] }
}

#[test]
fn slope_fit_recovers_power_laws() {
    let pts: Vec<(f64, f64)> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0].iter().map(|&e: &f64| (e, 3.0 * e * e)).collect();
    assert!((fit_loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
    assert!(fit_loglog_slope(&pts[..1]).is_none());
}

#[test]
fn wigner_quadrature_reproduces_pairings() {
    let eps = 1.0 / 32.0;
    let g = Grid::new(vec![Axis::new(-4.0, 4.0, 256).unwrap()]).unwrap();
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, eps).unwrap();
    let w = wigner_transform(&psi).unwrap();
    let mu = wigner_particles(&w, 0.0).unwrap();
    let a = bump(-0.8, 0.9, 0.3, 0.3);
    let direct = pair_symbol(&a, &w).unwrap();
    assert!((conical_core::measure::pairing(&a, &mu) - direct).abs() < 1e-12);
    assert!((mu.total_mass() - 1.0).abs() < 1e-10);
}

#[test]
fn free_flow_gap_with_husimi_samples() {
    let mut cfg = EgorovConfig::new(1.0, vec![1.0 / 64.0], vec![[-4.0, 4.0]], 2.0);
    cfg.realization = Realization::HusimiSampling { samples: 10_000, seed: 7 };
    let symbols = vec![bump(0.0, 1.0, 0.5, 0.3), bump(0.2, 0.8, 0.3, 0.25), bump(-0.3, 1.2, 0.6, 0.3)];
    let table = egorov_gap(&pot1(0.0, ScalarField::zero(), 4.0), &coherent(-1.0, 1.0), &symbols, &cfg).unwrap();
    assert_eq!(table.rows.len(), 3);
    let d = table.gaps[0].1;
    assert!(d <= 1e-3, "{d}");
    assert_eq!(table.particles, vec![10_000]);
}

#[test]
fn husimi_sampling_is_reproducible() {
    let eps = 1.0 / 32.0;
    let g = Grid::new(vec![Axis::new(-4.0, 4.0, 256).unwrap()]).unwrap();
    let psi = make_initial_state(&coherent(0.5, -0.5), &g, eps).unwrap();
    let w = wigner_transform(&psi).unwrap();
    let a = husimi_particles(&w, 500, 3).unwrap();
    let b = husimi_particles(&w, 500, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, husimi_particles(&w, 500, 4).unwrap());
    assert!(husimi_particles(&w, 0, 3).is_err());
}

#[test]
fn free_flow_gap_with_quadrature_is_tiny() {
    let cfg = EgorovConfig::new(1.0, vec![1.0 / 32.0, 1.0 / 64.0], vec![[-4.0, 4.0]], 2.0);
    let symbols = vec![bump(0.0, 1.0, 0.5, 0.3), bump(0.3, 0.7, 0.2, 0.3)];
    let table = egorov_gap(&pot1(0.0, ScalarField::zero(), 4.0), &coherent(-1.0, 1.0), &symbols, &cfg).unwrap();
    for (eps, d) in &table.gaps {
        assert!(*d < 1e-8, "eps {eps}: {d}");
    }
}

#[test]
fn harmonic_gap_shrinks_like_eps_squared() {
    let cfg = EgorovConfig::new(1.0, vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0], vec![[-4.0, 4.0]], 2.0);
    let symbols = vec![bump(0.5, -0.8, 0.4, 0.3), bump(0.6, -0.9, 0.3, 0.25)];
    let pot = pot1(0.0, ScalarField::poly(&[(0.5, &[2])]), 4.0);
    let table = egorov_gap(&pot, &coherent(1.0, 0.0), &symbols, &cfg).unwrap();
    let slope = table.slope.unwrap();
    assert!(slope >= 1.5, "{:?} slope {slope}", table.gaps);
}

#[test]
fn symbols_must_avoid_the_exclusion_tube() {
    let pot = pot1(1.0, ScalarField::zero(), 4.0);
    // mass at x = 0, xi = 0 lies on S \ S*
    assert!(matches!(check_exclusion_tube(&pot, &[bump(0.0, 0.0, 0.3, 0.3)], 0.4, 2.0), Err(WaveError::Invalid(_))));
    assert!(check_exclusion_tube(&pot, &[bump(1.5, 0.5, 0.2, 0.2)], 0.4, 2.0).is_ok());
    let cfg = EgorovConfig::new(0.5, vec![1.0 / 32.0], vec![[-4.0, 4.0]], 2.0);
    assert!(egorov_gap(&pot, &coherent(-1.0, 1.0), &[bump(0.0, 0.0, 0.3, 0.3)], &cfg).is_err());
}

#[test]
fn pushforward_reports_the_failing_particle() {
    let pot = pot1(-1.0, ScalarField::zero(), 4.0);
    let mu = ParticleMeasure::new(vec![
        Particle { point: PhasePoint::new(vec![-1.0], vec![1.0]), weight: 0.5 },
        Particle { point: PhasePoint::new(vec![0.0], vec![0.0]), weight: 0.5 },
    ])
    .unwrap();
    let err = par_pushforward(&pot, &mu, 0.5, &FlowOptions::default()).unwrap_err();
    match err {
        WaveError::Core(CoreError::Particle { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
    // parallel and sequential pushforwards agree
    let ok = ParticleMeasure::new(
        (0..20).map(|i| Particle { point: PhasePoint::new(vec![-1.0 - 0.05 * i as f64], vec![1.0]), weight: 0.05 }).collect(),
    )
    .unwrap();
    let pot = pot1(1.0, ScalarField::zero(), 4.0);
    let a = par_pushforward(&pot, &ok, 2.0, &FlowOptions::default()).unwrap();
    let b = conical_core::measure::pushforward(&pot, &ok, 2.0, &FlowOptions::default()).unwrap();
    assert_eq!(a, b);
}
