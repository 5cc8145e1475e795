use conical_core::{ConicalPotential, InitialStateSpec, PotentialSpec, ScalarField};
use conical_wave::grid::{Axis, Grid, WavefunctionGrid};
use conical_wave::solver::{dt_max, evolve, make_initial_state, spectral_tail, strang_step, Propagator};
use conical_wave::WaveError;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn pot1(w: f64, v0: ScalarField, half: f64) -> ConicalPotential {
    ConicalPotential::new(&PotentialSpec::canonical(1, 1, w, v0, half)).unwrap()
}

fn coherent(q: f64, p: f64) -> InitialStateSpec {
    InitialStateSpec::Coherent { q: vec![q], p: vec![p] }
}

fn grid1(lo: f64, hi: f64, n: usize) -> Grid {
    Grid::new(vec![Axis::new(lo, hi, n).unwrap()]).unwrap()
}

#[test]
fn initial_state_examples() {
    let g = grid1(-4.0, 4.0, 256);
    let psi = make_initial_state(&coherent(0.0, 0.0), &g, 1.0 / 32.0).unwrap();
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    assert!(psi.values.iter().all(|v| v.im.abs() < 1e-14 && v.re >= 0.0));

    let g = grid1(-4.0, 4.0, 512);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, 1.0 / 64.0).unwrap();
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    assert!((psi.mean_position()[0] + 1.0).abs() < 1e-6);

    let flat = InitialStateSpec::Wkb { amplitude: ScalarField::constant(1.0), phase: ScalarField::zero() };
    let psi = make_initial_state(&flat, &g, 1.0 / 64.0).unwrap();
    let v0 = psi.values[0];
    assert!(psi.values.iter().all(|v| (v - v0).norm() < 1e-14));
    assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
}

#[test]
fn initial_state_rejects_coarse_grid() {
    let g = grid1(-4.0, 4.0, 64);
    assert!(matches!(make_initial_state(&coherent(0.0, 0.0), &g, 1.0 / 64.0), Err(WaveError::UnderResolved(_))));
    // phase gradient 40 outside eps * k_max = 0.5 * pi * 512 / 8 / 64
    let steep = InitialStateSpec::Wkb { amplitude: ScalarField::constant(1.0), phase: ScalarField::poly(&[(40.0, &[1])]) };
    let g = grid1(-4.0, 4.0, 512);
    assert!(matches!(make_initial_state(&steep, &g, 1.0 / 64.0), Err(WaveError::UnderResolved(_))));
}

#[test]
fn dt_zero_is_identity() {
    let g = grid1(-4.0, 4.0, 256);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, 1.0 / 32.0).unwrap();
    let out = strang_step(&pot1(1.0, ScalarField::zero(), 4.0), &psi, 0.0).unwrap();
    assert_eq!(out.values, psi.values);
    let ev = evolve(&pot1(1.0, ScalarField::zero(), 4.0), &psi, 0.0, 0.001, &[]).unwrap();
    assert_eq!(ev.snapshots.len(), 1);
    assert_eq!(ev.snapshots[0].psi.values, psi.values);
}

/// Free Gaussian: `psi(t,x) = (pi eps)^{-1/4} (1 + i t)^{-1/2}
/// exp(-(x - q - p t)^2 / (2 eps (1 + i t)) + i p (x - q) / eps - i p^2 t / (2 eps))`.
fn free_gaussian(x: f64, t: f64, q: f64, p: f64, eps: f64) -> Complex64 {
    let z = Complex64::new(1.0, t);
    let u = x - q - p * t;
    let pref = (PI * eps).powf(-0.25) / z.sqrt();
    let arg = -Complex64::new(u * u, 0.0) / (2.0 * eps * z) + Complex64::i() * (p * (x - q) / eps - p * p * t / (2.0 * eps));
    pref * arg.exp()
}

#[test]
fn free_step_matches_analytic_propagator() {
    let eps = 1.0 / 32.0;
    let g = grid1(-8.0, 8.0, 1024);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, eps).unwrap();
    let free = pot1(0.0, ScalarField::zero(), 8.0);
    let t = 0.7;
    let out = strang_step(&free, &psi, t).unwrap();
    let err = g.points().iter().zip(&out.values).map(|(x, v)| (v - free_gaussian(x[0], t, -1.0, 1.0, eps)).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn free_mean_tracks_classical_line() {
    let eps = 1.0 / 64.0;
    let g = grid1(-6.0, 6.0, 1024);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, eps).unwrap();
    let ev = evolve(&pot1(0.0, ScalarField::zero(), 6.0), &psi, 2.0, 0.01, &[0.5, 1.0, 2.0]).unwrap();
    for s in &ev.snapshots {
        assert!((s.psi.mean_position()[0] - (-1.0 + s.t)).abs() < 1e-4, "t = {}", s.t);
    }
    assert!(ev.norm_drift < 1e-10);
}

#[test]
fn harmonic_revival() {
    let eps = 1.0 / 32.0;
    let g = grid1(-6.0, 6.0, 512);
    let psi = make_initial_state(&coherent(1.0, 0.5), &g, eps).unwrap();
    let dt = 2.0 * PI / 1000.0;
    let prop = Propagator::new(&pot1(0.0, ScalarField::poly(&[(0.5, &[2])]), 6.0), &g, eps, dt).unwrap();
    let mut out = psi.clone();
    prop.steps(&mut out.values, 1000);
    assert!(out.fidelity(&psi) >= 0.999, "{}", out.fidelity(&psi));
}

#[test]
fn conical_mean_reaches_singular_set() {
    let eps = 1.0 / 64.0;
    let g = grid1(-4.0, 4.0, 1024);
    let pot = pot1(1.0, ScalarField::zero(), 4.0);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, eps).unwrap();
    let dt = dt_max(eps, 4.0);
    let ev = evolve(&pot, &psi, 3f64.sqrt() - 1.0, dt, &[]).unwrap();
    let mean = ev.snapshots[0].psi.mean_position()[0];
    assert!(mean.abs() < eps.sqrt(), "{mean}");
    assert!(ev.norm_drift < 1e-10);
    assert!(ev.energy_drift < 1e-4, "{}", ev.energy_drift);
}

#[test]
fn evolve_rejects_large_steps_and_flags_tails() {
    let eps = 1.0 / 64.0;
    let g = grid1(-4.0, 4.0, 512);
    let pot = pot1(1.0, ScalarField::zero(), 4.0);
    let psi = make_initial_state(&coherent(-1.0, 1.0), &g, eps).unwrap();
    assert!(matches!(evolve(&pot, &psi, 1.0, 0.05, &[]), Err(WaveError::Invalid(_))));

    // a state carrying momentum near the grid limit
    let g = grid1(-4.0, 4.0, 128);
    let eps = 1.0 / 4.0;
    let kmax = g.axes()[0].k_max();
    let vals: Vec<Complex64> = g.points().iter().map(|x| Complex64::from_polar((-x[0] * x[0]).exp(), 0.9 * kmax * x[0])).collect();
    let mut psi = WavefunctionGrid::new(g, eps, vals).unwrap();
    psi.normalize().unwrap();
    assert!(spectral_tail(&psi) > 1e-6);
    let free = pot1(0.0, ScalarField::zero(), 4.0);
    assert!(matches!(evolve(&free, &psi, 0.01, 0.01, &[]), Err(WaveError::UnderResolved(_))));
}

#[test]
fn strang_is_second_order_for_harmonic() {
    // error of <x> at t = 1 against the exact q cos t + p sin t
    let eps = 1.0 / 32.0;
    let g = grid1(-6.0, 6.0, 512);
    let pot = pot1(0.0, ScalarField::poly(&[(0.5, &[2])]), 6.0);
    let psi = make_initial_state(&coherent(1.0, 0.5), &g, eps).unwrap();
    let exact = 1f64.cos() + 0.5 * 1f64.sin();
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let n = (1.0f64 / dt).round() as usize;
            let prop = Propagator::new(&pot, &g, eps, dt).unwrap();
            let mut out = psi.clone();
            prop.steps(&mut out.values, n);
            (out.mean_position()[0] - exact).abs()
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "{errs:?}");
    }
}

#[test]
fn two_dimensional_run_is_unitary() {
    let eps = 1.0 / 16.0;
    let g = Grid::uniform(2, -3.0, 3.0, 128).unwrap();
    let pot = ConicalPotential::new(&PotentialSpec::canonical(2, 1, 1.0, ScalarField::zero(), 3.0)).unwrap();
    let spec = InitialStateSpec::Coherent { q: vec![-1.0, 0.2], p: vec![1.0, 0.3] };
    let psi = make_initial_state(&spec, &g, eps).unwrap();
    let ev = evolve(&pot, &psi, 1.0, dt_max(eps, 3.0), &[0.5, 1.0]).unwrap();
    assert!(ev.norm_drift < 1e-10);
    assert!(ev.energy_drift < 1e-3, "{}", ev.energy_drift);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn strang_step_is_unitary(q in -1.5f64..1.5, p in -1.5f64..1.5, w in 0.0f64..2.0, dt in 1e-4f64..0.05) {
        let eps = 1.0 / 32.0;
        let g = grid1(-4.0, 4.0, 256);
        let psi = make_initial_state(&coherent(q, p), &g, eps).unwrap();
        let out = strang_step(&pot1(w, ScalarField::poly(&[(0.3, &[2])]), 4.0), &psi, dt).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
