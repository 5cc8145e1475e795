use conical_core::{ConicalPotential, InitialStateSpec, PotentialSpec, ScalarField, Symbol, SymbolSpec};
use conical_wave::grid::{Axis, Grid, WavefunctionGrid};
use conical_wave::microlocal::{check_flat, mass_near_s, rescale_concentration, split_observable, TwoMicrolocalSymbol, YProfile};
use conical_wave::phase::wigner_transform;
use conical_wave::solver::make_initial_state;
use conical_wave::WaveError;

fn grid1(half: f64, n: usize) -> Grid {
    Grid::new(vec![Axis::new(-half, half, n).unwrap()]).unwrap()
}

fn coherent(g: &Grid, q: &[f64], p: &[f64], eps: f64) -> WavefunctionGrid {
    make_initial_state(&InitialStateSpec::Coherent { q: q.to_vec(), p: p.to_vec() }, g, eps).unwrap()
}

fn abs_pot(d: usize) -> ConicalPotential {
    ConicalPotential::new(&PotentialSpec::canonical(d, 1, 1.0, ScalarField::zero(), 4.0)).unwrap()
}

fn erf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 is too coarse here; integrate the density instead
    let n = 20_000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

#[test]
fn zoom_of_centered_state_keeps_its_mass() {
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let psi = coherent(&g, &[0.0], &[0.7], eps);
    let y_max = 8.0 / eps.sqrt();
    let z = rescale_concentration(&psi, 1, y_max, 1024).unwrap();
    assert!(z.norm_sqr() >= 0.99, "{}", z.norm_sqr());
    // zoomed Gaussian has width eps^{-1/2} in y: compare with erf(a / sqrt eps)
    let z = rescale_concentration(&psi, 1, 12.0, 2048).unwrap();
    let exact = erf(12.0 * eps / eps.sqrt());
    assert!((z.norm_sqr() - exact).abs() < 1e-6, "{} vs {exact}", z.norm_sqr());
}

#[test]
fn zoom_is_an_isometry_on_aligned_nodes() {
    // y nodes eps * y land on the original grid (dx = eps)
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let psi = coherent(&g, &[0.1], &[0.5], eps);
    let z = rescale_concentration(&psi, 1, 16.0, 32).unwrap();
    let restricted: f64 = g
        .points()
        .iter()
        .zip(&psi.values)
        .filter(|(x, _)| x[0] >= -0.25 - 1e-12 && x[0] < 0.25 - 1e-12)
        .map(|(_, v)| v.norm_sqr())
        .sum::<f64>()
        * g.cell();
    assert!((z.norm_sqr() - restricted).abs() < 1e-12, "{} vs {restricted}", z.norm_sqr());
}

#[test]
fn zoom_of_distant_state_is_empty() {
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let psi = coherent(&g, &[1.5], &[0.0], eps);
    let (delta, y_max) = (1.0, 8.0);
    assert!(eps <= delta / (2.0 * y_max));
    let z = rescale_concentration(&psi, 1, y_max, 256).unwrap();
    assert!(z.norm_sqr() <= 1e-8);
    assert!(matches!(rescale_concentration(&psi, 1, 1000.0, 256), Err(WaveError::ZoomWindowExceedsGrid { .. })));
}

#[test]
fn zoom_in_two_dimensions_keeps_transverse_axis() {
    let eps = 1.0 / 16.0;
    let g = Grid::uniform(2, -2.0, 2.0, 64).unwrap();
    let psi = coherent(&g, &[0.0, 0.5], &[0.5, 0.0], eps);
    let z = rescale_concentration(&psi, 1, 3.0 / eps.sqrt(), 128).unwrap();
    assert_eq!(z.grid.shape(), vec![128, 64]);
    assert_eq!(z.grid.axes()[1], g.axes()[1]);
    assert!((z.norm_sqr() - erf(3.0)).abs() < 1e-5, "{}", z.norm_sqr());
}

fn b_one() -> TwoMicrolocalSymbol {
    TwoMicrolocalSymbol::new(Symbol::constant(1, 1.0), YProfile::One, 1).unwrap()
}

#[test]
fn partition_of_unity() {
    let eps = 1.0 / 128.0;
    let g = grid1(4.0, 1024);
    let psi = coherent(&g, &[0.05], &[1.5], eps);
    let s = split_observable(&b_one(), &psi, 4.0, 0.2).unwrap();
    assert!((s.inner + s.outer + s.bulk - 1.0).abs() < 1e-6, "{s:?}");
    assert!((s.total - 1.0).abs() < 1e-10);
    assert!(s.partition_defect() < 1e-6);
}

#[test]
fn partition_for_catalog_profiles() {
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let psi = coherent(&g, &[0.02], &[1.2], eps);
    let base = Symbol::from_spec(
        &SymbolSpec::GaussianBump { amplitude: 1.0, x_center: vec![0.0], xi_center: vec![1.2], x_width: 0.5, xi_width: 0.3 },
        1,
    )
    .unwrap();
    for profile in [YProfile::One, YProfile::Compact { radius: 2.0 }, YProfile::Directional { r0: 1.0, direction: vec![1.0] }] {
        let b = TwoMicrolocalSymbol::new(base.clone(), profile.clone(), 1).unwrap();
        for (r, delta) in [(2.0, 0.2), (4.0, 0.4)] {
            let s = split_observable(&b, &psi, r, delta).unwrap();
            assert!(s.partition_defect() < 1e-6 * s.total.abs().max(1.0), "{profile:?} {s:?}");
        }
    }
}

#[test]
fn no_concentration_away_from_s() {
    let eps = 1.0 / 256.0;
    let g = grid1(4.0, 2048);
    let psi = coherent(&g, &[0.5], &[1.0], eps);
    let s = split_observable(&b_one(), &psi, 8.0, 0.1).unwrap();
    assert!(s.inner.abs() <= 1e-6 && s.outer.abs() <= 1e-6, "{s:?}");
}

#[test]
fn concentration_on_the_crossing() {
    let eps = 1.0 / 128.0;
    let g = grid1(4.0, 1024);
    let psi = coherent(&g, &[0.0], &[3f64.sqrt()], eps);
    let s = split_observable(&b_one(), &psi, 8.0, 0.2).unwrap();
    assert!(s.inner + s.outer >= 0.5, "{s:?}");
}

#[test]
fn scale_ordering_is_enforced() {
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let psi = coherent(&g, &[0.0], &[1.0], eps);
    assert!(matches!(split_observable(&b_one(), &psi, 8.0, 0.2), Err(WaveError::ScaleOrderingViolated { .. })));
}

#[test]
fn two_microlocal_symbol_validation() {
    assert!(TwoMicrolocalSymbol::new(Symbol::constant(1, 1.0), YProfile::One, 2).is_err());
    assert!(TwoMicrolocalSymbol::new(Symbol::constant(2, 1.0), YProfile::Directional { r0: 1.0, direction: vec![1.0, 0.0] }, 1).is_err());
    let curved = ConicalPotential::new(&PotentialSpec {
        dim: 1,
        codim: 1,
        w: ScalarField::constant(1.0),
        v0: ScalarField::zero(),
        g: conical_core::ConstraintSpec::Fields(vec![ScalarField::poly(&[(1.0, &[1]), (0.1, &[2])])]),
        bbox: vec![[-1.0, 1.0]],
    })
    .unwrap();
    assert!(check_flat(&curved).is_err());
    assert!(check_flat(&abs_pot(1)).is_ok());
}

#[test]
fn phase_space_mass_near_s() {
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 512);
    let pot = abs_pot(1);
    let far = wigner_transform(&coherent(&g, &[-1.0], &[1.0], eps)).unwrap();
    assert!(mass_near_s(&pot, &far, 0.1, None).abs() < 1e-12);
    let on = wigner_transform(&coherent(&g, &[0.0], &[1.0], eps)).unwrap();
    let m = mass_near_s(&pot, &on, 0.5, None);
    assert!(m > 0.99, "{m}");
    assert!(mass_near_s(&pot, &on, 0.2, None) < m);
}
