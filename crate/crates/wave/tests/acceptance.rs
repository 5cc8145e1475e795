//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use conical_core::linalg::Matrix;
use conical_core::symbol::{BoxCutoff, Prim};
use conical_core::{
    flow_map, variational_jacobian, ConicalPotential, Error as CoreError, FlowOptions, InitialStateSpec, PhasePoint, PotentialSpec,
    ScalarField, Symbol, SymbolSpec,
};
use conical_wave::egorov::{egorov_gap, EgorovConfig};
use conical_wave::grid::{resolution_points, Axis, Grid, WavefunctionGrid};
use conical_wave::microlocal::{mass_near_s, split_observable, TwoMicrolocalSymbol, YProfile};
use conical_wave::phase::{momentum_density, pair_symbol, pair_symbol_state, wigner_transform};
use conical_wave::solver::{dt_max, evolve, make_initial_state, potential_on_grid};

const SQRT3: f64 = 1.732_050_807_568_877_2;

type Outcome = (bool, String);

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "))
}

fn pot(dim: usize, codim: usize, w: f64, v0: ScalarField, half: f64) -> ConicalPotential {
    ConicalPotential::new(&PotentialSpec::canonical(dim, codim, w, v0, half)).unwrap()
}

fn pp(x: &[f64], xi: &[f64]) -> PhasePoint {
    PhasePoint::new(x.to_vec(), xi.to_vec())
}

fn coherent(q: &[f64], p: &[f64]) -> InitialStateSpec {
    InitialStateSpec::Coherent { q: q.to_vec(), p: p.to_vec() }
}

fn grid1(half: f64, n: usize) -> Grid {
    Grid::new(vec![Axis::new(-half, half, n).unwrap()]).unwrap()
}

// 1. crossing time, crossing momentum and post-crossing state for V = |x|
fn broken_trajectory_oracle() -> Outcome {
    let start = Instant::now();
    let v = pot(1, 1, 1.0, ScalarField::zero(), 10.0);
    let opts = FlowOptions::default();
    let (end, traj) = flow_map(&v, &pp(&[-1.0], &[1.0]), SQRT3, &opts).unwrap();
    let ev = &traj.crossings[0];
    let e_time = (ev.t_cross - (SQRT3 - 1.0)).abs();
    let e_mom = (ev.point.xi[0] - SQRT3).abs();
    // after the crossing: x = sqrt3 s - s^2/2, xi = sqrt3 - s with s = 1
    let e_state = (end.x[0] - (SQRT3 - 0.5)).abs().max((end.xi[0] - (SQRT3 - 1.0)).abs());
    let elapsed = start.elapsed();
    let ok = traj.crossings.len() == 1 && e_time <= 1e-8 && e_mom <= 1e-8 && e_state <= 1e-7 && elapsed < Duration::from_secs(1);
    (ok, format!("|dt_cross|={e_time:.1e} |dxi_cross|={e_mom:.1e} |dstate|={e_state:.1e} runtime={elapsed:.2?}"))
}

fn max_energy_drift(v: &ConicalPotential, p0: &PhasePoint, t: f64) -> f64 {
    let (_, traj) = flow_map(v, p0, t, &FlowOptions::default()).unwrap();
    let e0 = v.energy(&p0.x, &p0.xi);
    traj.sample(0.005).iter().map(|(_, p)| (v.energy(&p.x, &p.xi) - e0).abs()).fold(0.0, f64::max)
}

// 2. energy through the crossing, 1D and planar V = |x_1|
fn energy_conservation() -> Outcome {
    let d1 = max_energy_drift(&pot(1, 1, 1.0, ScalarField::zero(), 10.0), &pp(&[-1.0], &[1.0]), 3.0);
    let d2 = max_energy_drift(&pot(2, 1, 1.0, ScalarField::zero(), 10.0), &pp(&[-1.0, 0.0], &[1.0, 0.5]), 3.0);
    (d1 <= 1e-6 && d2 <= 1e-6, format!("max|dH| 1D={d1:.1e} 2D={d2:.1e} over t in [0,3]"))
}

// 3. Liouville: det of the finite-difference Jacobian across the crossing
fn liouville() -> Outcome {
    let cases = [
        (pot(1, 1, 1.0, ScalarField::zero(), 10.0), pp(&[-1.0], &[1.0])),
        (pot(2, 1, 1.0, ScalarField::zero(), 10.0), pp(&[-1.0, 0.0], &[1.0, 0.5])),
    ];
    let opts = FlowOptions::default();
    let mut ok = true;
    let mut msg = Vec::new();
    for (i, (v, p0)) in cases.iter().enumerate() {
        let errs: Vec<f64> = [1e-3, 5e-4]
            .iter()
            .map(|&h| (variational_jacobian(v, p0, SQRT3, h, &opts).unwrap().determinant() - 1.0).abs())
            .collect();
        // central differences: the error must not grow when h halves (round-off floor 1e-9)
        let converging = errs[1] <= errs[0] * 0.5 + 1e-9;
        ok &= errs.iter().all(|e| *e <= 1e-4) && converging;
        msg.push(format!("d={} |det-1|(h)={:.1e} (h/2)={:.1e}", i + 1, errs[0], errs[1]));
    }
    (ok, msg.join("; "))
}

fn xi_block(j: &Matrix, d: usize) -> Vec<f64> {
    (0..2 * d).flat_map(|r| (d..2 * d).map(move |c| (r, c))).map(|(r, c)| j[(r, c)]).collect()
}

// 4. continuity of d Phi / d xi in t for data on S*: one-sided limits at t = 0
// (the phase points where the (-1, 1) runs cross). From data off S the xi-column
// jumps by 2 d(tau)/d(xi) times the force, since the crossing time moves with xi.
fn xi_derivative_continuity() -> Outcome {
    let x2c = 0.5 * (SQRT3 - 1.0);
    let cases = [
        (pot(1, 1, 1.0, ScalarField::zero(), 10.0), pp(&[0.0], &[SQRT3])),
        (pot(2, 1, 1.0, ScalarField::zero(), 10.0), pp(&[0.0, x2c], &[SQRT3, 0.5])),
    ];
    let opts = FlowOptions::default();
    let mut worst: f64 = 0.0;
    let mut raw = Vec::new();
    for (v, p0) in &cases {
        let d = v.dim();
        let gap = |sigma: f64| -> Vec<f64> {
            let before = variational_jacobian(v, p0, -sigma, 1e-6, &opts).unwrap();
            let after = variational_jacobian(v, p0, sigma, 1e-6, &opts).unwrap();
            xi_block(&after, d).iter().zip(xi_block(&before, d)).map(|(a, b)| a - b).collect()
        };
        let (g1, g2) = (gap(1e-3), gap(5e-4));
        let extrapolated = g1.iter().zip(&g2).map(|(a, b)| (2.0 * b - a).abs()).fold(0.0, f64::max);
        raw.push(g2.iter().map(|v| v.abs()).fold(0.0, f64::max));
        worst = worst.max(extrapolated);
    }
    (worst <= 1e-3, format!("Richardson limit of the xi-column jump {worst:.1e} (raw at 5e-4: {})", sci(&raw)))
}

// 5. t d^2V(x_t) -> B1 along the branch launched from S in the plane
fn singular_hessian() -> Outcome {
    let v = pot(2, 2, 1.0, ScalarField::zero(), 10.0);
    let p0 = pp(&[0.0, 0.0], &[1.0, 0.0]);
    let b1 = v.singular_hessian_b1(&p0.x, &p0.xi).unwrap();
    let (_, traj) = flow_map(&v, &p0, 2e-3, &FlowOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..=18 {
        let t = 1e-4 * 10f64.powf(k as f64 / 18.0);
        let x = traj.state_at(t).unwrap().x;
        let h = v.hessian_v(&x).unwrap().scale(t);
        worst = worst.max(h.sub(&b1).norm() / b1.norm());
    }
    (worst <= 0.05, format!("max ||t d2V - B1|| / ||B1|| = {worst:.2e} on [1e-4, 1e-3]"))
}

fn plateau_symbol(xc: f64, xw: f64, kc: f64, kr: f64) -> Symbol {
    Symbol::constant(1, 1.0)
        .with_x_factor(0, Prim::Gauss { center: xc, width: xw })
        .with_xi_factor(0, Prim::Plateau { center: kc, radius: kr })
}

fn wigner_catalog() -> Vec<Symbol> {
    let spec = |s: SymbolSpec| Symbol::from_spec(&s, 1).unwrap();
    let bump = |xc: f64, kc: f64, sx: f64, sk: f64| {
        spec(SymbolSpec::GaussianBump { amplitude: 1.0, x_center: vec![xc], xi_center: vec![kc], x_width: sx, xi_width: sk })
    };
    let boxed = Some(BoxCutoff { x_center: Some(vec![0.2]), x_radius: Some(1.0), xi_center: Some(vec![0.1]), xi_radius: Some(1.0) });
    vec![
        Symbol::constant(1, 1.0),
        bump(-1.0, 1.0, 0.3, 0.3),
        bump(0.0, 0.0, 0.6, 0.8),
        bump(0.8, -0.5, 0.2, 0.5),
        spec(SymbolSpec::MonomialCutoff { coef: 1.0, x_pow: vec![1], xi_pow: vec![], cutoff: None }),
        spec(SymbolSpec::MonomialCutoff { coef: 1.0, x_pow: vec![], xi_pow: vec![1], cutoff: None }),
        spec(SymbolSpec::MonomialCutoff { coef: 1.0, x_pow: vec![1], xi_pow: vec![1], cutoff: None }),
        spec(SymbolSpec::MonomialCutoff { coef: 0.5, x_pow: vec![2], xi_pow: vec![1], cutoff: boxed.clone() }),
        spec(SymbolSpec::MonomialCutoff { coef: 1.0, x_pow: vec![], xi_pow: vec![2], cutoff: boxed }),
        spec(SymbolSpec::Product {
            factors: vec![
                SymbolSpec::GaussianBump { amplitude: 2.0, x_center: vec![0.0], xi_center: vec![0.0], x_width: 0.5, xi_width: 0.6 },
                SymbolSpec::MonomialCutoff { coef: 1.0, x_pow: vec![1], xi_pow: vec![1], cutoff: None },
            ],
        }),
        plateau_symbol(-0.5, 0.4, 0.8, 0.4),
    ]
}

// 6. marginals and the pairing identity across symbols x states, d = 1, n = 1024
fn wigner_layer() -> Outcome {
    let start = Instant::now();
    let eps = 1.0 / 64.0;
    let g = grid1(4.0, 1024);
    let c = |q: f64, p: f64| make_initial_state(&coherent(&[q], &[p]), &g, eps).unwrap();
    let two = {
        let (a, b) = (c(-1.0, 0.5), c(1.0, -0.5));
        let mut psi = WavefunctionGrid::new(g.clone(), eps, a.values.iter().zip(&b.values).map(|(u, v)| u + v).collect()).unwrap();
        psi.normalize().unwrap();
        psi
    };
    let wkb = {
        let amp = ScalarField::poly(&[(1.0, &[0]), (-0.25, &[2]), (6.0 / 256.0, &[4]), (-4.0 / 4096.0, &[6]), (1.0 / 65536.0, &[8])]);
        let spec = InitialStateSpec::Wkb { amplitude: amp, phase: ScalarField::poly(&[(0.25, &[2])]) };
        make_initial_state(&spec, &g, eps).unwrap()
    };
    let (mut marg, mut rel): (f64, f64) = (0.0, 0.0);
    let symbols = wigner_catalog();
    for psi in [c(-1.0, 1.0), two, wkb] {
        let w = wigner_transform(&psi).unwrap();
        let pos = w.position_marginal();
        marg = marg.max(pos.iter().zip(&psi.values).map(|(m, v)| (m - v.norm_sqr()).abs()).fold(0.0, f64::max));
        let exact = momentum_density(&psi, &w.xi_points());
        marg = marg.max(w.momentum_marginal().iter().zip(&exact).map(|(m, e)| (m - e).abs()).fold(0.0, f64::max));
        for a in &symbols {
            let lhs = pair_symbol(a, &w).unwrap();
            let rhs = pair_symbol_state(a, &psi).unwrap();
            rel = rel.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-3));
        }
    }
    let elapsed = start.elapsed();
    let ok = marg <= 1e-8 && rel <= 1e-6 && elapsed < Duration::from_secs(30);
    (ok, format!("marginal err={marg:.1e} pairing rel err={rel:.1e} ({} symbols x 3 states) runtime={elapsed:.1?}", symbols.len()))
}

// 7. smooth Egorov rate for V = x^2/2
fn smooth_egorov_rate() -> Outcome {
    let start = Instant::now();
    let cfg = EgorovConfig::new(1.0, vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0], vec![[-4.0, 4.0]], 2.0);
    let (xc, kc) = (1f64.cos(), -1f64.sin());
    let symbols = vec![
        Symbol::from_spec(
            &SymbolSpec::GaussianBump { amplitude: 1.0, x_center: vec![xc], xi_center: vec![kc], x_width: 0.3, xi_width: 0.3 },
            1,
        )
        .unwrap(),
        Symbol::from_spec(
            &SymbolSpec::GaussianBump { amplitude: 1.0, x_center: vec![xc + 0.2], xi_center: vec![kc - 0.1], x_width: 0.2, xi_width: 0.25 },
            1,
        )
        .unwrap(),
        plateau_symbol(xc, 0.3, kc, 0.2),
    ];
    let v = pot(1, 1, 0.0, ScalarField::poly(&[(0.5, &[2])]), 4.0);
    let table = egorov_gap(&v, &coherent(&[1.0], &[0.0]), &symbols, &cfg).unwrap();
    let slope = table.slope.unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    let ok = slope >= 1.5 && elapsed < Duration::from_secs(300);
    (ok, format!("D(eps)={} slope={slope:.2} runtime={elapsed:.1?}", sci(&table.gaps.iter().map(|g| g.1).collect::<Vec<_>>())))
}

// 8. conical Egorov: D(eps) decreases through the crossing
fn conical_egorov() -> Outcome {
    let start = Instant::now();
    let t = SQRT3 - 1.0 + 0.5;
    // classical image of (-1, 1): x = sqrt3 s - s^2/2, xi = sqrt3 - s at s = 0.5
    let (xc, kc) = (SQRT3 * 0.5 - 0.125, SQRT3 - 0.5);
    let cfg = EgorovConfig::new(t, vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0], vec![[-3.0, 3.0]], 2.5);
    let symbols = vec![
        plateau_symbol(xc, 0.25, kc, 0.3),
        plateau_symbol(xc + 0.15, 0.15, kc + 0.1, 0.2),
        plateau_symbol(xc - 0.1, 0.2, kc - 0.1, 0.25),
        plateau_symbol(xc, 0.35, kc, 0.15).with_xi_factor(0, Prim::Power { n: 1 }),
    ];
    let v = pot(1, 1, 1.0, ScalarField::zero(), 3.0);
    let table = egorov_gap(&v, &coherent(&[-1.0], &[1.0]), &symbols, &cfg).unwrap();
    let d: Vec<f64> = table.gaps.iter().map(|g| g.1).collect();
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    let halved = d[3] <= 0.5 * d[0];
    let elapsed = start.elapsed();
    let ok = decreasing && halved && elapsed < Duration::from_secs(900);
    (ok, format!("D(eps)={} particles={:?} runtime={elapsed:.1?}", sci(&d), table.particles))
}

fn conical_run(eps: f64, half: f64, times: &[f64]) -> (ConicalPotential, Vec<(f64, WavefunctionGrid)>) {
    let v = pot(1, 1, 1.0, ScalarField::zero(), half);
    let g = grid1(half, resolution_points(2.0 * half, 2.5, eps));
    let psi0 = make_initial_state(&coherent(&[-1.0], &[1.0]), &g, eps).unwrap();
    let v_max = potential_on_grid(&v, &g).unwrap().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let t_final = times.iter().copied().fold(0.0, f64::max);
    let ev = evolve(&v, &psi0, t_final, dt_max(eps, v_max), times).unwrap();
    (v, ev.snapshots.into_iter().map(|s| (s.t, s.psi)).collect())
}

// 9. time-averaged mass near S* is linear in the tube radius
fn mass_decay() -> Outcome {
    let eps = 1.0 / 128.0;
    let tc = SQRT3 - 1.0;
    let times: Vec<f64> = (0..=80).map(|k| tc - 0.4 + 0.01 * k as f64).collect();
    let (v, snaps) = conical_run(eps, 3.0, &times);
    let radii = [0.2, 0.1, 0.05];
    let mut avg = [0.0; 3];
    for (_, psi) in &snaps {
        let w = wigner_transform(psi).unwrap();
        for (a, r) in avg.iter_mut().zip(radii) {
            *a += mass_near_s(&v, &w, r, None) / snaps.len() as f64;
        }
    }
    let ratios = [avg[0] / avg[1], avg[1] / avg[2]];
    let ok = ratios.iter().all(|q| *q >= 2.0 / 1.5 && *q <= 2.0 * 1.5);
    (ok, format!("mean mass r=0.2,0.1,0.05: {} ratios {ratios:.2?}", sci(&avg)))
}

// 10. two-scale partition on the (eps, R, delta) lattice; concentration only at the crossing
fn two_scale_partition() -> Outcome {
    let one = Symbol::constant(1, 1.0);
    let base = plateau_symbol(0.0, 0.5, SQRT3, 0.5);
    let symbols = [
        TwoMicrolocalSymbol::new(one.clone(), YProfile::One, 1).unwrap(),
        TwoMicrolocalSymbol::new(base.clone(), YProfile::Compact { radius: 2.0 }, 1).unwrap(),
        TwoMicrolocalSymbol::new(base, YProfile::Directional { r0: 1.0, direction: vec![1.0] }, 1).unwrap(),
    ];
    let tc = SQRT3 - 1.0;
    let mut defect: f64 = 0.0;
    let mut on_min = f64::INFINITY;
    let mut off_max: f64 = 0.0;
    for eps in [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0] {
        // off the crossing: the initial packet, at distance 1 from S; on it: t = tc
        let (_, snaps) = conical_run(eps, 3.0, &[0.0, tc]);
        for (k, (_, psi)) in snaps.iter().enumerate() {
            for r in [2.0, 4.0] {
                for delta in [0.2, 0.4] {
                    for b in &symbols {
                        let s = split_observable(b, psi, r, delta).unwrap();
                        defect = defect.max(s.partition_defect());
                    }
                    let s = split_observable(&symbols[0], psi, r, delta).unwrap();
                    if k == 0 {
                        off_max = off_max.max(s.inner + s.outer);
                    } else {
                        on_min = on_min.min(s.inner + s.outer);
                    }
                }
            }
        }
    }
    let ok = defect <= 1e-6 && on_min >= 0.5 && off_max < 0.5;
    (ok, format!("max partition defect={defect:.1e} inner+outer: on-crossing min={on_min:.3} off-crossing max={off_max:.1e}"))
}

// 11. V = -|x| from (0, 0) must refuse to pick a branch
fn non_generic_guard() -> Outcome {
    let v = pot(1, 1, -1.0, ScalarField::zero(), 10.0);
    match flow_map(&v, &pp(&[0.0], &[0.0]), 1.0, &FlowOptions::default()) {
        Err(CoreError::NonGenericCrossing { t, .. }) => (true, format!("NonGenericCrossing at t={t}")),
        Err(e) => (false, format!("unexpected error {e:?}")),
        Ok((p, _)) => (false, format!("silently continued to {p:?}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("broken-trajectory oracle", broken_trajectory_oracle),
        ("energy conservation through crossing", energy_conservation),
        ("Liouville determinant", liouville),
        ("xi-derivative continuity", xi_derivative_continuity),
        ("singular Hessian scaling", singular_hessian),
        ("Wigner layer identities", wigner_layer),
        ("smooth Egorov rate", smooth_egorov_rate),
        ("conical Egorov decrease", conical_egorov),
        ("mass near S* decay", mass_decay),
        ("two-scale partition", two_scale_partition),
        ("non-generic guard", non_generic_guard),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.map_or(false, |k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({detail}) [{:.1?}]",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
