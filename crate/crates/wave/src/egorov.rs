//! Quantum versus classical transport of phase-space observables.
//!
//! For each `eps` the quantum side evolves `psi0` with the split-step solver
//! and pairs symbols with `W(psi(t))`. The classical side realizes
//! `W(psi0)` as a particle ensemble, pushes it forward with the broken flow,
//! and pairs the same symbols with the result.

use conical_core::measure::{pairing, Particle};
use conical_core::{flow_map, ConicalPotential, Error as CoreError, FlowOptions, InitialStateSpec, ParticleMeasure, PhasePoint, Symbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Result, WaveError};
use crate::grid::{resolution_points, Axis, Grid};
use crate::phase::{husimi, pair_symbol, wigner_transform, PhaseSpaceField};
use crate::solver::{dt_max, evolve, make_initial_state, potential_on_grid};

/// How the classical side realizes the initial Wigner function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Realization {
    /// One signed particle per grid cell with `|W| > threshold * max |W|`,
    /// weight `W dx dxi` (deterministic quadrature).
    WignerQuadrature { threshold: f64 },
    /// `samples` points drawn from the Husimi density, reweighted by `W/H`
    /// so the estimator targets `<a o Phi^t, W>`.
    HusimiSampling { samples: usize, seed: u64 },
}

impl Default for Realization {
    fn default() -> Self {
        Realization::WignerQuadrature { threshold: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgorovConfig {
    pub t: f64,
    pub eps_list: Vec<f64>,
    /// Periodic computational box, one interval per axis.
    pub grid_box: Vec<[f64; 2]>,
    /// Largest momentum the grid must hold (resolution rule).
    pub xi_max: f64,
    /// Points per axis; chosen by the resolution rule when `None`.
    pub n_points: Option<usize>,
    /// Time step; `dt_max(eps)` when `None`.
    pub dt: Option<f64>,
    pub flow: FlowOptions,
    pub realization: Realization,
    /// Exclusion-tube radius; `0.05 * longest box side` when `None`.
    pub exclusion_radius: Option<f64>,
}

impl EgorovConfig {
    pub fn new(t: f64, eps_list: Vec<f64>, grid_box: Vec<[f64; 2]>, xi_max: f64) -> Self {
        EgorovConfig {
            t,
            eps_list,
            grid_box,
            xi_max,
            n_points: None,
            dt: None,
            flow: FlowOptions::default(),
            realization: Realization::default(),
            exclusion_radius: None,
        }
    }

    /// Grid for one `eps` (resolution rule unless overridden).
    pub fn grid_for(&self, eps: f64) -> Result<Grid> {
        let axes = self
            .grid_box
            .iter()
            .map(|&[lo, hi]| {
                let n = self.n_points.unwrap_or_else(|| resolution_points(hi - lo, self.xi_max, eps));
                Axis::new(lo, hi, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgorovRow {
    pub eps: f64,
    pub symbol: usize,
    pub quantum: f64,
    pub classical: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgorovTable {
    pub rows: Vec<EgorovRow>,
    /// `(eps, D(eps))` with `D` the largest gap over the symbols.
    pub gaps: Vec<(f64, f64)>,
    /// Least-squares slope of `log D` against `log eps` (at least two points).
    pub slope: Option<f64>,
    pub particles: Vec<usize>,
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than
/// two usable points.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Signed quadrature particles of a Wigner field.
pub fn wigner_particles(field: &PhaseSpaceField, threshold: f64) -> Result<ParticleMeasure> {
    let cut = threshold * field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nk = field.xi_len();
    let cell = field.cell();
    let xis = field.xi_points();
    let mut parts = Vec::new();
    for (j, row) in field.values.chunks(nk).enumerate() {
        let x = field.x_point(j);
        for (w, xi) in row.iter().zip(&xis) {
            if w.abs() > cut {
                parts.push(Particle { point: PhasePoint::new(x.clone(), xi.clone()), weight: w * cell });
            }
        }
    }
    Ok(ParticleMeasure::signed(parts)?)
}

/// Particles drawn from the Husimi density of `wigner` with weights `W/H`.
/// Sampling is stratified in the cumulative distribution: draw `i` takes
/// `u = (i + U_i) / samples` with `U_i` from ChaCha20 stream `i` under
/// `seed`, so the result does not depend on scheduling.
pub fn husimi_particles(wigner: &PhaseSpaceField, samples: usize, seed: u64) -> Result<ParticleMeasure> {
    if samples == 0 {
        return Err(WaveError::Invalid("need at least one sample".into()));
    }
    let h = husimi(wigner);
    let pos: Vec<f64> = h.values.iter().map(|v| v.max(0.0)).collect();
    let mut cdf = Vec::with_capacity(pos.len());
    let mut acc = 0.0;
    for v in &pos {
        acc += v;
        cdf.push(acc);
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(WaveError::Invalid("Husimi density vanishes".into()));
    }
    let mass = total * h.cell();
    let nk = wigner.xi_len();
    let parts: Vec<Particle> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u: f64 = (i as f64 + rng.gen::<f64>()) / samples as f64 * total;
            let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            let weight = mass / samples as f64 * wigner.values[idx] / pos[idx].max(1e-300);
            Particle { point: PhasePoint::new(wigner.x_point(idx / nk), wigner.xi_point(idx % nk)), weight }
        })
        .collect();
    Ok(ParticleMeasure::signed(parts)?)
}

/// `(Phi^t)_* mu` with particles processed in parallel; the first failing
/// particle (lowest index) is reported.
pub fn par_pushforward(pot: &ConicalPotential, mu: &ParticleMeasure, t: f64, opts: &FlowOptions) -> Result<ParticleMeasure> {
    let moved: Vec<std::result::Result<PhasePoint, CoreError>> =
        mu.particles().par_iter().map(|p| flow_map(pot, &p.point, t, opts).map(|(q, _)| q)).collect();
    let mut points = Vec::with_capacity(moved.len());
    for (index, r) in moved.into_iter().enumerate() {
        points.push(r.map_err(|e| CoreError::Particle { index, cause: Box::new(e) })?);
    }
    Ok(mu.with_points(points))
}

/// Checks that every symbol vanishes (below `1e-8 |coef|`) on the exclusion
/// tube `{|g| < r} x {dg xi = 0}` of a conical potential.
pub fn check_exclusion_tube(pot: &ConicalPotential, symbols: &[Symbol], r: f64, xi_max: f64) -> Result<()> {
    if pot.is_smooth() {
        return Ok(());
    }
    let window = vec![[-xi_max, xi_max]; pot.dim()];
    let n = if pot.dim() == 1 { 201 } else { 41 };
    for (i, a) in symbols.iter().enumerate() {
        let worst = a.max_on_exclusion_tube(pot, r, &window, n);
        if worst > 1e-8 * a.coef().abs().max(1e-300) {
            return Err(WaveError::Invalid(format!("symbol {i} does not vanish on the exclusion tube (|a| = {worst:.3e})")));
        }
    }
    Ok(())
}

/// Runs the comparison for every `eps` in the configuration.
pub fn egorov_gap(pot: &ConicalPotential, spec: &InitialStateSpec, symbols: &[Symbol], cfg: &EgorovConfig) -> Result<EgorovTable> {
    if symbols.is_empty() {
        return Err(WaveError::Invalid("egorov_gap needs at least one symbol".into()));
    }
    let longest = cfg.grid_box.iter().map(|[lo, hi]| hi - lo).fold(0.0, f64::max);
    check_exclusion_tube(pot, symbols, cfg.exclusion_radius.unwrap_or(0.05 * longest), cfg.xi_max)?;
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut counts = Vec::new();
    for &eps in &cfg.eps_list {
        let grid = cfg.grid_for(eps)?;
        let psi0 = make_initial_state(spec, &grid, eps)?;
        let v = potential_on_grid(pot, &grid)?;
        let v_max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dt = cfg.dt.unwrap_or_else(|| dt_max(eps, v_max));
        let w0 = wigner_transform(&psi0)?;
        let evo = evolve(pot, &psi0, cfg.t, dt, &[cfg.t])?;
        let psi_t = &evo.snapshots.last().expect("final snapshot").psi;
        let wt = wigner_transform(psi_t)?;
        let mu0 = match cfg.realization {
            Realization::WignerQuadrature { threshold } => wigner_particles(&w0, threshold)?,
            Realization::HusimiSampling { samples, seed } => husimi_particles(&w0, samples, seed)?,
        };
        drop(w0);
        counts.push(mu0.len());
        let mu_t = par_pushforward(pot, &mu0, cfg.t, &cfg.flow)?;
        let mut worst: f64 = 0.0;
        for (i, a) in symbols.iter().enumerate() {
            let quantum = pair_symbol(a, &wt)?;
            let classical = pairing(a, &mu_t);
            let gap = (quantum - classical).abs();
            worst = worst.max(gap);
            rows.push(EgorovRow { eps, symbol: i, quantum, classical, gap });
        }
        gaps.push((eps, worst));
    }
    let slope = if gaps.len() >= 2 { fit_loglog_slope(&gaps) } else { None };
    Ok(EgorovTable { rows, gaps, slope, particles: counts })
}
