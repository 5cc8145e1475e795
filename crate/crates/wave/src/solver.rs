//! Initial states and the split-step (Strang) spectral propagator for
//! `i eps d_t psi = -(eps^2/2) Laplace psi + V psi`.

use conical_core::field::Polynomial;
use conical_core::{ConicalPotential, InitialStateSpec};
use num_complex::Complex64;

use crate::error::{Result, WaveError};
use crate::fft::FftNd;
use crate::grid::{Grid, WavefunctionGrid};

/// Fraction of spectral mass allowed beyond `0.75 k_max`.
pub const TAIL_LIMIT: f64 = 1e-6;

/// Samples the initial datum on `grid` and normalizes it.
pub fn make_initial_state(spec: &InitialStateSpec, grid: &Grid, eps: f64) -> Result<WavefunctionGrid> {
    if !(eps > 0.0) {
        return Err(WaveError::Invalid(format!("eps must be positive (got {eps})")));
    }
    let d = grid.dim();
    let limit = eps.sqrt() / 4.0;
    for (k, a) in grid.axes().iter().enumerate() {
        if a.dx() > limit {
            return Err(WaveError::UnderResolved(format!(
                "axis {k}: spacing {:.3e} exceeds sqrt(eps)/4 = {limit:.3e}",
                a.dx()
            )));
        }
    }
    let values: Vec<Complex64> = match spec {
        InitialStateSpec::Coherent { q, p } => {
            if q.len() != d || p.len() != d {
                return Err(WaveError::Invalid(format!("coherent center must have dimension {d}")));
            }
            let pref = (std::f64::consts::PI * eps).powf(-(d as f64) / 4.0);
            grid.points()
                .iter()
                .map(|x| {
                    let mut r2 = 0.0;
                    let mut phase = 0.0;
                    for k in 0..d {
                        let dxk = x[k] - q[k];
                        r2 += dxk * dxk;
                        phase += p[k] * dxk;
                    }
                    Complex64::from_polar(pref * (-r2 / (2.0 * eps)).exp(), phase / eps)
                })
                .collect()
        }
        InitialStateSpec::Wkb { amplitude, phase } => {
            let a: Polynomial = amplitude.compile(d)?;
            let s: Polynomial = phase.compile(d)?;
            for x in grid.points() {
                let gs = s.grad(&x);
                for (k, ax) in grid.axes().iter().enumerate() {
                    if gs[k].abs() > eps * ax.k_max() {
                        return Err(WaveError::UnderResolved(format!(
                            "phase gradient {:.3} on axis {k} leaves the momentum window {:.3}",
                            gs[k],
                            eps * ax.k_max()
                        )));
                    }
                }
            }
            grid.points().iter().map(|x| Complex64::from_polar(1.0, s.eval(x) / eps) * a.eval(x)).collect()
        }
    };
    let mut psi = WavefunctionGrid::new(grid.clone(), eps, values)?;
    psi.normalize()?;
    Ok(psi)
}

/// `min(0.01, eps pi / (4 V_max))`: the potential phase per step stays below `pi/4`.
pub fn dt_max(eps: f64, v_max: f64) -> f64 {
    if v_max <= 0.0 {
        0.01
    } else {
        0.01f64.min(eps * std::f64::consts::PI / (4.0 * v_max))
    }
}

/// `V` sampled pointwise on the grid (no smoothing).
pub fn potential_on_grid(pot: &ConicalPotential, grid: &Grid) -> Result<Vec<f64>> {
    if pot.dim() != grid.dim() {
        return Err(WaveError::Invalid(format!("potential dimension {} vs grid dimension {}", pot.dim(), grid.dim())));
    }
    Ok(grid.points().iter().map(|x| pot.value(x)).collect())
}

/// Fraction of `sum |psi_hat|^2` in bins with `|k| > 0.75 k_max` on some axis.
pub fn spectral_tail(psi: &WavefunctionGrid) -> f64 {
    let grid = &psi.grid;
    let fft = FftNd::new(&grid.shape());
    let mut hat = psi.values.clone();
    fft.forward(&mut hat);
    let (mut tail, mut total) = (0.0, 0.0);
    for (i, v) in hat.iter().enumerate() {
        let m = grid.index_to_multi(i);
        let p = v.norm_sqr();
        total += p;
        if m.iter().zip(grid.axes()).any(|(&mi, a)| a.wavenumber(mi).abs() > 0.75 * a.k_max()) {
            tail += p;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Precomputed Strang propagator for a fixed `(V, grid, eps, dt)`.
pub struct Propagator {
    eps: f64,
    dt: f64,
    v: Vec<f64>,
    k2: Vec<f64>,
    half_v: Vec<Complex64>,
    full_v: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    fft: FftNd,
}

impl Propagator {
    pub fn new(pot: &ConicalPotential, grid: &Grid, eps: f64, dt: f64) -> Result<Self> {
        let v = potential_on_grid(pot, grid)?;
        Ok(Self::from_values(v, grid, eps, dt))
    }

    pub fn from_values(v: Vec<f64>, grid: &Grid, eps: f64, dt: f64) -> Self {
        let k2 = grid.k_squared();
        let phase = |scale: f64| -> Vec<Complex64> { v.iter().map(|&vi| Complex64::from_polar(1.0, -vi * scale / eps)).collect() };
        let half_v = phase(0.5 * dt);
        let full_v = phase(dt);
        let kinetic = k2.iter().map(|&k| Complex64::from_polar(1.0, -0.5 * eps * k * dt)).collect();
        Propagator { eps, dt, v, k2, half_v, full_v, kinetic, fft: FftNd::new(&grid.shape()) }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn v_max(&self) -> f64 {
        self.v.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn kinetic_step(&self, psi: &mut [Complex64]) {
        self.fft.forward(psi);
        for (p, k) in psi.iter_mut().zip(&self.kinetic) {
            *p *= k;
        }
        self.fft.inverse_normalized(psi);
    }

    /// One Strang step: half potential, full kinetic, half potential.
    pub fn step(&self, psi: &mut [Complex64]) {
        self.steps(psi, 1);
    }

    /// `n` consecutive steps with the inner half potential phases merged.
    pub fn steps(&self, psi: &mut [Complex64], n: usize) {
        if n == 0 || self.dt == 0.0 {
            return;
        }
        mul(psi, &self.half_v);
        for s in 0..n {
            self.kinetic_step(psi);
            mul(psi, if s + 1 == n { &self.half_v } else { &self.full_v });
        }
    }

    /// `<psi, H psi>` with the kinetic part computed spectrally.
    pub fn energy(&self, psi: &WavefunctionGrid) -> f64 {
        let cell = psi.grid.cell();
        let mut hat = psi.values.clone();
        self.fft.forward(&mut hat);
        let n = hat.len() as f64;
        let kin: f64 = hat.iter().zip(&self.k2).map(|(h, k)| 0.5 * self.eps * self.eps * k * h.norm_sqr()).sum::<f64>() / n;
        let pot: f64 = psi.values.iter().zip(&self.v).map(|(p, v)| v * p.norm_sqr()).sum();
        (kin + pot) * cell
    }
}

fn mul(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x *= y;
    }
}

/// Single Strang step of size `dt` (the identity for `dt = 0`).
pub fn strang_step(pot: &ConicalPotential, psi: &WavefunctionGrid, dt: f64) -> Result<WavefunctionGrid> {
    if dt < 0.0 {
        return Err(WaveError::Invalid("time step must be non-negative".into()));
    }
    let mut out = psi.clone();
    if dt == 0.0 {
        return Ok(out);
    }
    Propagator::new(pot, &psi.grid, psi.eps, dt)?.step(&mut out.values);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub psi: WavefunctionGrid,
    pub energy: f64,
    pub spectral_tail: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<Snapshot>,
    pub dt_used: f64,
    /// `max |‖psi(t)‖^2 - ‖psi0‖^2|` over the snapshots.
    pub norm_drift: f64,
    /// `max |E(t) - E(0)| / max(|E(0)|, 1e-300)` over the snapshots.
    pub energy_drift: f64,
}

/// Evolves `psi0` to `t_final` with steps no larger than `dt`, recording the
/// state at each of `snapshot_times` (sorted; `t_final` when empty).
pub fn evolve(pot: &ConicalPotential, psi0: &WavefunctionGrid, t_final: f64, dt: f64, snapshot_times: &[f64]) -> Result<Evolution> {
    if !(t_final >= 0.0) || !(dt > 0.0) {
        return Err(WaveError::Invalid("evolve needs t_final >= 0 and dt > 0".into()));
    }
    let v = potential_on_grid(pot, &psi0.grid)?;
    let v_max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let limit = dt_max(psi0.eps, v_max);
    if dt > limit * (1.0 + 1e-12) {
        return Err(WaveError::Invalid(format!("dt = {dt} exceeds dt_max = {limit}")));
    }
    let mut times: Vec<f64> = if snapshot_times.is_empty() { vec![t_final] } else { snapshot_times.to_vec() };
    times.sort_by(f64::total_cmp);
    if times.iter().any(|&t| t < 0.0 || t > t_final * (1.0 + 1e-12) + 1e-300) {
        return Err(WaveError::Invalid("snapshot times must lie in [0, t_final]".into()));
    }
    let norm0 = psi0.norm_sqr();
    let energy_ref = Propagator::from_values(v.clone(), &psi0.grid, psi0.eps, 0.0).energy(psi0);
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut norm_drift: f64 = 0.0;
    let mut energy_drift: f64 = 0.0;
    let mut dt_used: f64 = 0.0;
    let mut cache: Option<Propagator> = None;
    for &target in &times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            dt_used = dt_used.max(h);
            let reuse = cache.as_ref().map_or(false, |p| (p.dt() - h).abs() <= 1e-15 * h);
            if !reuse {
                cache = Some(Propagator::from_values(v.clone(), &psi.grid, psi.eps, h));
            }
            cache.as_ref().expect("propagator").steps(&mut psi.values, n);
            t = target;
        }
        let prop = cache.get_or_insert_with(|| Propagator::from_values(v.clone(), &psi.grid, psi.eps, dt));
        let energy = prop.energy(&psi);
        let tail = spectral_tail(&psi);
        if tail > TAIL_LIMIT {
            return Err(WaveError::UnderResolved(format!("spectral tail {tail:.2e} at t = {t:.6}")));
        }
        norm_drift = norm_drift.max((psi.norm_sqr() - norm0).abs());
        energy_drift = energy_drift.max((energy - energy_ref).abs() / energy_ref.abs().max(1e-300));
        snapshots.push(Snapshot { t, psi: psi.clone(), energy, spectral_tail: tail });
    }
    Ok(Evolution { snapshots, dt_used, norm_drift, energy_drift })
}
