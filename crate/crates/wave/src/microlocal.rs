//! Finite-eps proxies for the two-scale structure near a flat singular set
//! `S = {x_1 = .. = x_p = 0}`: the concentration zoom `y = x'/eps`,
//! cutoff-split pairings, and phase-space mass near `S*`.

use conical_core::symbol::RadialCutoff;
use conical_core::{ConicalPotential, PhaseWindow, Symbol};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, WaveError};
use crate::grid::{Axis, Grid, WavefunctionGrid};
use crate::phase::{pair_symbol_state, PhaseSpaceField};

/// Dependence of a two-scale symbol on `y = x'/eps`.
#[derive(Debug, Clone, PartialEq)]
pub enum YProfile {
    /// No `y` dependence.
    One,
    /// `chi(|y| / radius)`.
    Compact { radius: f64 },
    /// `(1 - chi(|y| / r0)) (y . dir / |y|)^2`: homogeneous of degree zero
    /// beyond `2 r0`.
    Directional { r0: f64, direction: Vec<f64> },
}

/// `b(x, xi, y)` = base symbol times a `y`-profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMicrolocalSymbol {
    pub base: Symbol,
    pub profile: YProfile,
    pub codim: usize,
}

impl TwoMicrolocalSymbol {
    pub fn new(base: Symbol, profile: YProfile, codim: usize) -> Result<Self> {
        if codim == 0 || codim > base.dim() {
            return Err(WaveError::Invalid(format!("codimension {codim} out of range")));
        }
        if let YProfile::Directional { direction, .. } = &profile {
            if direction.len() != codim {
                return Err(WaveError::Invalid("direction must have p components".into()));
            }
        }
        Ok(TwoMicrolocalSymbol { base, profile, codim })
    }

    /// The phase-space symbol `b(x, xi, x'/eps)`.
    pub fn at_scale(&self, eps: f64) -> Symbol {
        match &self.profile {
            YProfile::One => self.base.clone(),
            YProfile::Compact { radius } => self.base.clone().with_radial(RadialCutoff {
                codim: self.codim,
                radius: radius * eps,
                complement: false,
                direction: None,
            }),
            YProfile::Directional { r0, direction } => self.base.clone().with_radial(RadialCutoff {
                codim: self.codim,
                radius: r0 * eps,
                complement: true,
                direction: Some(direction.clone()),
            }),
        }
    }
}

/// Requires the canonical constraint `g = (x_1, .., x_p)`.
pub fn check_flat(pot: &ConicalPotential) -> Result<()> {
    if !pot.is_canonical() {
        return Err(WaveError::Invalid("two-scale diagnostics need the canonical constraint g = (x_1..x_p)".into()));
    }
    Ok(())
}

/// Evaluates the trigonometric interpolant of every line along `axis` at
/// the points `targets`.
fn resample_axis(values: &[Complex64], shape: &[usize], axis: usize, ax: &Axis, targets: &[f64]) -> Vec<Complex64> {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer = values.len() / (n * stride);
    let m = targets.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    // basis[t][k] = e^{i k_m (x_t - lo)} / n, Nyquist as a cosine
    let basis: Vec<Vec<Complex64>> = targets
        .iter()
        .map(|&x| {
            (0..n)
                .map(|k| {
                    let s = x - ax.lo;
                    if k == n / 2 {
                        Complex64::new((ax.wavenumber(k) * s).cos() / n as f64, 0.0)
                    } else {
                        Complex64::from_polar(1.0 / n as f64, ax.wavenumber(k) * s)
                    }
                })
                .collect()
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * m * stride];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            for (j, l) in line.iter_mut().enumerate() {
                *l = values[o * n * stride + s + j * stride];
            }
            fft.process(&mut line);
            for (t, b) in basis.iter().enumerate() {
                out[o * m * stride + s + t * stride] = b.iter().zip(&line).map(|(u, v)| u * v).sum();
            }
        }
    }
    out
}

/// `Phi(y, x'') = eps^{p/2} psi(eps y, x'')` on `[-y_max, y_max)^p` with
/// `n_y` points per zoomed axis (spectral interpolation). The zoomed state's
/// mass equals that of `psi` on the box `|x'_i| <= eps y_max`.
pub fn rescale_concentration(psi: &WavefunctionGrid, p: usize, y_max: f64, n_y: usize) -> Result<WavefunctionGrid> {
    let d = psi.grid.dim();
    if p == 0 || p > d {
        return Err(WaveError::Invalid(format!("codimension {p} out of range for d = {d}")));
    }
    let eps = psi.eps;
    let half = eps * y_max;
    let mut axes = psi.grid.axes().to_vec();
    let mut values = psi.values.clone();
    let mut shape = psi.grid.shape();
    for k in 0..p {
        let ax = psi.grid.axes()[k];
        if -half < ax.lo || half > ax.hi {
            return Err(WaveError::ZoomWindowExceedsGrid { needed: half, available: (-ax.lo).min(ax.hi) });
        }
        let y_axis = Axis::new(-y_max, y_max, n_y)?;
        let targets: Vec<f64> = y_axis.points().iter().map(|y| eps * y).collect();
        values = resample_axis(&values, &shape, k, &ax, &targets);
        shape[k] = n_y;
        axes[k] = y_axis;
    }
    let scale = eps.powf(p as f64 / 2.0);
    values.iter_mut().for_each(|v| *v *= scale);
    WavefunctionGrid::new(Grid::new(axes)?, eps, values)
}

/// The three cutoff-split pairings and the untruncated one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPairing {
    /// `<op(b chi(x'/(R eps))) psi, psi>`.
    pub inner: f64,
    /// `<op(b (1 - chi(x'/(R eps))) chi(x'/delta)) psi, psi>`.
    pub outer: f64,
    /// `<op(b (1 - chi(x'/delta))) psi, psi>`.
    pub bulk: f64,
    /// `<op(b) psi, psi>`.
    pub total: f64,
}

impl SplitPairing {
    /// `|inner + outer + bulk - total|`.
    pub fn partition_defect(&self) -> f64 {
        (self.inner + self.outer + self.bulk - self.total).abs()
    }
}

fn radial(codim: usize, radius: f64, complement: bool) -> RadialCutoff {
    RadialCutoff { codim, radius, complement, direction: None }
}

/// Splits `<op(b) psi, psi>` into the parts within `R eps` of `S`, between
/// `R eps` and `delta`, and away from `S`. Each part is quantized and paired
/// separately.
pub fn split_observable(b: &TwoMicrolocalSymbol, psi: &WavefunctionGrid, r: f64, delta: f64) -> Result<SplitPairing> {
    let eps = psi.eps;
    if r * eps >= delta / 2.0 {
        return Err(WaveError::ScaleOrderingViolated { r_eps: r * eps, half_delta: delta / 2.0 });
    }
    let p = b.codim;
    let sym = b.at_scale(eps);
    let inner = sym.clone().with_radial(radial(p, r * eps, false));
    let outer = sym.clone().with_radial(radial(p, r * eps, true)).with_radial(radial(p, delta, false));
    let bulk = sym.clone().with_radial(radial(p, delta, true));
    Ok(SplitPairing {
        inner: pair_symbol_state(&inner, psi)?,
        outer: pair_symbol_state(&outer, psi)?,
        bulk: pair_symbol_state(&bulk, psi)?,
        total: pair_symbol_state(&sym, psi)?,
    })
}

/// Mass of a phase-space field in `{|g(x)| < r, |dg(x) xi| > sstar}`
/// (intersected with `window` when given).
pub fn mass_near_s(pot: &ConicalPotential, field: &PhaseSpaceField, r: f64, window: Option<&PhaseWindow>) -> f64 {
    let nk = field.xi_len();
    let xis = field.xi_points();
    let sstar = pot.tolerances().sstar;
    let mut total = 0.0;
    for (j, row) in field.values.chunks(nk).enumerate() {
        let x = field.x_point(j);
        if pot.g_norm(&x) >= r {
            continue;
        }
        for (w, xi) in row.iter().zip(&xis) {
            let c = pot.dg_xi(&x, xi);
            if c.iter().map(|v| v * v).sum::<f64>().sqrt() > sstar && window.map_or(true, |win| win.contains(&x, xi)) {
                total += w;
            }
        }
    }
    total * field.cell()
}
