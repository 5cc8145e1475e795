//! Wigner and Husimi transforms, symbol pairings and Weyl quantization on
//! the discrete grid.
//!
//! The half-shifted samples `psi(x -+ s)` of the Wigner integral are taken on
//! the 2x-refined grid obtained by spectral (zero-padding) interpolation.
//! With `s = m dx/2` the momentum grid has `2n` points per axis at spacing
//! `pi eps / L`, covering `[-eps k_max, eps k_max)`; on this grid both
//! marginal identities hold for band-limited states. The correlation uses
//! `psi` extended by zero outside the box (no wrap-around), which removes
//! the ghost image a periodic Wigner function carries at `x + L/2`. The Weyl
//! operator is the exact discrete adjoint of that map, so
//! `<a, W(psi)> = <op(a) psi, psi>` holds to round-off.

use conical_core::{PhaseWindow, Symbol};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Result, WaveError};
use crate::fft::{circular_convolve, FftNd};
use crate::grid::{Axis, Grid, WavefunctionGrid};
use crate::solver::{spectral_tail, TAIL_LIMIT};

/// Largest dense phase-space array (elements) we are willing to build.
pub const DENSE_CAP: usize = 1 << 24;

/// Largest fraction of a symbol's mass allowed outside the window.
pub const CLIP_LIMIT: f64 = 1e-6;

/// Momentum axis `xi_s = (s - n/2) dxi`, `s = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiAxis {
    pub n: usize,
    pub dxi: f64,
}

impl XiAxis {
    pub fn for_axis(a: &Axis, eps: f64) -> Self {
        XiAxis { n: 2 * a.n, dxi: std::f64::consts::PI * eps / a.length() }
    }

    pub fn point(&self, s: usize) -> f64 {
        (s as f64 - (self.n / 2) as f64) * self.dxi
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|s| self.point(s)).collect()
    }

    /// FFT bin holding storage index `s`.
    fn fft_bin(&self, s: usize) -> usize {
        (s + self.n / 2) % self.n
    }

    pub fn bounds(&self) -> [f64; 2] {
        [self.point(0), self.point(self.n - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Wigner,
    Husimi,
}

/// Real field on the tensor grid `x_axes x xi_axes`; storage is x-major
/// (`values[xi_index + n_xi * x_index]`), both parts in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceField {
    pub x_axes: Vec<Axis>,
    pub xi_axes: Vec<XiAxis>,
    pub eps: f64,
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

fn multi(shape: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        out[k] = idx % shape[k];
        idx /= shape[k];
    }
    out
}

impl PhaseSpaceField {
    pub fn dim(&self) -> usize {
        self.x_axes.len()
    }

    pub fn x_len(&self) -> usize {
        self.x_axes.iter().map(|a| a.n).product()
    }

    pub fn xi_len(&self) -> usize {
        self.xi_axes.iter().map(|a| a.n).product()
    }

    pub fn x_grid(&self) -> Grid {
        Grid::new(self.x_axes.clone()).expect("valid axes")
    }

    pub fn x_cell(&self) -> f64 {
        self.x_axes.iter().map(Axis::dx).product()
    }

    pub fn xi_cell(&self) -> f64 {
        self.xi_axes.iter().map(|a| a.dxi).product()
    }

    /// `prod dx dxi`.
    pub fn cell(&self) -> f64 {
        self.x_cell() * self.xi_cell()
    }

    pub fn x_point(&self, idx: usize) -> Vec<f64> {
        let shape: Vec<usize> = self.x_axes.iter().map(|a| a.n).collect();
        multi(&shape, idx).iter().zip(&self.x_axes).map(|(&j, a)| a.point(j)).collect()
    }

    pub fn xi_point(&self, idx: usize) -> Vec<f64> {
        let shape: Vec<usize> = self.xi_axes.iter().map(|a| a.n).collect();
        multi(&shape, idx).iter().zip(&self.xi_axes).map(|(&s, a)| a.point(s)).collect()
    }

    pub fn xi_points(&self) -> Vec<Vec<f64>> {
        (0..self.xi_len()).map(|i| self.xi_point(i)).collect()
    }

    pub fn window(&self) -> PhaseWindow {
        PhaseWindow {
            x: self.x_axes.iter().map(|a| [a.lo, a.hi]).collect(),
            xi: self.xi_axes.iter().map(XiAxis::bounds).collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(x, xi)` of flat index `i`.
    pub fn point(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let nk = self.xi_len();
        (self.x_point(i / nk), self.xi_point(i % nk))
    }

    /// Phase-space point of the largest value.
    pub fn argmax(&self) -> (Vec<f64>, Vec<f64>) {
        let (i, _) = self.values.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        self.point(i)
    }

    /// `int W dxi` at each position grid point.
    pub fn position_marginal(&self) -> Vec<f64> {
        let nk = self.xi_len();
        let c = self.xi_cell();
        self.values.chunks(nk).map(|row| row.iter().sum::<f64>() * c).collect()
    }

    /// `int W dx` at each momentum grid point.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let nk = self.xi_len();
        let mut out = vec![0.0; nk];
        for row in self.values.chunks(nk) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let c = self.x_cell();
        out.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Shape of the 2x-refined grid.
fn fine_shape(grid: &Grid) -> Vec<usize> {
    grid.shape().iter().map(|n| 2 * n).collect()
}

/// Coarse FFT bins scattered into the fine spectrum: `(fine bin, weight)` per
/// axis; the Nyquist bin is split evenly between `+n/2` and `-n/2`.
fn embed_targets(n: usize, m: usize) -> Vec<(usize, f64)> {
    if m < n / 2 {
        vec![(m, 1.0)]
    } else if m > n / 2 {
        vec![(m + n, 1.0)]
    } else {
        vec![(n / 2, 0.5), (3 * n / 2, 0.5)]
    }
}

fn for_each_embedding(shape: &[usize], mut f: impl FnMut(usize, usize, f64)) {
    let fine: Vec<usize> = shape.iter().map(|n| 2 * n).collect();
    let total: usize = shape.iter().product();
    for idx in 0..total {
        let m = multi(shape, idx);
        let per_axis: Vec<Vec<(usize, f64)>> = m.iter().zip(shape).map(|(&mi, &n)| embed_targets(n, mi)).collect();
        match per_axis.len() {
            1 => {
                for &(a, w) in &per_axis[0] {
                    f(idx, a, w);
                }
            }
            _ => {
                for &(a, wa) in &per_axis[0] {
                    for &(b, wb) in &per_axis[1] {
                        f(idx, a * fine[1] + b, wa * wb);
                    }
                }
            }
        }
    }
}

/// Trigonometric interpolation of `psi` onto the 2x-refined grid
/// (`fine[2 j] = psi[j]`).
pub fn refine(psi: &WavefunctionGrid) -> Vec<Complex64> {
    let shape = psi.grid.shape();
    let fine = fine_shape(&psi.grid);
    let mut hat = psi.values.clone();
    FftNd::new(&shape).forward(&mut hat);
    let mut out = vec![Complex64::new(0.0, 0.0); fine.iter().product()];
    for_each_embedding(&shape, |c, f, w| out[f] += hat[c] * w);
    FftNd::new(&fine).inverse(&mut out);
    let s = 1.0 / psi.grid.len() as f64;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Adjoint of [`refine`] (with respect to the plain `l^2` products).
fn refine_adjoint(v: &[Complex64], grid: &Grid) -> Vec<Complex64> {
    let shape = grid.shape();
    let fine = fine_shape(grid);
    let mut hat = v.to_vec();
    FftNd::new(&fine).forward(&mut hat);
    let mut coarse = vec![Complex64::new(0.0, 0.0); grid.len()];
    for_each_embedding(&shape, |c, f, w| coarse[c] += hat[f] * w);
    FftNd::new(&shape).inverse(&mut coarse);
    let s = 1.0 / grid.len() as f64;
    coarse.iter_mut().for_each(|v| *v *= s);
    coarse
}

fn wrap(v: i64, n: usize) -> usize {
    v.rem_euclid(n as i64) as usize
}

/// Fine-grid index of the multi-index `v` (wrapped periodically).
#[inline]
fn fine_at(fine: &[usize], v: [i64; 2]) -> usize {
    if fine.len() == 1 {
        wrap(v[0], fine[0])
    } else {
        wrap(v[0], fine[0]) * fine[1] + wrap(v[1], fine[1])
    }
}

/// Fine-grid index of `v` when it lies inside the box (no wrap-around).
#[inline]
fn fine_inside(fine: &[usize], v: [i64; 2]) -> Option<usize> {
    let inside = |x: i64, n: usize| x >= 0 && x < n as i64;
    if fine.len() == 1 {
        inside(v[0], fine[0]).then(|| v[0] as usize)
    } else {
        (inside(v[0], fine[0]) && inside(v[1], fine[1])).then(|| v[0] as usize * fine[1] + v[1] as usize)
    }
}

/// Lag multi-index in `[-n/2, n/2)` per axis.
#[inline]
fn centered(fine: &[usize], v: [i64; 2]) -> [i64; 2] {
    let c = |x: i64, n: usize| {
        let n = n as i64;
        let r = x.rem_euclid(n);
        if r >= n / 2 {
            r - n
        } else {
            r
        }
    };
    if fine.len() == 1 {
        [c(v[0], fine[0]), 0]
    } else {
        [c(v[0], fine[0]), c(v[1], fine[1])]
    }
}

/// Multi-index of `idx` padded to two entries.
#[inline]
fn split(shape: &[usize], idx: usize) -> [i64; 2] {
    if shape.len() == 1 {
        [idx as i64, 0]
    } else {
        [(idx / shape[1]) as i64, (idx % shape[1]) as i64]
    }
}

fn check_resolved(psi: &WavefunctionGrid) -> Result<()> {
    let tail = spectral_tail(psi);
    if tail > TAIL_LIMIT {
        return Err(WaveError::UnderResolved(format!("spectral tail {tail:.2e} beyond 0.75 k_max")));
    }
    Ok(())
}

/// Dense Wigner transform `W(x_j, xi_s)`.
pub fn wigner_transform(psi: &WavefunctionGrid) -> Result<PhaseSpaceField> {
    check_resolved(psi)?;
    let grid = &psi.grid;
    let eps = psi.eps;
    let xi_axes: Vec<XiAxis> = grid.axes().iter().map(|a| XiAxis::for_axis(a, eps)).collect();
    let nk: usize = xi_axes.iter().map(|a| a.n).product();
    let total = grid.len() * nk;
    if total > DENSE_CAP {
        return Err(WaveError::TooLarge(total));
    }
    let fine = fine_shape(grid);
    let tilde = refine(psi);
    let fft = FftNd::new(&fine);
    let pref: f64 = grid.axes().iter().map(|a| a.dx() / (2.0 * std::f64::consts::PI * eps)).product();
    let shape = grid.shape();
    let xi_shape: Vec<usize> = xi_axes.iter().map(|a| a.n).collect();
    // storage index -> FFT bin, per momentum point
    let bins: Vec<usize> = (0..nk)
        .map(|s| {
            let ms = multi(&xi_shape, s);
            let b: Vec<usize> = ms.iter().zip(&xi_axes).map(|(&si, a)| a.fft_bin(si)).collect();
            if b.len() == 1 {
                b[0]
            } else {
                b[0] * xi_shape[1] + b[1]
            }
        })
        .collect();
    let mut values = vec![0.0; total];
    values.par_chunks_mut(nk).enumerate().for_each_init(
        || vec![Complex64::new(0.0, 0.0); nk],
        |buf, (j, row)| {
            let jm = split(&shape, j);
            let jm = [2 * jm[0], 2 * jm[1]];
            for (m, b) in buf.iter_mut().enumerate() {
                let mm = centered(&fine, split(&fine, m));
                let minus = fine_inside(&fine, [jm[0] - mm[0], jm[1] - mm[1]]);
                let plus = fine_inside(&fine, [jm[0] + mm[0], jm[1] + mm[1]]);
                *b = match (minus, plus) {
                    (Some(a), Some(c)) => tilde[a] * tilde[c].conj(),
                    _ => Complex64::new(0.0, 0.0),
                };
            }
            fft.inverse(buf);
            for (s, r) in row.iter_mut().enumerate() {
                *r = pref * buf[bins[s]].re;
            }
        },
    );
    Ok(PhaseSpaceField { x_axes: grid.axes().to_vec(), xi_axes, eps, kind: FieldKind::Wigner, values })
}

/// Gaussian smoothing with variance `eps/2` in every position and momentum
/// direction (periodic, discrete kernel normalized to unit sum).
pub fn husimi(field: &PhaseSpaceField) -> PhaseSpaceField {
    let mut out = field.clone();
    out.kind = FieldKind::Husimi;
    let mut shape: Vec<usize> = field.x_axes.iter().map(|a| a.n).collect();
    shape.extend(field.xi_axes.iter().map(|a| a.n));
    let spacings: Vec<f64> = field.x_axes.iter().map(Axis::dx).chain(field.xi_axes.iter().map(|a| a.dxi)).collect();
    let mut planner = FftPlanner::new();
    for axis in 0..shape.len() {
        let n = shape[axis];
        let h = spacings[axis];
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|i| {
                let dist = i.min(n - i) as f64 * h;
                Complex64::new((-dist * dist / field.eps).exp(), 0.0)
            })
            .collect();
        let sum: f64 = kernel.iter().map(|k| k.re).sum();
        kernel.iter_mut().for_each(|k| *k /= sum);
        fwd.process(&mut kernel);
        let stride: usize = shape[axis + 1..].iter().product();
        let outer = out.values.len() / (n * stride);
        let mut line = vec![0.0; n];
        let mut buf = Vec::with_capacity(n);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = out.values[base + j * stride];
                }
                circular_convolve(&mut line, &kernel, &fwd, &inv, &mut buf);
                for (j, l) in line.iter().enumerate() {
                    out.values[base + j * stride] = *l;
                }
            }
        }
    }
    out
}

fn check_clip(a: &Symbol, window: &PhaseWindow) -> Result<()> {
    if let Some(f) = a.mass_outside(window) {
        if f >= CLIP_LIMIT {
            return Err(WaveError::SupportClipped { fraction: f });
        }
    }
    Ok(())
}

fn check_dims(a: &Symbol, d: usize) -> Result<()> {
    if a.dim() != d {
        return Err(WaveError::Invalid(format!("symbol dimension {} vs grid dimension {d}", a.dim())));
    }
    Ok(())
}

/// `int a W dx dxi` by tensor-product quadrature.
pub fn pair_symbol(a: &Symbol, field: &PhaseSpaceField) -> Result<f64> {
    check_dims(a, field.dim())?;
    check_clip(a, &field.window())?;
    Ok(pair_unchecked(a, field))
}

pub(crate) fn pair_unchecked(a: &Symbol, field: &PhaseSpaceField) -> f64 {
    let h: Vec<f64> = field.xi_points().iter().map(|k| a.xi_part(k)).collect();
    let nk = field.xi_len();
    let s: f64 = field
        .values
        .par_chunks(nk)
        .enumerate()
        .map(|(j, row)| {
            let x = a.x_part(&field.x_point(j));
            if x == 0.0 {
                return 0.0;
            }
            x * row.iter().zip(&h).map(|(w, hv)| w * hv).sum::<f64>()
        })
        .sum();
    a.coef() * s * field.cell()
}

/// `op_eps(a) psi`, the Weyl quantization of `a` on the grid.
pub fn apply_weyl(a: &Symbol, psi: &WavefunctionGrid) -> Result<WavefunctionGrid> {
    check_dims(a, psi.grid.dim())?;
    check_resolved(psi)?;
    let grid = &psi.grid;
    let xi_axes: Vec<XiAxis> = grid.axes().iter().map(|ax| XiAxis::for_axis(ax, psi.eps)).collect();
    let window = PhaseWindow { x: grid.bounds(), xi: xi_axes.iter().map(XiAxis::bounds).collect() };
    check_clip(a, &window)?;
    let fine = fine_shape(grid);
    let nf: usize = fine.iter().product();
    let shape = grid.shape();

    // hat H(m) = sum_s H(xi_s) e^{i pi s m / n}
    let xi_shape: Vec<usize> = xi_axes.iter().map(|ax| ax.n).collect();
    let mut h_hat = vec![Complex64::new(0.0, 0.0); nf];
    for s in 0..nf {
        let ms = multi(&xi_shape, s);
        let xi: Vec<f64> = ms.iter().zip(&xi_axes).map(|(&si, ax)| ax.point(si)).collect();
        let mut bins = [0i64; 2];
        for (k, (&si, ax)) in ms.iter().zip(&xi_axes).enumerate() {
            bins[k] = ax.fft_bin(si) as i64;
        }
        h_hat[fine_at(&fine, bins)] = Complex64::new(a.xi_part(&xi), 0.0);
    }
    FftNd::new(&fine).inverse(&mut h_hat);

    let xs: Vec<([i64; 2], f64)> = (0..grid.len())
        .filter_map(|j| {
            let v = a.coef() * a.x_part(&grid.point(j));
            (v != 0.0).then(|| (split(&shape, j), v))
        })
        .collect();
    let tilde = refine(psi);
    let applied: Vec<Complex64> = (0..nf)
        .into_par_iter()
        .map(|l| {
            let lm = split(&fine, l);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, xv) in &xs {
                let m = [lm[0] - 2 * j[0], lm[1] - 2 * j[1]];
                // only pairs that do not wrap around the box
                if centered(&fine, m) != m {
                    continue;
                }
                if let Some(src) = fine_inside(&fine, [2 * j[0] - m[0], 2 * j[1] - m[1]]) {
                    acc += h_hat[fine_at(&fine, m)] * tilde[src] * *xv;
                }
            }
            acc
        })
        .collect();
    let mut out = refine_adjoint(&applied, grid);
    let scale: f64 = grid.axes().iter().map(|ax| 1.0 / (2 * ax.n) as f64).product();
    out.iter_mut().for_each(|v| *v *= scale);
    WavefunctionGrid::new(grid.clone(), psi.eps, out)
}

/// `Re <op_eps(a) psi, psi>` without building the Wigner array.
pub fn pair_symbol_state(a: &Symbol, psi: &WavefunctionGrid) -> Result<f64> {
    let op = apply_weyl(a, psi)?;
    Ok(psi.inner(&op).re)
}

/// `|psi_hat_eps(xi)|^2` with `psi_hat_eps(xi) = (2 pi eps)^{-d/2} int e^{-i x.xi/eps} psi dx`,
/// by direct summation at the given momenta.
pub fn momentum_density(psi: &WavefunctionGrid, xis: &[Vec<f64>]) -> Vec<f64> {
    let d = psi.grid.dim() as i32;
    let pts = psi.grid.points();
    let pref = (2.0 * std::f64::consts::PI * psi.eps).powi(-d) * psi.grid.cell().powi(2);
    xis.par_iter()
        .map(|xi| {
            let s: Complex64 = pts
                .iter()
                .zip(&psi.values)
                .map(|(x, v)| {
                    let ph: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() / psi.eps;
                    v * Complex64::from_polar(1.0, -ph)
                })
                .sum();
            pref * s.norm_sqr()
        })
        .collect()
}
