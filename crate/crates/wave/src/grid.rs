//! Periodic position grids and wavefunctions sampled on them.

use num_complex::Complex64;

use crate::error::{Result, WaveError};

/// One periodic axis: `n` points `lo + j (hi - lo)/n`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(WaveError::Invalid(format!("axis bounds must satisfy lo < hi (got {lo}, {hi})")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(WaveError::Invalid(format!("axis point count must be a power of two >= 2 (got {n})")));
        }
        Ok(Axis { lo, hi, n })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Wavenumber of FFT bin `m` (the Nyquist bin is taken negative).
    pub fn wavenumber(&self, m: usize) -> f64 {
        let n = self.n as i64;
        let s = if (m as i64) < n / 2 { m as i64 } else { m as i64 - n };
        2.0 * std::f64::consts::PI * s as f64 / self.length()
    }

    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }
}

/// Smallest power of two with `n >= 1.5 L xi_max / (pi eps)`.
pub fn resolution_points(length: f64, xi_max: f64, eps: f64) -> usize {
    let need = 1.5 * length * xi_max / (std::f64::consts::PI * eps);
    (need.ceil().max(2.0) as usize).next_power_of_two()
}

/// Tensor-product periodic grid in `d` = 1 or 2 dimensions, C order
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(WaveError::Invalid(format!("grids must be 1- or 2-dimensional (got {})", axes.len())));
        }
        Ok(Grid { axes })
    }

    pub fn uniform(d: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Grid::new(vec![Axis::new(lo, hi, n)?; d])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `prod dx`.
    pub fn cell(&self) -> f64 {
        self.axes.iter().map(Axis::dx).product()
    }

    pub fn index_to_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.axes[k].n;
            idx /= self.axes[k].n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.index_to_multi(idx).iter().zip(&self.axes).map(|(&j, a)| a.point(j)).collect()
    }

    /// All grid points in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// `|k|^2` per FFT bin in storage order.
    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.index_to_multi(i).iter().zip(&self.axes).map(|(&m, a)| a.wavenumber(m).powi(2)).sum())
            .collect()
    }

    /// The box `[lo, hi]` per axis.
    pub fn bounds(&self) -> Vec<[f64; 2]> {
        self.axes.iter().map(|a| [a.lo, a.hi]).collect()
    }
}

/// `psi^eps` sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionGrid {
    pub grid: Grid,
    pub eps: f64,
    pub values: Vec<Complex64>,
}

impl WavefunctionGrid {
    pub fn new(grid: Grid, eps: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(WaveError::Invalid(format!("eps must be positive (got {eps})")));
        }
        if values.len() != grid.len() {
            return Err(WaveError::Invalid(format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        Ok(WavefunctionGrid { grid, eps, values })
    }

    pub fn zeros(grid: Grid, eps: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, eps, vec![Complex64::new(0.0, 0.0); n])
    }

    /// `||psi||^2` as a Riemann sum.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(WaveError::Invalid("cannot normalize a zero or non-finite state".into()));
        }
        let s = 1.0 / n.sqrt();
        self.values.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    /// `<self, other> = sum conj(self) other dx`.
    pub fn inner(&self, other: &WavefunctionGrid) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.cell()
    }

    /// `|<self, other>|` for normalized states.
    pub fn fidelity(&self, other: &WavefunctionGrid) -> f64 {
        self.inner(other).norm()
    }

    /// Position mean `<x_k>`.
    pub fn mean_position(&self) -> Vec<f64> {
        let w = self.grid.cell();
        let mut out = vec![0.0; self.grid.dim()];
        for (i, v) in self.values.iter().enumerate() {
            let p = v.norm_sqr() * w;
            for (o, x) in out.iter_mut().zip(self.grid.point(i)) {
                *o += p * x;
            }
        }
        out
    }

    /// Total probability on the points where `pred` holds.
    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        let w = self.grid.cell();
        self.values.iter().enumerate().filter(|(i, _)| pred(&self.grid.point(*i))).map(|(_, v)| v.norm_sqr() * w).sum()
    }
}
