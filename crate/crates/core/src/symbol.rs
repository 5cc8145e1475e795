//! Closed-form phase-space symbols `a(x, xi)`.
//!
//! Every symbol in the catalog factors as `coef * X(x) * H(xi)` where `H` is
//! a product of one-dimensional factors per momentum axis and `X` is a
//! product of per-axis factors and optional radial cutoffs in the leading
//! coordinates. This keeps all `xi`-derivatives exact and lets the
//! quantization code treat position and momentum parts separately.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cutoff::{chi, chi_derivative};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::potential::ConicalPotential;

fn one() -> f64 {
    1.0
}

/// Plateau cutoffs on a box: per axis `chi(|u - c| / r)`, so the symbol is
/// untouched within distance `r` of the center and vanishes beyond `2r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoxCutoff {
    #[serde(default)]
    pub x_center: Option<Vec<f64>>,
    #[serde(default)]
    pub x_radius: Option<f64>,
    #[serde(default)]
    pub xi_center: Option<Vec<f64>>,
    #[serde(default)]
    pub xi_radius: Option<f64>,
}

/// Symbol catalog entry as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    Constant {
        value: f64,
    },
    /// `A exp(-|x - x_c|^2 / (2 sx^2) - |xi - xi_c|^2 / (2 sxi^2))`.
    GaussianBump {
        #[serde(default = "one")]
        amplitude: f64,
        x_center: Vec<f64>,
        xi_center: Vec<f64>,
        x_width: f64,
        xi_width: f64,
    },
    /// `coef x^alpha xi^beta` times an optional box cutoff.
    MonomialCutoff {
        #[serde(default = "one")]
        coef: f64,
        #[serde(default)]
        x_pow: Vec<u32>,
        #[serde(default)]
        xi_pow: Vec<u32>,
        #[serde(default)]
        cutoff: Option<BoxCutoff>,
    },
    Product {
        factors: Vec<SymbolSpec>,
    },
}

/// One-dimensional building blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Prim {
    Gauss { center: f64, width: f64 },
    Power { n: u32 },
    Plateau { center: f64, radius: f64 },
}

impl Prim {
    /// `m`-th derivative at `u`.
    pub fn derivative(&self, u: f64, m: usize) -> f64 {
        match *self {
            Prim::Gauss { center, width } => {
                let z = (u - center) / width;
                let e = libm::exp(-0.5 * z * z);
                // probabilists' Hermite recursion: d^m e^{-z^2/2} = (-1)^m He_m(z) e^{-z^2/2}
                let (mut h0, mut h1) = (1.0, z);
                let he = if m == 0 {
                    1.0
                } else {
                    for k in 1..m {
                        let h2 = z * h1 - k as f64 * h0;
                        h0 = h1;
                        h1 = h2;
                    }
                    h1
                };
                let sgn = if m % 2 == 0 { 1.0 } else { -1.0 };
                sgn * he * e / libm::pow(width, m as f64)
            }
            Prim::Power { n } => {
                let n = n as usize;
                if m > n {
                    return 0.0;
                }
                let falling: f64 = ((n - m + 1)..=n).map(|k| k as f64).product();
                falling * libm::pow(u, (n - m) as f64)
            }
            Prim::Plateau { center, radius } => {
                let s = u - center;
                let r = s.abs() / radius;
                let sgn = if s < 0.0 && m % 2 == 1 { -1.0 } else { 1.0 };
                sgn * chi_derivative(r, m) / libm::pow(radius, m as f64)
            }
        }
    }

    fn localizes(&self) -> bool {
        !matches!(self, Prim::Power { .. })
    }

    /// Interval outside which the factor is zero or below `1e-30` relative.
    fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Prim::Gauss { center, width } => Some((center - 12.0 * width, center + 12.0 * width)),
            Prim::Plateau { center, radius } => Some((center - 2.0 * radius, center + 2.0 * radius)),
            Prim::Power { .. } => None,
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `m`-th derivative of a product of primitives (general Leibniz rule).
fn product_derivative(prims: &[Prim], u: f64, m: usize) -> f64 {
    match prims {
        [] => {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        }
        [p] => p.derivative(u, m),
        [p, rest @ ..] => (0..=m).map(|j| binom(m, j) * p.derivative(u, j) * product_derivative(rest, u, m - j)).sum(),
    }
}

fn axes_support(axes: &[Vec<Prim>]) -> Option<Vec<[f64; 2]>> {
    axes.iter()
        .map(|prims| {
            prims.iter().filter_map(Prim::support).fold(None, |acc: Option<(f64, f64)>, (lo, hi)| {
                Some(match acc {
                    None => (lo, hi),
                    Some((a, b)) => (a.max(lo), b.min(hi)),
                })
            })
        })
        .map(|o| o.map(|(lo, hi)| [lo, hi.max(lo)]))
        .collect()
}

/// Radial cutoff in the leading `codim` coordinates:
/// `chi(|x'| / radius)`, or `1 - chi(...)` when `complement` is set,
/// optionally times the homogeneous angular factor `(x' . dir / |x'|)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialCutoff {
    pub codim: usize,
    pub radius: f64,
    pub complement: bool,
    pub direction: Option<Vec<f64>>,
}

impl RadialCutoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let xp = &x[..self.codim];
        let r = norm(xp);
        let c = chi(r / self.radius);
        let mut v = if self.complement { 1.0 - c } else { c };
        if let Some(dir) = &self.direction {
            if r == 0.0 {
                return 0.0;
            }
            let proj: f64 = xp.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>() / r;
            v *= proj * proj;
        }
        v
    }
}

/// Rectangular phase-space window.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseWindow {
    pub x: Vec<[f64; 2]>,
    pub xi: Vec<[f64; 2]>,
}

impl PhaseWindow {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn contains(&self, x: &[f64], xi: &[f64]) -> bool {
        let inside = |v: &[f64], b: &[[f64; 2]]| v.iter().zip(b).all(|(u, [lo, hi])| *u >= *lo && *u <= *hi);
        inside(x, &self.x) && inside(xi, &self.xi)
    }
}

/// Compiled symbol `coef * X(x) * H(xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    dim: usize,
    coef: f64,
    x_axes: Vec<Vec<Prim>>,
    xi_axes: Vec<Vec<Prim>>,
    radial: Vec<RadialCutoff>,
}

fn lattice(bounds: &[[f64; 2]], n: usize) -> Vec<Vec<f64>> {
    let n = n.max(2);
    let d = bounds.len();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % n;
                    idx /= n;
                    let [lo, hi] = bounds[k];
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect()
}

fn multi_indices(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|a: Vec<usize>| {
                let used: usize = a.iter().sum();
                (0..=max_order - used).map(move |k| {
                    let mut b = a.clone();
                    b.push(k);
                    b
                })
            })
            .collect();
    }
    out
}

impl Symbol {
    pub fn constant(dim: usize, value: f64) -> Self {
        Symbol { dim, coef: value, x_axes: vec![vec![]; dim], xi_axes: vec![vec![]; dim], radial: vec![] }
    }

    pub fn from_spec(spec: &SymbolSpec, dim: usize) -> Result<Self> {
        let check = |v: &[f64]| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: dim, found: v.len() })
            }
        };
        match spec {
            SymbolSpec::Constant { value } => Ok(Symbol::constant(dim, *value)),
            SymbolSpec::GaussianBump { amplitude, x_center, xi_center, x_width, xi_width } => {
                check(x_center)?;
                check(xi_center)?;
                if !(*x_width > 0.0 && *xi_width > 0.0) {
                    return Err(Error::InvalidArgument("Gaussian widths must be positive"));
                }
                let mut s = Symbol::constant(dim, *amplitude);
                for k in 0..dim {
                    s.x_axes[k].push(Prim::Gauss { center: x_center[k], width: *x_width });
                    s.xi_axes[k].push(Prim::Gauss { center: xi_center[k], width: *xi_width });
                }
                Ok(s)
            }
            SymbolSpec::MonomialCutoff { coef, x_pow, xi_pow, cutoff } => {
                let mut s = Symbol::constant(dim, *coef);
                for (axes, pows) in [(&mut s.x_axes, x_pow), (&mut s.xi_axes, xi_pow)] {
                    if !pows.is_empty() && pows.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, found: pows.len() });
                    }
                    for (k, &n) in pows.iter().enumerate() {
                        if n > 0 {
                            axes[k].push(Prim::Power { n });
                        }
                    }
                }
                if let Some(c) = cutoff {
                    for (axes, center, radius) in
                        [(&mut s.x_axes, &c.x_center, c.x_radius), (&mut s.xi_axes, &c.xi_center, c.xi_radius)]
                    {
                        let Some(r) = radius else { continue };
                        if !(r > 0.0) {
                            return Err(Error::InvalidArgument("cutoff radius must be positive"));
                        }
                        let zeros = vec![0.0; dim];
                        let center = center.as_deref().unwrap_or(&zeros);
                        if center.len() != dim {
                            return Err(Error::DimensionMismatch { expected: dim, found: center.len() });
                        }
                        for k in 0..dim {
                            axes[k].push(Prim::Plateau { center: center[k], radius: r });
                        }
                    }
                }
                Ok(s)
            }
            SymbolSpec::Product { factors } => {
                factors.iter().try_fold(Symbol::constant(dim, 1.0), |acc, f| Ok(acc.mul(&Symbol::from_spec(f, dim)?)))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coef(&self) -> f64 {
        self.coef
    }

    pub fn is_zero(&self) -> bool {
        self.coef == 0.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Symbol { coef: self.coef * c, ..self.clone() }
    }

    pub fn mul(&self, other: &Symbol) -> Self {
        assert_eq!(self.dim, other.dim);
        let join = |a: &[Vec<Prim>], b: &[Vec<Prim>]| -> Vec<Vec<Prim>> {
            a.iter().zip(b).map(|(u, v)| u.iter().chain(v).cloned().collect()).collect()
        };
        Symbol {
            dim: self.dim,
            coef: self.coef * other.coef,
            x_axes: join(&self.x_axes, &other.x_axes),
            xi_axes: join(&self.xi_axes, &other.xi_axes),
            radial: self.radial.iter().chain(&other.radial).cloned().collect(),
        }
    }

    /// Multiplies by one more position-space factor on `axis`.
    pub fn with_x_factor(mut self, axis: usize, prim: Prim) -> Self {
        self.x_axes[axis].push(prim);
        self
    }

    /// Multiplies by one more momentum factor on `axis`.
    pub fn with_xi_factor(mut self, axis: usize, prim: Prim) -> Self {
        self.xi_axes[axis].push(prim);
        self
    }

    pub fn with_radial(mut self, cut: RadialCutoff) -> Self {
        assert!(cut.codim <= self.dim);
        self.radial.push(cut);
        self
    }

    /// Position factor `X(x)` (without `coef`).
    pub fn x_part(&self, x: &[f64]) -> f64 {
        let sep: f64 = self.x_axes.iter().zip(x).map(|(p, &u)| product_derivative(p, u, 0)).product();
        if sep == 0.0 {
            return 0.0;
        }
        sep * self.radial.iter().map(|r| r.eval(x)).product::<f64>()
    }

    /// Momentum factor `H(xi)` (without `coef`).
    pub fn xi_part(&self, xi: &[f64]) -> f64 {
        self.xi_axes.iter().zip(xi).map(|(p, &u)| product_derivative(p, u, 0)).product()
    }

    /// One-dimensional momentum factor on `axis`, differentiated `m` times.
    pub fn xi_axis(&self, axis: usize, u: f64, m: usize) -> f64 {
        product_derivative(&self.xi_axes[axis], u, m)
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        if self.coef == 0.0 {
            return 0.0;
        }
        let h = self.xi_part(xi);
        if h == 0.0 {
            return 0.0;
        }
        self.coef * h * self.x_part(x)
    }

    /// `d^alpha_xi a(x, xi)`.
    pub fn xi_derivative(&self, x: &[f64], xi: &[f64], alpha: &[usize]) -> f64 {
        let h: f64 = self.xi_axes.iter().zip(xi).zip(alpha).map(|((p, &u), &m)| product_derivative(p, u, m)).product();
        self.coef * h * self.x_part(x)
    }

    pub fn grad_xi(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let xp = self.coef * self.x_part(x);
        (0..self.dim)
            .map(|k| {
                let mut v = xp;
                for (j, (p, &u)) in self.xi_axes.iter().zip(xi).enumerate() {
                    v *= product_derivative(p, u, usize::from(j == k));
                }
                v
            })
            .collect()
    }

    pub fn grad_x(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let h = self.coef * self.xi_part(xi);
        let sep: Vec<f64> = self.x_axes.iter().zip(x).map(|(p, &u)| product_derivative(p, u, 0)).collect();
        let rad: f64 = self.radial.iter().map(|r| r.eval(x)).product();
        (0..self.dim)
            .map(|k| {
                let mut dsep = product_derivative(&self.x_axes[k], x[k], 1);
                for (j, s) in sep.iter().enumerate() {
                    if j != k {
                        dsep *= s;
                    }
                }
                let mut total = dsep * rad;
                if !self.radial.is_empty() {
                    // radial factors: central differences (they only enter diagnostics)
                    let step = 1e-6 * self.radial.iter().map(|r| r.radius).fold(f64::INFINITY, f64::min);
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[k] += step;
                    xm[k] -= step;
                    let rp: f64 = self.radial.iter().map(|r| r.eval(&xp)).product();
                    let rm: f64 = self.radial.iter().map(|r| r.eval(&xm)).product();
                    total += sep.iter().product::<f64>() * (rp - rm) / (2.0 * step);
                }
                h * total
            })
            .collect()
    }

    /// True when every momentum axis carries a decaying factor.
    pub fn localized_in_xi(&self) -> bool {
        self.xi_axes.iter().all(|p| p.iter().any(Prim::localizes))
    }

    /// True when every position axis carries a decaying factor.
    pub fn localized_in_x(&self) -> bool {
        self.x_axes.iter().all(|p| p.iter().any(Prim::localizes))
    }

    /// Bounding box of the position support, when localized.
    pub fn x_support(&self) -> Option<Vec<[f64; 2]>> {
        axes_support(&self.x_axes)
    }

    /// Bounding box of the momentum support, when localized.
    pub fn xi_support(&self) -> Option<Vec<[f64; 2]>> {
        axes_support(&self.xi_axes)
    }

    /// Fraction of `int |a|` lying outside `window`; `None` for symbols that
    /// are not localized in both variables.
    pub fn mass_outside(&self, window: &PhaseWindow) -> Option<f64> {
        let xs = self.x_support()?;
        let ks = self.xi_support()?;
        let mut inside = 1.0;
        let axes = self.x_axes.iter().zip(&xs).zip(&window.x).chain(self.xi_axes.iter().zip(&ks).zip(&window.xi));
        for ((prims, &[lo, hi]), &[wlo, whi]) in axes {
            let n = 4096;
            let h = (hi - lo) / n as f64;
            if h == 0.0 {
                continue;
            }
            let (mut tot, mut inn) = (0.0, 0.0);
            for i in 0..n {
                let u = lo + (i as f64 + 0.5) * h;
                let v = product_derivative(prims, u, 0).abs();
                tot += v;
                if u >= wlo && u <= whi {
                    inn += v;
                }
            }
            if tot > 0.0 {
                inside *= inn / tot;
            }
        }
        Some((1.0 - inside).max(0.0))
    }

    /// The class norm `max_{|alpha| <= d+1} sup |d^alpha_xi a| (1 + |xi|)^{d+1}`
    /// sampled on an `n`-point-per-axis lattice of `window` (defaults to the
    /// support box, or `[-10, 10]` on unbounded axes).
    pub fn norm_m(&self, window: Option<&PhaseWindow>, n: usize) -> f64 {
        if self.coef == 0.0 {
            return 0.0;
        }
        let d = self.dim;
        let fallback = |s: Option<Vec<[f64; 2]>>, axes: &[Vec<Prim>]| -> Vec<[f64; 2]> {
            let s = s.unwrap_or_default();
            (0..d).map(|k| if axes[k].iter().any(Prim::localizes) && s.len() == d { s[k] } else { [-10.0, 10.0] }).collect()
        };
        let (xb, kb) = match window {
            Some(w) => (w.x.clone(), w.xi.clone()),
            None => (fallback(self.x_support(), &self.x_axes), fallback(self.xi_support(), &self.xi_axes)),
        };
        // a = coef X(x) H(xi): the supremum factorizes
        let sup_x = lattice(&xb, n).iter().map(|x| self.x_part(x).abs()).fold(0.0, f64::max);
        let alphas = multi_indices(d, d + 1);
        let weight_pow = (d + 1) as f64;
        let sup_xi = lattice(&kb, n)
            .iter()
            .map(|xi| {
                let w = libm::pow(1.0 + norm(xi), weight_pow);
                alphas
                    .iter()
                    .map(|a| {
                        let h: f64 = self.xi_axes.iter().zip(xi).zip(a).map(|((p, &u), &m)| product_derivative(p, u, m)).product();
                        h.abs() * w
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        self.coef.abs() * sup_x * sup_xi
    }

    /// Largest `|a|` on the exclusion tube `{|g(x)| < r} x {dg(x) xi = 0}`,
    /// sampled on an `n`-point lattice of the box and of `xi_window`
    /// (momenta projected onto the kernel of `dg(x)`).
    pub fn max_on_exclusion_tube(&self, pot: &ConicalPotential, r: f64, xi_window: &[[f64; 2]], n: usize) -> f64 {
        let xs: Vec<Vec<f64>> = lattice(pot.bbox(), n).into_iter().filter(|x| pot.g_norm(x) < r).collect();
        let mut xs = xs;
        // make sure the tube is sampled even on coarse lattices: add projections onto S
        let extra: Vec<Vec<f64>> = lattice(pot.bbox(), n)
            .into_iter()
            .map(|x| {
                let mut y = x.clone();
                for _ in 0..3 {
                    let gv = pot.g(&y);
                    let dg = pot.dg(&y);
                    let gram = dg.mul(&dg.transpose());
                    if let Some(l) = gram.solve(&gv) {
                        for (a, b) in y.iter_mut().zip(dg.tr_mul_vec(&l)) {
                            *a -= b;
                        }
                    }
                }
                y
            })
            .filter(|x| pot.in_box(x) && pot.g_norm(x) < r)
            .collect();
        xs.extend(extra);
        let ks = lattice(xi_window, n);
        let mut worst: f64 = 0.0;
        for x in &xs {
            let dg = pot.dg(x);
            let gram = dg.mul(&dg.transpose());
            for k in &ks {
                let c = dg.mul_vec(k);
                let Some(l) = gram.solve(&c) else { continue };
                let kp: Vec<f64> = k.iter().zip(dg.tr_mul_vec(&l)).map(|(a, b)| a - b).collect();
                worst = worst.max(self.eval(x, &kp).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_derivatives_match_differences() {
        let p = Prim::Gauss { center: 0.3, width: 0.7 };
        let h = 1e-5;
        for &u in &[-1.0, 0.1, 0.9] {
            for m in 0..4 {
                let fd = (p.derivative(u + h, m) - p.derivative(u - h, m)) / (2.0 * h);
                assert!((fd - p.derivative(u, m + 1)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn leibniz_product() {
        let prims = [Prim::Power { n: 2 }, Prim::Gauss { center: 0.0, width: 1.0 }];
        let h = 1e-5;
        for m in 0..3 {
            let fd = (product_derivative(&prims, 0.4 + h, m) - product_derivative(&prims, 0.4 - h, m)) / (2.0 * h);
            assert!((fd - product_derivative(&prims, 0.4, m + 1)).abs() < 1e-6);
        }
    }

    #[test]
    fn multi_index_count() {
        // |alpha| <= 3 in two variables: 10 indices
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(1, 2).len(), 3);
    }
}
