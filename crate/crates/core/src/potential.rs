//! Conical potentials `V(x) = w(x) |g(x)| + V0(x)` and the derivatives the
//! dynamics need.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ConstraintSpec, Polynomial, ScalarField};
use crate::linalg::{dot, norm, Matrix};

/// Thresholds deciding "on S", "in S*", full rank of `dg` and trajectory hits
/// of `S` when `codim >= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub g_zero: f64,
    pub sstar: f64,
    pub rank: f64,
    pub hit: f64,
}

impl Tolerances {
    /// Defaults scaled by the box diameter and a typical momentum magnitude.
    pub fn scaled(box_diameter: f64, xi_scale: f64) -> Self {
        Tolerances { g_zero: 1e-12 * box_diameter, sstar: 1e-8 * xi_scale, rank: 1e-6, hit: 1e-7 }
    }
}

/// The potential block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct PotentialSpec {
    pub dim: usize,
    pub codim: usize,
    pub w: ScalarField,
    #[serde(rename = "V0")]
    pub v0: ScalarField,
    pub g: ConstraintSpec,
    #[serde(rename = "box")]
    pub bbox: Vec<[f64; 2]>,
}

impl PotentialSpec {
    /// `V(x) = w |x_1..x_p| + V0` with constant `w` and canonical `g`.
    pub fn canonical(dim: usize, codim: usize, w: f64, v0: ScalarField, half_width: f64) -> Self {
        PotentialSpec {
            dim,
            codim,
            w: ScalarField::constant(w),
            v0,
            g: ConstraintSpec::coordinates(),
            bbox: vec![[-half_width, half_width]; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicalPotential {
    dim: usize,
    codim: usize,
    w: Polynomial,
    v0: Polynomial,
    g: Vec<Polynomial>,
    canonical: bool,
    bbox: Vec<[f64; 2]>,
    tol: Tolerances,
}

impl ConicalPotential {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive"));
        }
        if spec.codim == 0 || spec.codim > d {
            return Err(Error::InvalidArgument("codimension must satisfy 1 <= p <= d"));
        }
        if spec.bbox.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: spec.bbox.len() });
        }
        if spec.bbox.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::InvalidArgument("box intervals must satisfy lo < hi"));
        }
        let diam = libm::sqrt(spec.bbox.iter().map(|[lo, hi]| (hi - lo) * (hi - lo)).sum());
        Ok(ConicalPotential {
            dim: d,
            codim: spec.codim,
            w: spec.w.compile(d)?,
            v0: spec.v0.compile(d)?,
            g: spec.g.compile(d, spec.codim)?,
            canonical: spec.g.is_canonical(),
            bbox: spec.bbox.clone(),
            tol: Tolerances::scaled(diam, 1.0),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn bbox(&self) -> &[[f64; 2]] {
        &self.bbox
    }

    /// True when `g` is the canonical family `(x_1, ..., x_p)`.
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn box_diameter(&self) -> f64 {
        libm::sqrt(self.bbox.iter().map(|[lo, hi]| (hi - lo) * (hi - lo)).sum())
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bbox).all(|(&v, [lo, hi])| v >= *lo && v <= *hi)
    }

    fn check_box(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if self.in_box(x) {
            Ok(())
        } else {
            Err(Error::OutOfBox { x: x.to_vec() })
        }
    }

    pub fn w(&self, x: &[f64]) -> f64 {
        self.w.eval(x)
    }

    pub fn v0(&self, x: &[f64]) -> f64 {
        self.v0.eval(x)
    }

    pub fn g(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|gi| gi.eval(x)).collect()
    }

    pub fn g_norm(&self, x: &[f64]) -> f64 {
        norm(&self.g(x))
    }

    /// The `p x d` Jacobian of `g`.
    pub fn dg(&self, x: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.codim, self.dim);
        for (i, gi) in self.g.iter().enumerate() {
            let row = gi.grad(x);
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `dg(x) xi`, the normal velocity of `g` along the flow.
    pub fn dg_xi(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        self.dg(x).mul_vec(xi)
    }

    pub fn on_singular_set(&self, x: &[f64]) -> bool {
        self.g_norm(x) <= self.tol.g_zero
    }

    /// `(x, xi)` with `x` on `S` and `|dg(x) xi| > sstar_tol`.
    pub fn in_sstar(&self, x: &[f64], xi: &[f64]) -> bool {
        self.on_singular_set(x) && norm(&self.dg_xi(x, xi)) > self.tol.sstar
    }

    /// `V(x)` without the working-box check.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.w.eval(x) * self.g_norm(x) + self.v0.eval(x)
    }

    pub fn eval_v(&self, x: &[f64]) -> Result<f64> {
        self.check_box(x)?;
        Ok(self.value(x))
    }

    pub fn energy(&self, x: &[f64], xi: &[f64]) -> f64 {
        0.5 * dot(xi, xi) + self.value(x)
    }

    /// True when `w` vanishes identically, so `V = V0` has no singular set.
    pub fn is_smooth(&self) -> bool {
        self.w.is_zero()
    }

    pub fn grad_v(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_box(x)?;
        let gv = self.g(x);
        let gn = norm(&gv);
        if self.is_smooth() {
            let mut out = vec![0.0; self.dim];
            self.v0.add_grad(x, 1.0, &mut out);
            return Ok(out);
        }
        if gn <= self.tol.g_zero {
            return Err(Error::OnSingularSet { x: x.to_vec(), g_norm: gn });
        }
        let mut out = vec![0.0; self.dim];
        self.add_launch_gradient(x, gn, &gv.iter().map(|v| v / gn).collect::<Vec<_>>(), &mut out);
        Ok(out)
    }

    /// `grad V0 + |g| grad w + w dg^T u`, where `u` stands in for `g/|g|`.
    pub(crate) fn add_launch_gradient(&self, x: &[f64], g_norm: f64, u: &[f64], out: &mut [f64]) {
        self.v0.add_grad(x, 1.0, out);
        if g_norm != 0.0 {
            self.w.add_grad(x, g_norm, out);
        }
        let wx = self.w.eval(x);
        for (gi, &ui) in self.g.iter().zip(u) {
            gi.add_grad(x, wx * ui, out);
        }
    }

    /// Gradient of the smooth extension `w sigma g + V0` of `V` from the side
    /// `sigma g > 0` (codimension one only). Writes into `out`.
    pub fn grad_v_sided(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        debug_assert_eq!(self.codim, 1);
        out.iter_mut().for_each(|v| *v = 0.0);
        let gval = self.g[0].eval(x);
        self.v0.add_grad(x, 1.0, out);
        self.w.add_grad(x, sigma * gval, out);
        let wx = self.w.eval(x);
        self.g[0].add_grad(x, sigma * wx, out);
    }

    /// Gradient used inside the integrator: exact off `S`; for codimension one
    /// the smooth extension from side `sigma`.
    pub(crate) fn grad_for_side(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        if self.codim == 1 {
            self.grad_v_sided(x, sigma, out);
            return Ok(());
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.is_smooth() {
            self.v0.add_grad(x, 1.0, out);
            return Ok(());
        }
        let gv = self.g(x);
        let gn = norm(&gv);
        if gn <= self.tol.g_zero {
            return Err(Error::OnSingularSet { x: x.to_vec(), g_norm: gn });
        }
        let u: Vec<f64> = gv.iter().map(|v| v / gn).collect();
        self.add_launch_gradient(x, gn, &u, out);
        Ok(())
    }

    /// Unit vector `dg(x) xi / |dg(x) xi|` at a point of `S*`.
    pub fn omega0(&self, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let c = self.dg_xi(x, xi);
        let cn = norm(&c);
        if cn <= self.tol.sstar {
            return Err(Error::NonGenericPoint { x: x.to_vec(), xi: xi.to_vec() });
        }
        Ok(c.into_iter().map(|v| v / cn).collect())
    }

    /// One-sided limit of the force `-grad V` at a point of `S*`:
    /// `-grad V0(x) - side w(x) dg(x)^T omega0`. `side = +1` is the outgoing
    /// limit, `side = -1` the incoming one.
    pub fn one_sided_force(&self, x: &[f64], xi: &[f64], side: f64) -> Result<Vec<f64>> {
        self.check_box(x)?;
        let gn = self.g_norm(x);
        if gn > self.tol.g_zero {
            return Err(Error::InvalidArgument("one_sided_force needs a point of S"));
        }
        let omega = self.omega0(x, xi)?;
        let mut f = vec![0.0; self.dim];
        self.v0.add_grad(x, -1.0, &mut f);
        let wx = self.w.eval(x);
        for (gi, &oi) in self.g.iter().zip(&omega) {
            gi.add_grad(x, -side * wx * oi, &mut f);
        }
        Ok(f)
    }

    pub fn hessian_v(&self, x: &[f64]) -> Result<Matrix> {
        self.check_box(x)?;
        let d = self.dim;
        let gv = self.g(x);
        let gn = norm(&gv);
        if gn <= self.tol.g_zero {
            return Err(Error::OnSingularSet { x: x.to_vec(), g_norm: gn });
        }
        let u: Vec<f64> = gv.iter().map(|v| v / gn).collect();
        let dg = self.dg(x);
        let wx = self.w.eval(x);
        let gw = self.w.grad(x);
        // grad |g| = dg^T u
        let grad_gn = dg.tr_mul_vec(&u);
        let mut h = vec![0.0; d * d];
        self.v0.add_hessian(x, 1.0, &mut h);
        self.w.add_hessian(x, gn, &mut h);
        for (gi, &ui) in self.g.iter().zip(&u) {
            gi.add_hessian(x, wx * ui, &mut h);
        }
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] += gw[i] * grad_gn[j] + grad_gn[i] * gw[j];
                // (w/|g|) (dg^T dg - dg^T u u^T dg)
                let mut s = 0.0;
                for k in 0..self.codim {
                    s += dg[(k, i)] * dg[(k, j)];
                }
                h[i * d + j] += wx / gn * (s - grad_gn[i] * grad_gn[j]);
            }
        }
        Ok(Matrix::from_rows(d, d, h))
    }

    /// Coefficient of `1/t` in `d^2 V(x_t)` along the outgoing branch from a
    /// point of `S*`:
    /// `B1 dx = w/|dg xi| (dg^T dg dx - (omega . dg dx) dg^T omega)`.
    pub fn singular_hessian_b1(&self, x: &[f64], xi: &[f64]) -> Result<Matrix> {
        self.check_box(x)?;
        if self.g_norm(x) > self.tol.g_zero {
            return Err(Error::InvalidArgument("singular_hessian_b1 needs a point of S"));
        }
        let c = self.dg_xi(x, xi);
        let cn = norm(&c);
        if cn <= self.tol.sstar {
            return Err(Error::NonGenericPoint { x: x.to_vec(), xi: xi.to_vec() });
        }
        let omega: Vec<f64> = c.iter().map(|v| v / cn).collect();
        let dg = self.dg(x);
        let v = dg.tr_mul_vec(&omega);
        let scale = self.w.eval(x) / cn;
        let d = self.dim;
        let mut b = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..self.codim {
                    s += dg[(k, i)] * dg[(k, j)];
                }
                b[(i, j)] = scale * (s - v[i] * v[j]);
            }
        }
        Ok(b)
    }

    /// Lattice with `n` points per axis covering the working box.
    pub fn box_lattice(&self, n: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = n.max(2);
        let total = n.pow(self.dim as u32);
        (0..total).map(move |mut idx| {
            let mut x = vec![0.0; self.dim];
            for (k, [lo, hi]) in self.bbox.iter().enumerate() {
                let i = idx % n;
                idx /= n;
                x[k] = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            }
            x
        })
    }

    /// Smallest singular value of `dg` on the lattice must exceed `rank_tol`.
    pub fn check_full_rank(&self, n: usize) -> Result<()> {
        for x in self.box_lattice(n) {
            let s = self.dg(&x).smallest_singular_value();
            if !(s > self.tol.rank) {
                return Err(Error::RankDeficient { x, sigma_min: s });
            }
        }
        Ok(())
    }

    /// `w > 0` on the lattice, required when the run expects crossings.
    pub fn check_positive_weight(&self, n: usize) -> Result<()> {
        for x in self.box_lattice(n) {
            let w = self.w.eval(&x);
            if !(w > 0.0) {
                return Err(Error::NonPositiveWeight { x, w });
            }
        }
        Ok(())
    }

    /// Largest `|V|` on a lattice of the box.
    pub fn max_abs_on_box(&self, n: usize) -> f64 {
        self.box_lattice(n).map(|x| self.value(&x).abs()).fold(0.0, f64::max)
    }
}
