//! Particle realizations of phase-space measures and their transport by
//! the broken flow.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::{flow_map, FlowOptions, PhasePoint};
use crate::linalg::norm;
use crate::potential::ConicalPotential;
use crate::symbol::{PhaseWindow, Symbol};

/// Initial datum of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// Gaussian wave packet centered at `(q, p)`.
    Coherent { q: Vec<f64>, p: Vec<f64> },
    /// `A(x) exp(i S(x) / eps)`.
    Wkb { amplitude: ScalarField, phase: ScalarField },
}

impl InitialStateSpec {
    pub fn dim(&self) -> Option<usize> {
        match self {
            InitialStateSpec::Coherent { q, .. } => Some(q.len()),
            InitialStateSpec::Wkb { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub point: PhasePoint,
    pub weight: f64,
}

/// A finite weighted sum of Dirac masses. Weights are nonnegative unless
/// the measure was built with [`ParticleMeasure::signed`] (a quadrature of a
/// signed density such as a Wigner function).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMeasure {
    particles: Vec<Particle>,
    signed: bool,
}

impl ParticleMeasure {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.iter().any(|p| !(p.weight >= 0.0) || !p.weight.is_finite()) {
            return Err(Error::InvalidArgument("particle weights must be finite and nonnegative"));
        }
        Ok(ParticleMeasure { particles, signed: false })
    }

    /// Signed quadrature measure; weights only need to be finite.
    pub fn signed(particles: Vec<Particle>) -> Result<Self> {
        if particles.iter().any(|p| !p.weight.is_finite()) {
            return Err(Error::InvalidArgument("particle weights must be finite"));
        }
        Ok(ParticleMeasure { particles, signed: true })
    }

    pub fn empty() -> Self {
        ParticleMeasure { particles: Vec::new(), signed: false }
    }

    pub fn delta(point: PhasePoint, weight: f64) -> Result<Self> {
        Self::new(vec![Particle { point, weight }])
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Same weights at new positions (used by pushforwards computed elsewhere).
    pub fn with_points(&self, points: Vec<PhasePoint>) -> Self {
        assert_eq!(points.len(), self.particles.len());
        let particles = self.particles.iter().zip(points).map(|(p, point)| Particle { point, weight: p.weight }).collect();
        ParticleMeasure { particles, signed: self.signed }
    }
}

/// The limiting phase-space measure of an initial family: a unit Dirac mass
/// at `(q, p)` for coherent states, and midpoint quadrature of `|A|^2` on the
/// graph `xi = grad S(x)` over the box for WKB states (`n_particles` nodes in
/// total, split evenly across axes).
pub fn initial_measure(spec: &InitialStateSpec, bbox: &[[f64; 2]], n_particles: usize) -> Result<ParticleMeasure> {
    if n_particles == 0 {
        return Err(Error::InvalidArgument("n_particles must be at least 1"));
    }
    match spec {
        InitialStateSpec::Coherent { q, p } => {
            if q.len() != p.len() {
                return Err(Error::DimensionMismatch { expected: q.len(), found: p.len() });
            }
            ParticleMeasure::delta(PhasePoint::new(q.clone(), p.clone()), 1.0)
        }
        InitialStateSpec::Wkb { amplitude, phase } => {
            let d = bbox.len();
            if d == 0 {
                return Err(Error::SpecUnsupported("WKB state needs a nonempty box"));
            }
            let a = amplitude.compile(d)?;
            let s = phase.compile(d)?;
            let per_axis = libm::round(libm::pow(n_particles as f64, 1.0 / d as f64)).max(1.0) as usize;
            let hs: Vec<f64> = bbox.iter().map(|[lo, hi]| (hi - lo) / per_axis as f64).collect();
            let cell: f64 = hs.iter().product();
            let total = per_axis.pow(d as u32);
            let mut particles = Vec::with_capacity(total);
            for mut idx in 0..total {
                let x: Vec<f64> = (0..d)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        bbox[k][0] + (i as f64 + 0.5) * hs[k]
                    })
                    .collect();
                let amp = a.eval(&x);
                let xi = s.grad(&x);
                particles.push(Particle { point: PhasePoint::new(x, xi), weight: amp * amp * cell });
            }
            ParticleMeasure::new(particles)
        }
    }
}

/// `(Phi^t)_* mu` with unchanged weights.
pub fn pushforward(pot: &ConicalPotential, mu: &ParticleMeasure, t: f64, opts: &FlowOptions) -> Result<ParticleMeasure> {
    let mut points = Vec::with_capacity(mu.len());
    for (index, p) in mu.particles.iter().enumerate() {
        let (q, _) = flow_map(pot, &p.point, t, opts).map_err(|e| Error::Particle { index, cause: Box::new(e) })?;
        points.push(q);
    }
    Ok(mu.with_points(points))
}

/// `<a, mu> = sum_i w_i a(x_i, xi_i)`.
pub fn pairing(a: &Symbol, mu: &ParticleMeasure) -> f64 {
    mu.particles.iter().map(|p| p.weight * a.eval(&p.point.x, &p.point.xi)).sum()
}

/// `max_a |<a, mu_a> - <a, mu_b>|` over the symbol list.
pub fn weak_star_distance(mu_a: &ParticleMeasure, mu_b: &ParticleMeasure, symbols: &[Symbol]) -> Result<f64> {
    if symbols.is_empty() {
        return Err(Error::InvalidArgument("weak-star distance needs at least one symbol"));
    }
    Ok(symbols.iter().map(|a| (pairing(a, mu_a) - pairing(a, mu_b)).abs()).fold(0.0, f64::max))
}

/// Mass of `{|g(x)| < r, |dg(x) xi| > sstar_tol}` (intersected with `window`
/// when given).
pub fn mass_near_s(pot: &ConicalPotential, mu: &ParticleMeasure, r: f64, window: Option<&PhaseWindow>) -> f64 {
    let sstar = pot.tolerances().sstar;
    mu.particles
        .iter()
        .filter(|p| {
            let (x, xi) = (&p.point.x, &p.point.xi);
            pot.g_norm(x) < r && norm(&pot.dg_xi(x, xi)) > sstar && window.map_or(true, |w| w.contains(x, xi))
        })
        .map(|p| p.weight)
        .sum()
}

/// Both sides of the transport equation at time `t` along a particle
/// ensemble: the centered difference `(<a, mu_{t+dt}> - <a, mu_{t-dt}>)/(2 dt)`
/// and `<xi . grad_x a - grad V . grad_xi a, mu_t>`. Particles sitting
/// exactly on `S` are skipped on the right-hand side.
pub fn transport_residual(
    pot: &ConicalPotential,
    mu0: &ParticleMeasure,
    a: &Symbol,
    t: f64,
    dt: f64,
    opts: &FlowOptions,
) -> Result<(f64, f64)> {
    let plus = pushforward(pot, mu0, t + dt, opts)?;
    let minus = pushforward(pot, mu0, t - dt, opts)?;
    let now = pushforward(pot, mu0, t, opts)?;
    let lhs = (pairing(a, &plus) - pairing(a, &minus)) / (2.0 * dt);
    let mut rhs = 0.0;
    for p in now.particles() {
        let (x, xi) = (&p.point.x, &p.point.xi);
        let Ok(gv) = pot.grad_v(x) else { continue };
        let gx = a.grad_x(x, xi);
        let gk = a.grad_xi(x, xi);
        let v: f64 = (0..x.len()).map(|k| xi[k] * gx[k] - gv[k] * gk[k]).sum();
        rhs += p.weight * v;
    }
    Ok((lhs, rhs))
}
