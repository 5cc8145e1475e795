//! The broken Hamiltonian flow through `S*`.
//!
//! Away from `S` the flow is the plain Hamiltonian ODE, integrated with
//! Dormand–Prince. Crossings of `S` are located on the dense output (sign of
//! `g` in codimension one, closest approach of `|g|` otherwise), classified,
//! and passed with a desingularized launch on the far side. Negative times
//! run the time-reversed system `(x, xi) -> (x, -xi)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::cheb::ChebGrid;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::ode::{single_step, DenseStep, Dopri5, StepControl};
use crate::potential::ConicalPotential;

/// A phase-space point `(x, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "x and xi must have the same dimension");
        PhasePoint { x, xi }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `(x, -xi)`.
    pub fn reversed(&self) -> Self {
        PhasePoint { x: self.x.clone(), xi: self.xi.iter().map(|v| -v).collect() }
    }

    pub fn to_state(&self) -> Vec<f64> {
        let mut s = self.x.clone();
        s.extend_from_slice(&self.xi);
        s
    }

    pub fn from_state(s: &[f64]) -> Self {
        let d = s.len() / 2;
        PhasePoint { x: s[..d].to_vec(), xi: s[d..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.xi).all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let s: f64 = self
            .x
            .iter()
            .zip(&other.x)
            .chain(self.xi.iter().zip(&other.xi))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        libm::sqrt(s)
    }
}

/// A passage of the trajectory through `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEvent {
    pub t_cross: f64,
    pub point: PhasePoint,
    /// `dg(x) xi / |dg(x) xi|`; empty when not generic.
    pub omega0: Vec<f64>,
    pub generic: bool,
    /// `g` a short time before the crossing, when available.
    pub g_before: Option<Vec<f64>>,
}

/// Outcome of [`classify_crossing`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingClass {
    pub generic: bool,
    pub omega0: Vec<f64>,
}

/// Integrator settings for the broken flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub tol: f64,
    /// Launch window as a fraction of the characteristic time `|xi|/|force|`.
    pub tau_launch_factor: f64,
    pub max_launch_halvings: u32,
    pub cheb_nodes: usize,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { tol: 1e-10, tau_launch_factor: 1e-3, max_launch_halvings: 8, cheb_nodes: 16, max_steps: 2_000_000 }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions { tol, ..Default::default() }
    }

    fn control(&self) -> StepControl {
        StepControl { rtol: self.tol, atol: self.tol, h_min: 1e-15, h_max: f64::INFINITY, max_steps: self.max_steps }
    }
}

/// Desingularized piece of trajectory leaving `S*`, stored at
/// Chebyshev–Lobatto nodes of `[0, tau]` in internal time.
#[derive(Debug, Clone, PartialEq)]
pub struct LaunchSegment {
    /// +1 for the outgoing branch, -1 for the incoming (backward) branch.
    pub side: f64,
    pub s0: f64,
    pub tau: f64,
    pub tau_requested: f64,
    grid: ChebGrid,
    /// Internal `(x, xi)` states at the nodes; `xi` is reversed when `side < 0`.
    states: Vec<Vec<f64>>,
    /// Desingularized variable `y = g(x_t)/t - dg(x0) xi0` at the nodes.
    pub y: Vec<Vec<f64>>,
}

impl LaunchSegment {
    fn eval_internal(&self, s: f64) -> Vec<f64> {
        if self.tau == 0.0 {
            return self.states[0].clone();
        }
        let theta = ((s - self.s0) / self.tau).clamp(0.0, 1.0);
        let n = self.states[0].len();
        let mut col = vec![0.0; self.states.len()];
        (0..n)
            .map(|k| {
                for (c, st) in col.iter_mut().zip(&self.states) {
                    *c = st[k];
                }
                self.grid.interpolate(&col, theta)
            })
            .collect()
    }

    /// Physical state at time `t` (relative to the launch), `0 <= side*t <= tau`.
    pub fn state_at(&self, t: f64) -> PhasePoint {
        let st = self.eval_internal(self.s0 + t * self.side);
        let p = PhasePoint::from_state(&st);
        if self.side < 0.0 {
            p.reversed()
        } else {
            p
        }
    }

    /// Physical end point at `t = side * tau`.
    pub fn end(&self) -> PhasePoint {
        self.state_at(self.side * self.tau)
    }
}

/// One smooth or launch piece of a broken trajectory, in internal time.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// Dense steps; the last one may extend past `end`, where the piece stops.
    Smooth { steps: Vec<DenseStep>, end: f64 },
    Launch(LaunchSegment),
}

impl Segment {
    fn span(&self) -> (f64, f64) {
        match self {
            Segment::Smooth { steps, end } => (steps.first().map_or(*end, |s| s.t0), *end),
            Segment::Launch(l) => (l.s0, l.s0 + l.tau),
        }
    }

    fn eval_internal(&self, s: f64) -> Vec<f64> {
        match self {
            Segment::Smooth { steps, .. } => {
                let idx = steps.partition_point(|st| st.t1() < s).min(steps.len() - 1);
                steps[idx].eval(s)
            }
            Segment::Launch(l) => l.eval_internal(s),
        }
    }

    /// Start and end times of the segment in internal (forward) time.
    pub fn internal_span(&self) -> (f64, f64) {
        self.span()
    }

    pub fn is_launch(&self) -> bool {
        matches!(self, Segment::Launch(_))
    }
}

/// Piecewise-smooth trajectory record.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenTrajectory {
    /// +1 for forward time, -1 when the reversed system was integrated.
    pub direction: f64,
    pub segments: Vec<Segment>,
    pub crossings: Vec<CrossingEvent>,
    /// First time at which the trajectory is on `S`.
    pub tau: Option<f64>,
    /// Smallest `|g(x_t)|` seen at accepted steps.
    pub min_g_norm: f64,
    /// Set for `codim >= 2` runs passing within `[hit_tol, 100 hit_tol]` of `S`.
    pub near_singular: bool,
}

impl BrokenTrajectory {
    fn new(direction: f64) -> Self {
        BrokenTrajectory {
            direction,
            segments: Vec::new(),
            crossings: Vec::new(),
            tau: None,
            min_g_norm: f64::INFINITY,
            near_singular: false,
        }
    }

    /// Physical final time of the record.
    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.span().1) * self.direction
    }

    /// State at physical time `t` (between 0 and `t_end`).
    pub fn state_at(&self, t: f64) -> Option<PhasePoint> {
        let s = t * self.direction;
        if self.segments.is_empty() || s < -1e-14 {
            return None;
        }
        let idx = self.segments.iter().position(|seg| s <= seg.span().1 + 1e-14)?;
        let st = self.segments[idx].eval_internal(s);
        let p = PhasePoint::from_state(&st);
        Some(if self.direction < 0.0 { p.reversed() } else { p })
    }

    /// States at `0, dt, 2 dt, ...` up to `t_end`, plus the end point.
    pub fn sample(&self, dt: f64) -> Vec<(f64, PhasePoint)> {
        let t_end = self.t_end();
        let n = libm::floor((t_end.abs() / dt.abs()) + 1e-9) as usize;
        let mut out: Vec<(f64, PhasePoint)> = (0..=n)
            .filter_map(|k| {
                let t = k as f64 * dt.abs() * self.direction;
                self.state_at(t).map(|p| (t, p))
            })
            .collect();
        if out.last().map_or(true, |(t, _)| (t - t_end).abs() > 1e-12) {
            if let Some(p) = self.state_at(t_end) {
                out.push((t_end, p));
            }
        }
        out
    }
}

/// Right-hand side `(xi, -grad V(x))` off `S`.
pub fn hamiltonian_rhs(pot: &ConicalPotential, p: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = pot.grad_v(&p.x)?;
    Ok((p.xi.clone(), g.into_iter().map(|v| -v).collect()))
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Outcome of [`integrate_smooth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothRun {
    pub steps: Vec<DenseStep>,
    pub end: PhasePoint,
    pub t_end: f64,
    pub crossing: Option<CrossingEvent>,
    pub min_g_norm: f64,
}

/// Integrates the smooth Hamiltonian field from `p0` over `t_span` and stops
/// at the first crossing of `S`, if any.
pub fn integrate_smooth(
    pot: &ConicalPotential,
    p0: &PhasePoint,
    t_span: (f64, f64),
    opts: &FlowOptions,
) -> Result<SmoothRun> {
    if t_span.1 < t_span.0 {
        return Err(Error::InvalidArgument("integrate_smooth runs forward in time; use flow_map for t < 0"));
    }
    if p0.dim() != pot.dim() {
        return Err(Error::DimensionMismatch { expected: pot.dim(), found: p0.dim() });
    }
    let gn = pot.g_norm(&p0.x);
    if !pot.is_smooth() && gn <= pot.tolerances().g_zero {
        return Err(Error::OnSingularSet { x: p0.x.clone(), g_norm: gn });
    }
    if !pot.in_box(&p0.x) {
        return Err(Error::OutOfBox { x: p0.x.clone() });
    }
    smooth_internal(pot, p0, t_span.0, t_span.1, opts)
}

fn smooth_internal(pot: &ConicalPotential, p0: &PhasePoint, s0: f64, s1: f64, opts: &FlowOptions) -> Result<SmoothRun> {
    let d = pot.dim();
    let tol = *pot.tolerances();
    let sigma = if pot.codim() == 1 { sign(pot.g(&p0.x)[0]) } else { 1.0 };
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (x, xi) = y.split_at(d);
        let (dx, dxi) = dy.split_at_mut(d);
        dx.copy_from_slice(xi);
        pot.grad_for_side(x, sigma, dxi)?;
        dxi.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    };
    let y0 = p0.to_state();
    let mut steps = Vec::new();
    let mut min_g = pot.g_norm(&p0.x);
    if s1 == s0 {
        return Ok(SmoothRun { steps, end: p0.clone(), t_end: s0, crossing: None, min_g_norm: min_g });
    }
    let mut ode = Dopri5::new(&mut rhs, s0, &y0, opts.control())?;
    while ode.t() < s1 {
        let h_cap = if pot.codim() >= 2 && !pot.is_smooth() { approach_cap(pot, ode.y()) } else { f64::INFINITY };
        let t_prev = ode.t();
        let y_prev = ode.y().to_vec();
        let ds = ode.step(&mut rhs, s1, h_cap)?;
        let y = ode.y().to_vec();
        let (x, xi) = y.split_at(d);
        if !x.iter().chain(xi).all(|v| v.is_finite()) {
            return Err(Error::StepSizeUnderflow { t: ode.t(), h: ds.h });
        }
        if pot.is_smooth() {
            // no singular set to watch
        } else if pot.codim() == 1 {
            if let Some(ev) = locate_sign_change(pot, sigma, &ds, &mut rhs, t_prev, &y_prev)? {
                let ev_pt = ev.point.clone();
                let t_c = ev.t_cross;
                steps.push(ds);
                return Ok(SmoothRun { steps, end: ev_pt, t_end: t_c, crossing: Some(ev), min_g_norm: 0.0 });
            }
        } else {
            let gv = pot.g(x);
            let gn = norm(&gv);
            min_g = min_g.min(gn);
            if let Some(ev) = predict_hit(pot, x, xi, &gv, ode.t(), &y_prev)? {
                let t_c = ev.t_cross;
                let end = ev.point.clone();
                steps.push(ds);
                return Ok(SmoothRun { steps, end, t_end: t_c, crossing: Some(ev), min_g_norm: tol.hit.min(min_g) });
            }
        }
        if !pot.in_box(x) {
            return Err(Error::OutOfBox { x: x.to_vec() });
        }
        if pot.codim() == 1 {
            min_g = min_g.min(pot.g_norm(x));
        }
        steps.push(ds);
    }
    let end = PhasePoint::from_state(ode.y());
    Ok(SmoothRun { steps, end, t_end: s1, crossing: None, min_g_norm: min_g })
}

/// Step cap for `codim >= 2`: while approaching `S`, never cover more than
/// half the distance to it in one step.
fn approach_cap(pot: &ConicalPotential, y: &[f64]) -> f64 {
    let d = pot.dim();
    let (x, xi) = y.split_at(d);
    let gv = pot.g(x);
    let c = pot.dg_xi(x, xi);
    let cn = norm(&c);
    if dot(&gv, &c) >= 0.0 || cn == 0.0 {
        f64::INFINITY
    } else {
        (0.5 * norm(&gv) / cn).max(1e-14)
    }
}

fn locate_sign_change<R: crate::ode::Rhs>(
    pot: &ConicalPotential,
    sigma: f64,
    ds: &DenseStep,
    rhs: &mut R,
    t_prev: f64,
    y_prev: &[f64],
) -> Result<Option<CrossingEvent>> {
    let d = pot.dim();
    let phi = |t: f64| -> f64 {
        let y = ds.eval(t);
        sigma * pot.g(&y[..d])[0]
    };
    // scan the step (end point plus interior samples) for the first non-positive value
    let probes = 8;
    let mut a = ds.t0;
    let mut fa = phi(a);
    let mut bracket = None;
    for k in 1..=probes {
        let b = ds.t0 + ds.h * k as f64 / probes as f64;
        let fb = phi(b);
        if fb <= 0.0 {
            bracket = Some((a, fa, b, fb));
            break;
        }
        a = b;
        fa = fb;
    }
    let Some((mut a, mut fa, mut b, mut fb)) = bracket else {
        return Ok(None);
    };
    // Illinois on the dense output
    let mut side = 0;
    for _ in 0..200 {
        if (b - a).abs() <= 1e-16 * (1.0 + b.abs()) {
            break;
        }
        let c = if fa != fb { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let c = if c <= a || c >= b { 0.5 * (a + b) } else { c };
        let fc = phi(c);
        if fc == 0.0 {
            a = c;
            b = c;
            break;
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let mut t_c = if fa.abs() < fb.abs() { a } else { b };
    // Newton with single full-accuracy steps from the last accepted state
    let g_zero = pot.tolerances().g_zero;
    let mut y_c = single_step(rhs, t_prev, y_prev, t_c - t_prev)?;
    for _ in 0..6 {
        let (x, xi) = y_c.split_at(d);
        let gval = pot.g(x)[0];
        if gval.abs() <= 1e-3 * g_zero {
            break;
        }
        let gdot = pot.dg_xi(x, xi)[0];
        if gdot.abs() <= pot.tolerances().sstar {
            break;
        }
        t_c -= gval / gdot;
        y_c = single_step(rhs, t_prev, y_prev, t_c - t_prev)?;
    }
    let (x, xi) = y_c.split_at(d);
    let x_on_s = project_onto_s(pot, x);
    let g_before = pot.g(&y_prev[..d]);
    Ok(Some(CrossingEvent {
        t_cross: t_c,
        point: PhasePoint::new(x_on_s, xi.to_vec()),
        omega0: Vec::new(),
        generic: false,
        g_before: Some(g_before),
    }))
}

/// Gauss–Newton projection onto `S = {g = 0}`.
fn project_onto_s(pot: &ConicalPotential, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    for _ in 0..4 {
        let gv = pot.g(&x);
        if norm(&gv) <= 1e-3 * pot.tolerances().g_zero {
            break;
        }
        let dg = pot.dg(&x);
        let gram = dg.mul(&dg.transpose());
        let Some(lam) = gram.solve(&gv) else { break };
        let step = dg.tr_mul_vec(&lam);
        for (xi, s) in x.iter_mut().zip(step) {
            *xi -= s;
        }
    }
    x
}

/// Codimension >= 2: after an accepted step, decide whether the trajectory
/// hits `S` (linearized closest approach below `hit_tol`).
fn predict_hit(
    pot: &ConicalPotential,
    x: &[f64],
    xi: &[f64],
    gv: &[f64],
    t: f64,
    y_prev: &[f64],
) -> Result<Option<CrossingEvent>> {
    let tol = pot.tolerances();
    let c = pot.dg_xi(x, xi);
    let gc = dot(gv, &c);
    let cn2 = dot(&c, &c);
    let gn = norm(gv);
    if gc >= 0.0 || cn2 == 0.0 {
        return Ok(None);
    }
    let s_star = -gc / cn2;
    let closest: Vec<f64> = gv.iter().zip(&c).map(|(g, ci)| g + s_star * ci).collect();
    let d_min = norm(&closest);
    if d_min >= tol.hit || gn > 10.0 * tol.hit {
        return Ok(None);
    }
    let mut force = vec![0.0; x.len()];
    // the force just before S: the incoming one-sided limit
    let x_pred: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + s_star * b).collect();
    let x_on_s = project_onto_s(pot, &x_pred);
    if let Ok(f) = pot.one_sided_force(&x_on_s, xi, -1.0) {
        force = f;
    }
    let xi_c: Vec<f64> = xi.iter().zip(&force).map(|(v, f)| v + s_star * f).collect();
    let d = pot.dim();
    Ok(Some(CrossingEvent {
        t_cross: t + s_star,
        point: PhasePoint::new(x_on_s, xi_c),
        omega0: Vec::new(),
        generic: false,
        g_before: Some(pot.g(&y_prev[..d])),
    }))
}

/// Decides whether a crossing is generic and returns `omega0`. Fails with
/// `NonGenericCrossing` off `S*`, and with `IncomingSignViolated` if the
/// trajectory was not approaching `S` just before.
pub fn classify_crossing(pot: &ConicalPotential, ev: &CrossingEvent) -> Result<CrossingClass> {
    let c = pot.dg_xi(&ev.point.x, &ev.point.xi);
    let cn = norm(&c);
    if cn <= pot.tolerances().sstar {
        return Err(Error::NonGenericCrossing { t: ev.t_cross, x: ev.point.x.clone(), xi: ev.point.xi.clone() });
    }
    if let Some(gb) = &ev.g_before {
        if dot(&c, gb) >= 0.0 {
            return Err(Error::IncomingSignViolated { t: ev.t_cross });
        }
    }
    Ok(CrossingClass { generic: true, omega0: c.into_iter().map(|v| v / cn).collect() })
}

/// Default launch window `tau_launch_factor * |xi| / |force|`.
pub fn default_launch_window(pot: &ConicalPotential, p0: &PhasePoint, opts: &FlowOptions) -> Result<f64> {
    let f = pot.one_sided_force(&p0.x, &p0.xi, 1.0)?;
    let xin = norm(&p0.xi);
    let fnorm = norm(&f).max(1e-12 * xin.max(1e-300));
    let char_time = (xin / fnorm).min(pot.box_diameter() / xin);
    Ok(opts.tau_launch_factor * char_time)
}

/// Solves the desingularized system on `[0, tau]` from a point of `S*` by
/// Picard iteration on Chebyshev–Lobatto nodes. `side = +1` gives the
/// outgoing branch for `t >= 0`; `side = -1` the incoming branch for
/// `t <= 0`. The window is halved (up to `max_launch_halvings` times) when
/// the iteration leaves its contraction ball; the returned segment reports
/// the window actually covered.
pub fn launch_from_singularity(
    pot: &ConicalPotential,
    p0: &PhasePoint,
    side: f64,
    tau: f64,
    opts: &FlowOptions,
) -> Result<LaunchSegment> {
    launch_internal(pot, p0, side, 0.0, tau, opts)
}

fn launch_internal(
    pot: &ConicalPotential,
    p0: &PhasePoint,
    side: f64,
    s0: f64,
    tau: f64,
    opts: &FlowOptions,
) -> Result<LaunchSegment> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument("launch window must be non-negative"));
    }
    // the incoming branch is the outgoing branch of the reversed point
    let q = if side < 0.0 { p0.reversed() } else { p0.clone() };
    let gn = pot.g_norm(&q.x);
    if gn > pot.tolerances().g_zero {
        return Err(Error::InvalidArgument("launch point must lie on S"));
    }
    let c0 = pot.dg_xi(&q.x, &q.xi);
    if norm(&c0) <= pot.tolerances().sstar {
        return Err(Error::NonGenericPoint { x: p0.x.clone(), xi: p0.xi.clone() });
    }
    let grid = ChebGrid::new(opts.cheb_nodes.max(4));
    if tau == 0.0 {
        let st = q.to_state();
        let states = vec![st; grid.len()];
        return Ok(LaunchSegment {
            side: sign(side),
            s0,
            tau: 0.0,
            tau_requested: 0.0,
            y: vec![vec![0.0; pot.codim()]; grid.len()],
            grid,
            states,
        });
    }
    let mut t = tau;
    for _ in 0..=opts.max_launch_halvings {
        if let Some((states, y)) = picard(pot, &q, &c0, t, &grid) {
            return Ok(LaunchSegment { side: sign(side), s0, tau: t, tau_requested: tau, grid, states, y });
        }
        t *= 0.5;
    }
    Err(Error::LaunchWindowTooLarge { tau: t })
}

type NodeStates = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn picard(pot: &ConicalPotential, q: &PhasePoint, c0: &[f64], tau: f64, grid: &ChebGrid) -> Option<NodeStates> {
    let d = pot.dim();
    let p = pot.codim();
    let n = grid.len();
    let th = grid.nodes();
    let c0n = norm(c0);
    let ball = 0.5 * (1.0 + norm(&q.xi));
    let mut xs: Vec<Vec<f64>> = th.iter().map(|&s| q.x.iter().zip(&q.xi).map(|(x, v)| x + tau * s * v).collect()).collect();
    let mut xis: Vec<Vec<f64>> = vec![q.xi.clone(); n];
    let mut ys: Vec<Vec<f64>> = vec![vec![0.0; p]; n];
    let mut col = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut prev_diff = f64::INFINITY;
    let mut force = vec![0.0; d];
    for iter in 0..200 {
        // B(t, X, Y) = -grad V0 - t |c0 + Y| grad w - w dg^T (c0 + Y)/|c0 + Y|
        let mut forces = Vec::with_capacity(n);
        for j in 0..n {
            let cy: Vec<f64> = c0.iter().zip(&ys[j]).map(|(a, b)| a + b).collect();
            let cyn = norm(&cy);
            if !(cyn > 0.5 * c0n) {
                return None;
            }
            force.iter_mut().for_each(|v| *v = 0.0);
            let t = tau * th[j];
            launch_force(pot, &xs[j], t, &cy, cyn, &mut force);
            forces.push(force.clone());
        }
        let mut diff: f64 = 0.0;
        let mut new_xis = vec![vec![0.0; d]; n];
        for k in 0..d {
            for j in 0..n {
                col[j] = forces[j][k];
            }
            grid.integrate(&col, &mut acc);
            for j in 0..n {
                new_xis[j][k] = q.xi[k] + tau * acc[j];
            }
        }
        let mut new_xs = vec![vec![0.0; d]; n];
        for k in 0..d {
            for j in 0..n {
                col[j] = new_xis[j][k];
            }
            grid.integrate(&col, &mut acc);
            for j in 0..n {
                new_xs[j][k] = q.x[k] + tau * acc[j];
            }
        }
        let gs: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let v = pot.dg_xi(&new_xs[j], &new_xis[j]);
                v.iter().zip(c0).map(|(a, b)| a - b).collect()
            })
            .collect();
        let mut new_ys = vec![vec![0.0; p]; n];
        for k in 0..p {
            for j in 0..n {
                col[j] = gs[j][k];
            }
            grid.integrate(&col, &mut acc);
            for j in 1..n {
                new_ys[j][k] = acc[j] / th[j];
            }
        }
        for j in 0..n {
            for k in 0..d {
                diff = diff.max((new_xs[j][k] - xs[j][k]).abs()).max((new_xis[j][k] - xis[j][k]).abs());
            }
            for k in 0..p {
                diff = diff.max((new_ys[j][k] - ys[j][k]).abs());
            }
            let dev = norm(&new_xs[j].iter().zip(&q.x).map(|(a, b)| a - b).collect::<Vec<_>>())
                + norm(&new_xis[j].iter().zip(&q.xi).map(|(a, b)| a - b).collect::<Vec<_>>())
                + norm(&new_ys[j]);
            if !dev.is_finite() || dev > ball {
                return None;
            }
        }
        xs = new_xs;
        xis = new_xis;
        ys = new_ys;
        let scale = 1.0 + norm(&q.x) + norm(&q.xi);
        if diff <= 1e-15 * scale {
            break;
        }
        if iter > 8 && diff > 0.9 * prev_diff && diff > 1e-12 * scale {
            return None;
        }
        prev_diff = diff;
        if iter == 199 {
            return None;
        }
    }
    let states = (0..n)
        .map(|j| {
            let mut s = xs[j].clone();
            s.extend_from_slice(&xis[j]);
            s
        })
        .collect();
    Some((states, ys))
}

fn launch_force(pot: &ConicalPotential, x: &[f64], t: f64, cy: &[f64], cyn: f64, out: &mut [f64]) {
    // -grad V0 - |t| |c0+y| grad w - w dg^T (c0+y)/|c0+y|: same as -grad V with
    // g/|g| replaced by its regular limit along the branch
    let u: Vec<f64> = cy.iter().map(|v| v / cyn).collect();
    pot.add_launch_gradient(x, t.abs() * cyn, &u, out);
    out.iter_mut().for_each(|v| *v = -*v);
}

/// Final state and trajectory of the broken flow `Phi^t(p0)`.
pub fn flow_map(pot: &ConicalPotential, p0: &PhasePoint, t: f64, opts: &FlowOptions) -> Result<(PhasePoint, BrokenTrajectory)> {
    if p0.dim() != pot.dim() {
        return Err(Error::DimensionMismatch { expected: pot.dim(), found: p0.dim() });
    }
    if !pot.in_box(&p0.x) {
        return Err(Error::OutOfBox { x: p0.x.clone() });
    }
    let direction = if t < 0.0 { -1.0 } else { 1.0 };
    let mut traj = BrokenTrajectory::new(direction);
    if t == 0.0 {
        return Ok((p0.clone(), traj));
    }
    let total = t.abs();
    let mut state = if direction < 0.0 { p0.reversed() } else { p0.clone() };
    let mut s = 0.0;
    let mut pending_g_before: Option<Vec<f64>> = None;
    let g_zero = pot.tolerances().g_zero;
    while s < total {
        if !pot.is_smooth() && pot.g_norm(&state.x) <= g_zero {
            let ev = CrossingEvent {
                t_cross: s,
                point: state.clone(),
                omega0: Vec::new(),
                generic: false,
                g_before: pending_g_before.take(),
            };
            let class = classify_crossing(pot, &ev).map_err(|e| to_physical(e, direction))?;
            traj.tau.get_or_insert(s * direction);
            traj.crossings.push(physical_event(ev, class, direction));
            let window = default_launch_window(pot, &state, opts)?.min(total - s);
            let seg = launch_internal(pot, &state, 1.0, s, window, opts)?;
            let end_internal = PhasePoint::from_state(seg.states.last().expect("launch nodes"));
            s += seg.tau;
            state = end_internal;
            traj.segments.push(Segment::Launch(seg));
            if !pot.in_box(&state.x) {
                return Err(Error::OutOfBox { x: state.x.clone() });
            }
            continue;
        }
        let run = smooth_internal(pot, &state, s, total, opts)?;
        traj.min_g_norm = traj.min_g_norm.min(run.min_g_norm);
        if !run.steps.is_empty() {
            traj.segments.push(Segment::Smooth { steps: run.steps, end: run.t_end });
        }
        state = run.end;
        s = run.t_end;
        if let Some(ev) = run.crossing {
            pending_g_before = ev.g_before;
            // continue from the point snapped onto S
            state = ev.point;
            if s >= total {
                // crossing exactly at the final time: report the point on S
                break;
            }
        }
    }
    let tol = pot.tolerances();
    traj.near_singular = pot.codim() >= 2 && traj.min_g_norm >= tol.hit && traj.min_g_norm <= 100.0 * tol.hit;
    let out = if direction < 0.0 { state.reversed() } else { state };
    Ok((out, traj))
}

fn to_physical(e: Error, direction: f64) -> Error {
    match e {
        Error::NonGenericCrossing { t, x, xi } => Error::NonGenericCrossing {
            t: t * direction,
            x,
            xi: if direction < 0.0 { xi.into_iter().map(|v| -v).collect() } else { xi },
        },
        Error::IncomingSignViolated { t } => Error::IncomingSignViolated { t: t * direction },
        other => other,
    }
}

fn physical_event(ev: CrossingEvent, class: CrossingClass, direction: f64) -> CrossingEvent {
    let point = if direction < 0.0 { ev.point.reversed() } else { ev.point };
    let omega0 = class.omega0.into_iter().map(|v| v * direction).collect();
    CrossingEvent { t_cross: ev.t_cross * direction, point, omega0, generic: class.generic, g_before: ev.g_before }
}

/// Central finite-difference Jacobian of `Phi^t` at `p0` with step `h` in
/// each of the `2d` initial-condition directions.
pub fn variational_jacobian(pot: &ConicalPotential, p0: &PhasePoint, t: f64, h: f64, opts: &FlowOptions) -> Result<Matrix> {
    let d = pot.dim();
    let base = p0.to_state();
    let mut jac = Matrix::zeros(2 * d, 2 * d);
    for k in 0..2 * d {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let (fp, _) = flow_map(pot, &PhasePoint::from_state(&plus), t, opts)?;
        let (fm, _) = flow_map(pot, &PhasePoint::from_state(&minus), t, opts)?;
        let col: Vec<f64> = fp.to_state().iter().zip(fm.to_state()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        jac.set_column(k, &col);
    }
    Ok(jac)
}
