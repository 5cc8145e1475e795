//! Dormand–Prince 5(4) with the standard 4th-order continuous extension.
//!
//! The stepper is driven one accepted step at a time so the caller can test
//! events on each step's dense output before committing to the next one.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and limits for the adaptive stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn with_tol(tol: f64) -> Self {
        StepControl { rtol: tol, atol: tol, h_min: 1e-14, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl Default for StepControl {
    fn default() -> Self {
        Self::with_tol(1e-10)
    }
}

/// One accepted step and its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.rcont[0]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rcont[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Right-hand side `f(t, y, dy)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k: core::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        }
    }
}

/// Computes one Dormand–Prince step from `(t, y)` with `k1 = f(t, y)` given.
/// Leaves the 5th-order solution in `st.ynew`, `f(t+h, ynew)` in `st.k[6]`,
/// and returns the scaled error norm.
fn attempt<R: Rhs>(rhs: &mut R, t: f64, y: &[f64], h: f64, st: &mut Stages, ctl: &StepControl) -> Result<f64> {
    let n = y.len();
    let Stages { k, ytmp, ynew } = st;
    let (k1, rest) = k.split_at_mut(1);
    let k1 = &k1[0];
    let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
    for i in 0..n {
        ytmp[i] = y[i] + h * A21 * k1[i];
    }
    rhs.eval(t + C2 * h, ytmp, k2)?;
    for i in 0..n {
        ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    rhs.eval(t + C3 * h, ytmp, k3)?;
    for i in 0..n {
        ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    rhs.eval(t + C4 * h, ytmp, k4)?;
    for i in 0..n {
        ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    rhs.eval(t + C5 * h, ytmp, k5)?;
    for i in 0..n {
        ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    rhs.eval(t + h, ytmp, k6)?;
    for i in 0..n {
        ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    rhs.eval(t + h, ynew, k7)?;
    let mut err = 0.0;
    for i in 0..n {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sk = ctl.atol + ctl.rtol * y[i].abs().max(ynew[i].abs());
        err += (e / sk) * (e / sk);
    }
    Ok(libm::sqrt(err / n as f64))
}

fn dense(t: f64, y: &[f64], h: f64, st: &Stages) -> DenseStep {
    let n = y.len();
    let k = &st.k;
    let mut r2 = vec![0.0; n];
    let mut r3 = vec![0.0; n];
    let mut r4 = vec![0.0; n];
    let mut r5 = vec![0.0; n];
    for i in 0..n {
        let ydiff = st.ynew[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        r2[i] = ydiff;
        r3[i] = bspl;
        r4[i] = ydiff - h * k[6][i] - bspl;
        r5[i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
    }
    DenseStep { t0: t, h, rcont: [y.to_vec(), r2, r3, r4, r5] }
}

/// Adaptive Dormand–Prince integrator state.
pub struct Dopri5 {
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    steps: usize,
    ctl: StepControl,
    st: Stages,
}

impl Dopri5 {
    pub fn new<R: Rhs>(rhs: &mut R, t0: f64, y0: &[f64], ctl: StepControl) -> Result<Self> {
        let n = y0.len();
        let mut f = vec![0.0; n];
        rhs.eval(t0, y0, &mut f)?;
        let mut s = Dopri5 { t: t0, y: y0.to_vec(), f, h: 0.0, steps: 0, ctl, st: Stages::new(n) };
        s.h = s.initial_step(rhs)?;
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Suggested size of the next step.
    pub fn h(&self) -> f64 {
        self.h
    }

    fn initial_step<R: Rhs>(&mut self, rhs: &mut R) -> Result<f64> {
        let n = self.y.len();
        let sk: Vec<f64> = self.y.iter().map(|v| self.ctl.atol + self.ctl.rtol * v.abs()).collect();
        let d0 = libm::sqrt(self.y.iter().zip(&sk).map(|(v, s)| (v / s) * (v / s)).sum::<f64>() / n as f64);
        let d1 = libm::sqrt(self.f.iter().zip(&sk).map(|(v, s)| (v / s) * (v / s)).sum::<f64>() / n as f64);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.ctl.h_max);
        let y1: Vec<f64> = self.y.iter().zip(&self.f).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; n];
        rhs.eval(self.t + h0, &y1, &mut f1)?;
        let d2 = libm::sqrt(
            f1.iter().zip(&self.f).zip(&sk).map(|((a, b), s)| ((a - b) / s) * ((a - b) / s)).sum::<f64>()
                / n as f64,
        ) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            libm::pow(0.01 / d1.max(d2), 0.2)
        };
        Ok((100.0 * h0).min(h1).min(self.ctl.h_max))
    }

    /// Takes one accepted step, never past `t_end` and never longer than
    /// `h_cap`. Returns the dense output of the step.
    pub fn step<R: Rhs>(&mut self, rhs: &mut R, t_end: f64, h_cap: f64) -> Result<DenseStep> {
        let mut reject = false;
        loop {
            if self.steps >= self.ctl.max_steps {
                return Err(Error::MaxStepsExceeded { t: self.t });
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(h_cap).min(self.ctl.h_max);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < self.ctl.h_min && !last {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            self.st.k[0].copy_from_slice(&self.f);
            let err = attempt(rhs, self.t, &self.y, h, &mut self.st, &self.ctl)?;
            self.steps += 1;
            if err <= 1.0 || (last && h <= self.ctl.h_min) {
                let ds = dense(self.t, &self.y, h, &self.st);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
                let fac = if reject { fac.min(1.0) } else { fac };
                if !last {
                    self.h = h * fac;
                } else if h * fac > self.h {
                    self.h = h * fac;
                }
                self.t = if last { t_end } else { self.t + h };
                self.y.copy_from_slice(&self.st.ynew);
                self.f.copy_from_slice(&self.st.k[6]);
                return Ok(ds);
            }
            reject = true;
            let fac = (0.9 * libm::pow(err, -0.2)).clamp(0.2, 1.0);
            self.h = h * fac;
            if !err.is_finite() {
                self.h = h * 0.2;
            }
        }
    }
}

/// A single unadapted step of size `h` from `(t, y)`; used to pin event
/// states to full step accuracy.
pub fn single_step<R: Rhs>(rhs: &mut R, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let mut st = Stages::new(n);
    rhs.eval(t, y, &mut st.k[0])?;
    if h == 0.0 {
        return Ok(y.to_vec());
    }
    attempt(rhs, t, y, h, &mut st, &StepControl::default())?;
    Ok(st.ynew)
}
