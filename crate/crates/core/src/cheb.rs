//! Chebyshev–Lobatto collocation on `[0, 1]`: spectral cumulative
//! integration and barycentric interpolation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    theta: Vec<f64>,
    /// Row-major `n x n`; row `i` integrates from 0 to `theta[i]`.
    integ: Vec<f64>,
    bary: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "need at least three nodes");
        let m = (n - 1) as f64;
        let s: Vec<f64> = (0..n).map(|j| libm::cos(PI * j as f64 / m)).collect();
        let theta: Vec<f64> = s.iter().map(|sj| 0.5 * (1.0 - sj)).collect();
        let tk = |k: usize, i: usize| libm::cos(PI * (k * i) as f64 / m);
        // antiderivative of T_k evaluated at s_i (i = usize::MAX means s = 1)
        let anti = |k: usize, i: Option<usize>| -> f64 {
            let t = |kk: usize| match i {
                Some(ii) => tk(kk, ii),
                None => 1.0,
            };
            let sv = match i {
                Some(ii) => s[ii],
                None => 1.0,
            };
            match k {
                0 => sv,
                1 => 0.5 * sv * sv,
                _ => t(k + 1) / (2.0 * (k + 1) as f64) - t(k - 1) / (2.0 * (k - 1) as f64),
            }
        };
        let mut integ = vec![0.0; n * n];
        for j in 0..n {
            let cj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            let coeffs: Vec<f64> = (0..n)
                .map(|k| {
                    let ck = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                    2.0 / m * cj * ck * tk(k, j)
                })
                .collect();
            let f_one: f64 = coeffs.iter().enumerate().map(|(k, a)| a * anti(k, None)).sum();
            for i in 0..n {
                let fi: f64 = coeffs.iter().enumerate().map(|(k, a)| a * anti(k, Some(i))).sum();
                integ[i * n + j] = 0.5 * (f_one - fi);
            }
        }
        let bary = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        ChebGrid { theta, integ, bary }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.theta
    }

    /// `out[i] = int_0^{theta_i} f`, for `f` sampled at the nodes.
    pub fn integrate(&self, f: &[f64], out: &mut [f64]) {
        let n = self.theta.len();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.integ[i * n + j] * f[j]).sum();
        }
    }

    /// Interpolant of node values at `theta`.
    pub fn interpolate(&self, values: &[f64], theta: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &tj) in self.theta.iter().enumerate() {
            let diff = theta - tj;
            if diff == 0.0 {
                return values[j];
            }
            let c = self.bary[j] / diff;
            num += c * values[j];
            den += c;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let g = ChebGrid::new(12);
        let f: Vec<f64> = g.nodes().iter().map(|t| 3.0 * t * t - 2.0 * t + 1.0).collect();
        let mut out = vec![0.0; g.len()];
        g.integrate(&f, &mut out);
        for (t, v) in g.nodes().iter().zip(&out) {
            assert!((v - (t * t * t - t * t + t)).abs() < 1e-13);
        }
    }

    #[test]
    fn integrates_smooth_functions_spectrally() {
        let g = ChebGrid::new(20);
        let f: Vec<f64> = g.nodes().iter().map(|t| libm::exp(2.0 * t)).collect();
        let mut out = vec![0.0; g.len()];
        g.integrate(&f, &mut out);
        for (t, v) in g.nodes().iter().zip(&out) {
            assert!((v - 0.5 * (libm::exp(2.0 * t) - 1.0)).abs() < 1e-13);
        }
        let y = g.interpolate(&f, 0.3141);
        assert!((y - libm::exp(0.6282)).abs() < 1e-13);
    }
}
