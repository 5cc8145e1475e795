//! Multi-dimensional FFTs (C order, unnormalized) on top of `rustfft`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    shape: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            shape: shape.to_vec(),
            fwd: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inv: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `X_m = sum_j x_j e^{-2 pi i j m / n}` along every axis.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// `x_j = sum_m X_m e^{+2 pi i j m / n}` (no `1/n`).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }

    /// Inverse transform divided by the number of points.
    pub fn inverse_normalized(&self, data: &mut [Complex64]) {
        self.inverse(data);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len());
        let d = self.shape.len();
        for axis in 0..d {
            let n = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let outer = data.len() / (n * stride);
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = data[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, l) in line.iter().enumerate() {
                        data[base + j * stride] = *l;
                    }
                }
            }
        }
    }
}

/// Real-axis FFT helper for one-dimensional periodic convolutions.
pub fn circular_convolve(signal: &mut [f64], kernel_hat: &[Complex64], fwd: &Arc<dyn Fft<f64>>, inv: &Arc<dyn Fft<f64>>, buf: &mut Vec<Complex64>) {
    let n = signal.len();
    buf.clear();
    buf.extend(signal.iter().map(|&v| Complex64::new(v, 0.0)));
    fwd.process(buf);
    for (b, k) in buf.iter_mut().zip(kernel_hat) {
        *b *= k;
    }
    inv.process(buf);
    let s = 1.0 / n as f64;
    for (o, b) in signal.iter_mut().zip(buf.iter()) {
        *o = b.re * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let shape = [4, 8];
        let f = FftNd::new(&shape);
        let orig: Vec<Complex64> = (0..32).map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let mut d = orig.clone();
        f.forward(&mut d);
        f.inverse_normalized(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_2d() {
        // e^{2 pi i (j0 + 3 j1 / 8) ...}: one nonzero bin
        let f = FftNd::new(&[4, 8]);
        let mut d: Vec<Complex64> = (0..32)
            .map(|i| {
                let (j0, j1) = (i / 8, i % 8);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j0 as f64 / 4.0 + 3.0 * j1 as f64 / 8.0))
            })
            .collect();
        f.forward(&mut d);
        for (i, v) in d.iter().enumerate() {
            let want = if i == 8 + 3 { 32.0 } else { 0.0 };
            assert!((v.re - want).abs() < 1e-10 && v.im.abs() < 1e-10);
        }
    }
}
