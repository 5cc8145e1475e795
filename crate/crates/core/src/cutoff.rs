//! The fixed plateau cutoff `chi`.
//!
//! `chi(r) = 1` for `r <= 1`, `0` for `r >= 2`, and in between
//! `1 - q(r - 1)` with the quintic smoothstep `q(u) = u^3 (10 - 15 u + 6 u^2)`,
//! which makes `chi` C² with `chi'`, `chi''` vanishing at both ends.

/// `q(u) = 10 u^3 - 15 u^4 + 6 u^5` and its derivatives, `q^(m)(u)`.
fn smoothstep_derivative(u: f64, m: usize) -> f64 {
    match m {
        0 => u * u * u * (10.0 + u * (-15.0 + 6.0 * u)),
        1 => 30.0 * u * u * (1.0 - u) * (1.0 - u),
        2 => 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
        3 => 60.0 * (1.0 - 6.0 * u + 6.0 * u * u),
        4 => 60.0 * (12.0 * u - 6.0),
        5 => 720.0,
        _ => 0.0,
    }
}

/// `chi(r)` for `r >= 0`.
pub fn chi(r: f64) -> f64 {
    chi_derivative(r, 0)
}

/// `d^m chi / dr^m` at `r >= 0` (one-sided at the breakpoints).
pub fn chi_derivative(r: f64, m: usize) -> f64 {
    if r <= 1.0 {
        if m == 0 {
            1.0
        } else {
            0.0
        }
    } else if r >= 2.0 {
        0.0
    } else {
        let q = smoothstep_derivative(r - 1.0, m);
        if m == 0 {
            1.0 - q
        } else {
            -q
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_and_smoothness() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(7.0), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        for m in 1..=2 {
            assert!(chi_derivative(1.0 + 1e-12, m).abs() < 1e-9);
            assert!(chi_derivative(2.0 - 1e-12, m).abs() < 1e-9);
        }
        // monotone
        let mut prev = 1.0;
        for k in 0..=200 {
            let v = chi(1.0 + k as f64 / 200.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-6;
        for &r in &[1.1, 1.37, 1.5, 1.83] {
            for m in 0..4 {
                let fd = (chi_derivative(r + h, m) - chi_derivative(r - h, m)) / (2.0 * h);
                assert!((fd - chi_derivative(r, m + 1)).abs() < 1e-5, "r={r} m={m}");
            }
        }
    }
}
