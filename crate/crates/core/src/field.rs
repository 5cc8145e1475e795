//! Scalar and vector field catalog: constants, linear forms and explicit
//! multivariate polynomials. All derivatives are exact.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `coef * prod_i x_i^pow_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub pow: Vec<u32>,
}

/// A scalar field as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    Constant { value: f64 },
    Linear { offset: f64, coeffs: Vec<f64> },
    Poly { terms: Vec<Monomial> },
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn zero() -> Self {
        ScalarField::Constant { value: 0.0 }
    }

    /// Polynomial from `(coef, powers)` pairs.
    pub fn poly(terms: &[(f64, &[u32])]) -> Self {
        ScalarField::Poly {
            terms: terms.iter().map(|(c, p)| Monomial { coef: *c, pow: p.to_vec() }).collect(),
        }
    }

    /// Compile into an evaluable polynomial in `dim` variables.
    pub fn compile(&self, dim: usize) -> Result<Polynomial> {
        match self {
            ScalarField::Constant { value } => Ok(Polynomial::constant(dim, *value)),
            ScalarField::Linear { offset, coeffs } => {
                if coeffs.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: coeffs.len() });
                }
                let mut terms = vec![Term { coef: *offset, pow: vec![0; dim] }];
                for (i, &c) in coeffs.iter().enumerate() {
                    let mut pow = vec![0; dim];
                    pow[i] = 1;
                    terms.push(Term { coef: c, pow });
                }
                Ok(Polynomial { dim, terms })
            }
            ScalarField::Poly { terms } => {
                let mut out = Vec::with_capacity(terms.len());
                for t in terms {
                    if t.pow.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, found: t.pow.len() });
                    }
                    out.push(Term { coef: t.coef, pow: t.pow.clone() });
                }
                Ok(Polynomial { dim, terms: out })
            }
        }
    }
}

/// Specification of the constraint map `g: R^d -> R^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintSpec {
    /// `"coordinates"`: `g(x) = (x_1, ..., x_p)`.
    Named(CanonicalName),
    Fields(Vec<ScalarField>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalName {
    Coordinates,
}

impl ConstraintSpec {
    pub fn coordinates() -> Self {
        ConstraintSpec::Named(CanonicalName::Coordinates)
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self, ConstraintSpec::Named(CanonicalName::Coordinates))
    }

    pub fn compile(&self, dim: usize, codim: usize) -> Result<Vec<Polynomial>> {
        match self {
            ConstraintSpec::Named(CanonicalName::Coordinates) => Ok((0..codim)
                .map(|i| {
                    let mut pow = vec![0; dim];
                    pow[i] = 1;
                    Polynomial { dim, terms: vec![Term { coef: 1.0, pow }] }
                })
                .collect()),
            ConstraintSpec::Fields(fields) => {
                if fields.len() != codim {
                    return Err(Error::DimensionMismatch { expected: codim, found: fields.len() });
                }
                fields.iter().map(|f| f.compile(dim)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    coef: f64,
    pow: Vec<u32>,
}

#[inline]
fn powi(x: f64, n: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..n {
        r *= x;
    }
    r
}

/// Multivariate polynomial with exact first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn constant(dim: usize, value: f64) -> Self {
        Polynomial { dim, terms: vec![Term { coef: value, pow: vec![0; dim] }] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.pow.iter().zip(x).map(|(&p, &xi)| powi(xi, p)).product::<f64>())
            .sum()
    }

    /// Adds the gradient at `x`, scaled by `scale`, into `out`.
    pub fn add_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            if t.coef == 0.0 {
                continue;
            }
            for i in 0..self.dim {
                let pi = t.pow[i];
                if pi == 0 {
                    continue;
                }
                let mut v = t.coef * pi as f64 * powi(x[i], pi - 1);
                for j in 0..self.dim {
                    if j != i {
                        v *= powi(x[j], t.pow[j]);
                    }
                }
                out[i] += scale * v;
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.add_grad(x, 1.0, &mut g);
        g
    }

    /// Adds the Hessian (row-major `dim x dim`), scaled by `scale`, into `out`.
    pub fn add_hessian(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.dim;
        for t in &self.terms {
            if t.coef == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    let (pi, pj) = (t.pow[i], t.pow[j]);
                    let v = if i == j {
                        if pi < 2 {
                            continue;
                        }
                        let mut v = t.coef * (pi * (pi - 1)) as f64 * powi(x[i], pi - 2);
                        for k in 0..d {
                            if k != i {
                                v *= powi(x[k], t.pow[k]);
                            }
                        }
                        v
                    } else {
                        if pi == 0 || pj == 0 {
                            continue;
                        }
                        let mut v = t.coef
                            * pi as f64
                            * pj as f64
                            * powi(x[i], pi - 1)
                            * powi(x[j], pj - 1);
                        for k in 0..d {
                            if k != i && k != j {
                                v *= powi(x[k], t.pow[k]);
                            }
                        }
                        v
                    };
                    out[i * d + j] += scale * v;
                }
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.add_hessian(x, 1.0, &mut h);
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Polynomial {
        // 3 x^2 y - 2 y^3 + x + 0.5
        ScalarField::poly(&[(3.0, &[2, 1]), (-2.0, &[0, 3]), (1.0, &[1, 0]), (0.5, &[0, 0])])
            .compile(2)
            .unwrap()
    }

    #[test]
    fn derivatives_match_closed_form() {
        let p = sample();
        let x = [0.7, -1.3];
        assert!((p.eval(&x) - (3.0 * 0.49 * -1.3 + 2.0 * 2.197 + 0.7 + 0.5)).abs() < 1e-12);
        let g = p.grad(&x);
        assert!((g[0] - (6.0 * 0.7 * -1.3 + 1.0)).abs() < 1e-12);
        assert!((g[1] - (3.0 * 0.49 - 6.0 * 1.69)).abs() < 1e-12);
        let h = p.hessian(&x);
        assert!((h[0] - 6.0 * -1.3).abs() < 1e-12);
        assert!((h[1] - 6.0 * 0.7).abs() < 1e-12);
        assert!((h[2] - 6.0 * 0.7).abs() < 1e-12);
        assert!((h[3] - (-12.0 * -1.3)).abs() < 1e-12);
    }

    #[test]
    fn linear_form_and_dimension_checks() {
        let f = ScalarField::Linear { offset: 1.0, coeffs: vec![2.0, -1.0] }.compile(2).unwrap();
        assert_eq!(f.eval(&[1.0, 1.0]), 2.0);
        assert_eq!(f.grad(&[5.0, 5.0]), vec![2.0, -1.0]);
        assert!(ScalarField::Linear { offset: 0.0, coeffs: vec![1.0] }.compile(2).is_err());
    }

    #[test]
    fn canonical_constraint() {
        let g = ConstraintSpec::coordinates().compile(3, 2).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].eval(&[1.0, 2.0, 3.0]), 2.0);
    }
}
