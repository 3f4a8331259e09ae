//! Vector-valued polynomial functions `G: R^d → R^p` with exact derivatives.
//!
//! A polynomial with `p = 1` is treated as scalar valued: its derivative
//! tensors carry no label mode. Otherwise the label index is the first mode
//! and differentiation modes follow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{next_index, DenseTensor};

pub const MAX_DEGREE: u32 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct Term<T> {
    pub output: usize,
    pub coef: T,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFunction<T> {
    dim: usize,
    output_dim: usize,
    terms: Vec<Term<T>>,
}

/// JSON form: `{"dim": d, "output_dim": p, "terms": [{"output": 0, "coef": 1.0, "exponents": [..]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySpec {
    pub dim: usize,
    #[serde(default = "one")]
    pub output_dim: usize,
    pub terms: Vec<TermSpec>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    #[serde(default)]
    pub output: usize,
    pub coef: f64,
    pub exponents: Vec<u32>,
}

impl<T: Scalar> PolyFunction<T> {
    pub fn new(dim: usize, output_dim: usize, terms: Vec<Term<T>>) -> Result<Self> {
        if dim == 0 || output_dim == 0 {
            return Err(Error::Validation("polynomial needs dim ≥ 1 and output_dim ≥ 1".into()));
        }
        for t in &terms {
            if t.exponents.len() != dim {
                return Err(Error::Shape(format!(
                    "monomial has {} exponents, expected {dim}",
                    t.exponents.len()
                )));
            }
            if t.output >= output_dim {
                return Err(Error::Validation(format!(
                    "term output {} out of range for output_dim {output_dim}",
                    t.output
                )));
            }
            if !t.coef.is_finite() {
                return Err(Error::NonFinite("polynomial coefficient".into()));
            }
            let deg: u32 = t.exponents.iter().sum();
            if deg > MAX_DEGREE {
                return Err(Error::Validation(format!(
                    "monomial degree {deg} exceeds {MAX_DEGREE}"
                )));
            }
        }
        Ok(Self::simplified(Self {
            dim,
            output_dim,
            terms,
        }))
    }

    pub fn from_spec(spec: &PolySpec) -> Result<Self> {
        let terms = spec
            .terms
            .iter()
            .map(|t| Term {
                output: t.output,
                coef: T::lit(t.coef),
                exponents: t.exponents.clone(),
            })
            .collect();
        Self::new(spec.dim, spec.output_dim, terms)
    }

    pub fn to_spec(&self) -> PolySpec {
        PolySpec {
            dim: self.dim,
            output_dim: self.output_dim,
            terms: self
                .terms
                .iter()
                .map(|t| TermSpec {
                    output: t.output,
                    coef: t.coef.as_f64(),
                    exponents: t.exponents.clone(),
                })
                .collect(),
        }
    }

    /// Merges like monomials and drops zero coefficients.
    fn simplified(self) -> Self {
        let mut map: BTreeMap<(usize, Vec<u32>), T> = BTreeMap::new();
        for t in self.terms {
            *map.entry((t.output, t.exponents)).or_insert_with(T::zero) += t.coef;
        }
        let terms = map
            .into_iter()
            .filter(|(_, c)| *c != T::zero())
            .map(|((output, exponents), coef)| Term {
                output,
                coef,
                exponents,
            })
            .collect();
        Self { terms, ..self }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self {
            dim,
            output_dim: 1,
            terms: vec![Term {
                output: 0,
                coef: c,
                exponents: vec![0; dim],
            }],
        }
        .simplified()
    }

    /// `G(x) = x` as a map `R^d → R^d`.
    pub fn identity_map(dim: usize) -> Self {
        let terms = (0..dim)
            .map(|i| {
                let mut e = vec![0; dim];
                e[i] = 1;
                Term {
                    output: i,
                    coef: T::one(),
                    exponents: e,
                }
            })
            .collect();
        Self {
            dim,
            output_dim: dim,
            terms,
        }
    }

    /// Scalar linear form `u · x`.
    pub fn linear(u: &[T]) -> Self {
        let dim = u.len();
        let terms = u
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut e = vec![0; dim];
                e[i] = 1;
                Term {
                    output: 0,
                    coef: c,
                    exponents: e,
                }
            })
            .collect();
        Self {
            dim,
            output_dim: 1,
            terms,
        }
        .simplified()
    }

    /// `Σ_j (u_j · x)^power`, expanded into monomials.
    pub fn planted_power_sum(components: &[Vec<T>], power: u32) -> Result<Self> {
        let dim = components
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Validation("no planted components".into()))?;
        let mut acc = Self {
            dim,
            output_dim: 1,
            terms: Vec::new(),
        };
        for u in components {
            if u.len() != dim {
                return Err(Error::Shape("planted components differ in length".into()));
            }
            let lin = Self::linear(u);
            let mut p = Self::constant(dim, T::one());
            for _ in 0..power {
                p = p.mul(&lin)?;
            }
            acc = acc.add(&p)?;
        }
        Ok(acc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn is_scalar(&self) -> bool {
        self.output_dim == 1
    }

    /// Number of label modes carried by values and derivatives (0 or 1).
    pub fn label_order(&self) -> usize {
        usize::from(!self.is_scalar())
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.output_dim != other.output_dim {
            return Err(Error::Shape("adding polynomials of different shapes".into()));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { terms, ..self.clone() }.simplified())
    }

    pub fn scale(&self, c: T) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { coef: t.coef * c, ..t.clone() })
            .collect();
        Self { terms, ..self.clone() }.simplified()
    }

    /// Product of two scalar polynomials.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if !self.is_scalar() || !other.is_scalar() || self.dim != other.dim {
            return Err(Error::Shape("product needs scalar polynomials of one dimension".into()));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let exponents: Vec<u32> = a.exponents.iter().zip(&b.exponents).map(|(x, y)| x + y).collect();
                if exponents.iter().sum::<u32>() > MAX_DEGREE {
                    return Err(Error::Validation(format!("product degree exceeds {MAX_DEGREE}")));
                }
                terms.push(Term {
                    output: 0,
                    coef: a.coef * b.coef,
                    exponents,
                });
            }
        }
        Ok(Self {
            dim: self.dim,
            output_dim: 1,
            terms,
        }
        .simplified())
    }

    /// Partial derivative with respect to the listed coordinates (in any order).
    pub fn partial(&self, vars: &[usize]) -> Self {
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                let mut e = t.exponents.clone();
                let mut c = t.coef;
                for &v in vars {
                    if e[v] == 0 {
                        return None;
                    }
                    c *= T::lit(e[v] as f64);
                    e[v] -= 1;
                }
                Some(Term {
                    output: t.output,
                    coef: c,
                    exponents: e,
                })
            })
            .collect();
        Self { terms, ..self.clone() }.simplified()
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "point of length {} for a polynomial in {} variables",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn monomial(exponents: &[u32], x: &[T]) -> T {
        exponents
            .iter()
            .zip(x)
            .fold(T::one(), |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
    }

    /// Output vector of length `p`.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        let mut out = vec![T::zero(); self.output_dim];
        for t in &self.terms {
            out[t.output] += t.coef * Self::monomial(&t.exponents, x);
        }
        Ok(out)
    }

    /// Value as a tensor: scalar when `p = 1`, vector otherwise.
    pub fn eval_tensor(&self, x: &[T]) -> Result<DenseTensor<T>> {
        let v = self.eval(x)?;
        if self.is_scalar() {
            Ok(DenseTensor::scalar(v[0]))
        } else {
            DenseTensor::vector(v)
        }
    }

    /// Shape of `∇^(m) G`: optional label mode, then `m` modes of size `d`.
    pub fn derivative_dims(&self, m: usize) -> Vec<usize> {
        let mut dims = if self.is_scalar() { vec![] } else { vec![self.output_dim] };
        dims.extend(std::iter::repeat_n(self.dim, m));
        dims
    }

    /// Exact `∇^(m) G(x)`.
    pub fn derivative(&self, x: &[T], m: usize) -> Result<DenseTensor<T>> {
        self.check_point(x)?;
        if m == 0 {
            return self.eval_tensor(x);
        }
        let d = self.dim;
        let block = d.pow(m as u32);
        let mut data = vec![T::zero(); self.output_dim * block];
        let dims = vec![d; m];
        for t in &self.terms {
            if t.exponents.iter().sum::<u32>() < m as u32 {
                continue;
            }
            let base = t.output * block;
            let mut idx = vec![0; m];
            let mut flat = 0;
            loop {
                let mut e = t.exponents.clone();
                let mut c = t.coef;
                let mut alive = true;
                for &v in &idx {
                    if e[v] == 0 {
                        alive = false;
                        break;
                    }
                    c *= T::lit(e[v] as f64);
                    e[v] -= 1;
                }
                if alive {
                    data[base + flat] += c * Self::monomial(&e, x);
                }
                flat += 1;
                if !next_index(&mut idx, &dims) {
                    break;
                }
            }
        }
        DenseTensor::new(self.derivative_dims(m), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_mixed_monomial() {
        // G(x) = x1² x2
        let g = PolyFunction::<f64>::new(
            2,
            1,
            vec![Term {
                output: 0,
                coef: 1.0,
                exponents: vec![2, 1],
            }],
        )
        .unwrap();
        let x = [1.5, -2.0];
        assert_eq!(g.eval(&x).unwrap(), vec![-4.5]);
        let d1 = g.derivative(&x, 1).unwrap();
        assert_eq!(d1.data(), &[2.0 * 1.5 * -2.0, 2.25]);
        let d2 = g.derivative(&x, 2).unwrap();
        assert_eq!(d2.data(), &[-4.0, 3.0, 3.0, 0.0]);
        let d3 = g.derivative(&x, 3).unwrap();
        assert_eq!(d3.get(&[0, 0, 1]), 2.0);
        assert_eq!(d3.get(&[1, 0, 0]), 2.0);
        assert_eq!(d3.get(&[0, 0, 0]), 0.0);
    }

    #[test]
    fn planted_cube_third_derivative() {
        let u = vec![0.6, 0.0, 0.8];
        let g = PolyFunction::planted_power_sum(std::slice::from_ref(&u), 3).unwrap();
        let d3 = g.derivative(&[0.3, 1.0, -0.2], 3).unwrap();
        let expected = crate::tensor::rank1_sum(&[6.0], &[u], 3).unwrap();
        assert!(d3.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn vector_output_has_label_mode_first() {
        let g = PolyFunction::<f64>::identity_map(3);
        let d = g.derivative(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(d, DenseTensor::identity(3));
        assert_eq!(g.derivative_dims(2), vec![3, 3, 3]);
    }

    #[test]
    fn rejects_high_degree_and_bad_shapes() {
        let t = |e: Vec<u32>| Term { output: 0, coef: 1.0, exponents: e };
        assert!(PolyFunction::<f64>::new(2, 1, vec![t(vec![4, 3])]).is_err());
        assert!(PolyFunction::<f64>::new(2, 1, vec![t(vec![1])]).is_err());
        let g = PolyFunction::<f64>::new(2, 1, vec![t(vec![1, 1])]).unwrap();
        assert!(g.eval(&[1.0]).is_err());
    }

    #[test]
    fn json_round_trip_of_spec() {
        let json = r#"{"dim":2,"terms":[{"coef":2.0,"exponents":[1,2]}]}"#;
        let spec: PolySpec = serde_json::from_str(json).unwrap();
        let g = PolyFunction::<f64>::from_spec(&spec).unwrap();
        assert_eq!(g.eval(&[3.0, 2.0]).unwrap(), vec![24.0]);
        assert_eq!(PolyFunction::<f64>::from_spec(&g.to_spec()).unwrap(), g);
    }
}
