//! Dense linear algebra glue: nalgebra-backed eigendecomposition and solves,
//! plus vector helpers and random orthonormal bases.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Eigenpairs of a symmetric matrix, in no particular order.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Eigenvectors, one per entry of `values`.
    pub vectors: Vec<Vec<T>>,
}

/// Symmetric eigendecomposition, computed in `f64` by nalgebra.
pub fn symmetric_eigen<T: Scalar>(m: &DenseTensor<T>) -> Result<SymmetricEigen<T>> {
    let n = square_dim(m)?;
    let a = DMatrix::from_fn(n, n, |i, j| 0.5 * (m.at2(i, j).as_f64() + m.at2(j, i).as_f64()));
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the eigensolver".into()));
    }
    let eig = a.symmetric_eigen();
    let values = eig.eigenvalues.iter().map(|&v| T::lit(v)).collect();
    let vectors = eig
        .eigenvectors
        .column_iter()
        .map(|c| c.iter().map(|&v| T::lit(v)).collect())
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

fn square_dim<T: Scalar>(m: &DenseTensor<T>) -> Result<usize> {
    if m.order() != 2 || m.dims()[0] != m.dims()[1] {
        return Err(Error::Shape(format!("expected a square matrix, got {:?}", m.dims())));
    }
    Ok(m.dims()[0])
}

/// LU factorization in `f64`; pivots below `ε_T · 10⁻⁴` count as singular.
fn factor<T: Scalar>(a: &[T], n: usize) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = DMatrix::from_row_iterator(n, n, a.iter().map(|v| v.as_f64())).lu();
    let floor = T::epsilon().as_f64() * 1e-4;
    if lu.u().diagonal().iter().any(|p| !(p.abs() > floor)) {
        return Err(Error::Validation("singular linear system".into()));
    }
    Ok(lu)
}

/// Flips `v` so that its largest-magnitude coordinate is positive; returns
/// the sign that was applied.
pub fn canonicalize_sign<T: Scalar>(v: &mut [T]) -> T {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
        -T::one()
    } else {
        T::one()
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with `A` row-major `n × n`.
pub fn solve<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Shape("solve: matrix and rhs sizes disagree".into()));
    }
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v.as_f64()));
    let x = factor(a, n)?
        .solve(&rhs)
        .ok_or_else(|| Error::Validation("singular linear system".into()))?;
    Ok(x.iter().map(|&v| T::lit(v)).collect())
}

pub fn invert<T: Scalar>(m: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let n = square_dim(m)?;
    let inv = factor(m.data(), n)?
        .try_inverse()
        .ok_or_else(|| Error::Validation("singular matrix".into()))?;
    DenseTensor::from_fn(vec![n, n], |ij| T::lit(inv[(ij[0], ij[1])]))
}

/// `k` orthonormal vectors in `R^d` via Gram–Schmidt on Gaussian draws.
pub fn random_orthonormal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<T> = (0..d).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        for _ in 0..2 {
            for u in &out {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, &b)| *a -= p * b);
            }
        }
        let n = norm(&v);
        if n > T::lit(1e-6) {
            v.iter_mut().for_each(|a| *a /= n);
            out.push(v);
        }
    }
    out
}

/// Uniform direction on the unit sphere.
pub fn random_unit<T: Scalar, R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.iter().map(|x| T::lit(x / n)).collect();
        }
    }
}
