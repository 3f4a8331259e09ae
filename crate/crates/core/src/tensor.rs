//! Dense row-major tensors and the multilinear algebra used throughout the
//! crate: outer products, multilinear forms, fibre contractions, mode
//! transposition, symmetric rank-1 sums and nested central-difference
//! derivatives.
//!
//! Derivatives follow the "last mode" convention: the gradient of an
//! order-`r` tensor function is an order-`r + 1` tensor whose final index is
//! the differentiation coordinate.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub mod io;

/// Highest tensor order the crate will allocate. Score orders are capped at
/// four; two extra modes leave room for vector labels and Gram products.
pub const MAX_ORDER: usize = 6;

/// Default per-tensor element budget.
pub const DEFAULT_ELEMENT_BUDGET: usize = 100_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn checked_len(dims: &[usize], budget: usize) -> Result<usize> {
    if dims.len() > MAX_ORDER {
        return Err(Error::Validation(format!(
            "tensor order {} exceeds the maximum of {MAX_ORDER}",
            dims.len()
        )));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("dimension {pos} is zero")));
    }
    let total: u128 = dims.iter().map(|&d| d as u128).product();
    if total > budget as u128 {
        return Err(Error::SizeLimit {
            requested: total,
            budget,
        });
    }
    Ok(total as usize)
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Advances a row-major multi-index; returns `false` after the last index.
pub(crate) fn next_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = checked_len(&dims, DEFAULT_ELEMENT_BUDGET)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Self { dims, data })
    }

    /// Construction without the finiteness scan, for internal results whose
    /// inputs were already validated.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::zeros_with_budget(dims, DEFAULT_ELEMENT_BUDGET)
    }

    pub fn zeros_with_budget(dims: Vec<usize>, budget: usize) -> Result<Self> {
        let len = checked_len(&dims, budget)?;
        Ok(Self {
            dims,
            data: vec![T::zero(); len],
        })
    }

    pub fn scalar(v: T) -> Self {
        Self {
            dims: Vec::new(),
            data: vec![v],
        }
    }

    pub fn vector(v: Vec<T>) -> Result<Self> {
        Self::new(vec![v.len()], v)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Self::matrix(r, c, rows.concat())
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![T::zero(); d * d];
        for i in 0..d {
            data[i * d + i] = T::one();
        }
        Self::from_parts(vec![d, d], data)
    }

    /// Standard basis vector `e_i` in `R^d` (zero-based `i`).
    pub fn basis(d: usize, i: usize) -> Self {
        let mut data = vec![T::zero(); d];
        data[i] = T::one();
        Self::from_parts(vec![d], data)
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = checked_len(&dims, DEFAULT_ELEMENT_BUDGET)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; dims.len()];
        loop {
            data.push(f(&idx));
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        Self::new(dims, data)
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    /// Scalar value of an order-0 tensor (or the first entry otherwise).
    pub fn value(&self) -> T {
        self.data[0]
    }

    /// Common side length when every mode has the same dimension.
    pub fn cubical_dim(&self) -> Option<usize> {
        let d = *self.dims.first()?;
        self.dims.iter().all(|&x| x == d).then_some(d)
    }

    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let len = checked_len(&dims, DEFAULT_ELEMENT_BUDGET)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Self::from_parts(dims, self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self::from_parts(
            self.dims.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        if self.dims != other.dims {
            return T::infinity();
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor::from_parts(
            self.dims.clone(),
            self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        )
    }

    /// Matrix view accessor `M(i, j)` for order-2 tensors.
    pub(crate) fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.dims[1] + j]
    }

    /// Largest deviation from symmetry under swaps of adjacent modes.
    pub fn asymmetry(&self) -> T {
        let r = self.order();
        let mut worst = T::zero();
        for a in 0..r.saturating_sub(1) {
            let mut perm: Vec<usize> = (0..r).collect();
            perm.swap(a, a + 1);
            let p = Permutation { entries: perm };
            match transpose(self, &p) {
                Ok(t) => worst = worst.max(self.max_abs_diff(&t)),
                Err(_) => return T::infinity(),
            }
        }
        worst
    }

    /// Average over all mode permutations.
    pub fn symmetrize(&self) -> Result<Self> {
        let r = self.order();
        let perms = all_permutations(r);
        let mut acc = Self::zeros(self.dims.clone())?;
        for p in &perms {
            let t = transpose(self, &Permutation { entries: p.clone() })?;
            for (a, b) in acc.data.iter_mut().zip(&t.data) {
                *a += *b;
            }
        }
        let n = T::from_usize_lossy(perms.len());
        Ok(acc.map(|v| v / n))
    }
}

pub(crate) fn all_permutations(r: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(r), &mut vec![false; r], &mut out);
    out
}

/// Bijection on the modes of a tensor, stored zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    entries: Vec<usize>,
}

impl Permutation {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; entries.len()];
        for &e in &entries {
            if e >= entries.len() || seen[e] {
                return Err(Error::Validation(format!(
                    "{entries:?} is not a permutation of 0..{}",
                    entries.len()
                )));
            }
            seen[e] = true;
        }
        Ok(Self { entries })
    }

    /// Builds from the one-based notation `[π_1, …, π_r]`.
    pub fn from_one_based(entries: &[usize]) -> Result<Self> {
        if entries.contains(&0) {
            return Err(Error::Validation("one-based permutation contains 0".into()));
        }
        Self::new(entries.iter().map(|&e| e - 1).collect())
    }

    pub fn identity(r: usize) -> Self {
        Self {
            entries: (0..r).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.entries.len()];
        for (i, &p) in self.entries.iter().enumerate() {
            inv[p] = i;
        }
        Self { entries: inv }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Outer product: `(A ⊗ B)(i…, j…) = A(i…) · B(j…)`.
pub fn tensor_product<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    tensor_product_with_budget(a, b, DEFAULT_ELEMENT_BUDGET)
}

pub fn tensor_product_with_budget<T: Scalar>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
    budget: usize,
) -> Result<DenseTensor<T>> {
    let dims: Vec<usize> = a.dims.iter().chain(&b.dims).copied().collect();
    let len = checked_len(&dims, budget)?;
    let mut data = Vec::with_capacity(len);
    for &x in &a.data {
        data.extend(b.data.iter().map(|&y| x * y));
    }
    Ok(DenseTensor::from_parts(dims, data))
}

/// Multiplies one mode of `t` by a matrix: the mode's index `j` is summed
/// against `m(j, i)` and replaced by `i`.
pub fn mode_multiply<T: Scalar>(
    t: &DenseTensor<T>,
    mode: usize,
    m: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if m.order() != 2 {
        return Err(Error::Shape("mode multiplier must be a matrix".into()));
    }
    if mode >= t.order() || t.dims[mode] != m.dims[0] {
        return Err(Error::Shape(format!(
            "mode {mode} of {:?} does not match {:?}",
            t.dims, m.dims
        )));
    }
    let (rows, cols) = (m.dims[0], m.dims[1]);
    let outer: usize = t.dims[..mode].iter().product();
    let inner: usize = t.dims[mode + 1..].iter().product();
    let mut dims = t.dims.clone();
    dims[mode] = cols;
    let len = checked_len(&dims, DEFAULT_ELEMENT_BUDGET)?;
    let mut out = vec![T::zero(); len];
    for o in 0..outer {
        for i in 0..cols {
            let dst = &mut out[(o * cols + i) * inner..(o * cols + i + 1) * inner];
            for j in 0..rows {
                let w = m.data[j * cols + i];
                if w == T::zero() {
                    continue;
                }
                let src = &t.data[(o * rows + j) * inner..(o * rows + j + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(DenseTensor::from_parts(dims, out))
}

/// `T(M_1, M_2, M_3)` for an order-3 tensor and matrices with `d` rows.
pub fn multilinear_form<T: Scalar>(
    t: &DenseTensor<T>,
    m1: &DenseTensor<T>,
    m2: &DenseTensor<T>,
    m3: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if t.order() != 3 {
        return Err(Error::Shape(format!(
            "multilinear form needs an order-3 tensor, got order {}",
            t.order()
        )));
    }
    let out = mode_multiply(t, 0, m1)?;
    let out = mode_multiply(&out, 1, m2)?;
    mode_multiply(&out, 2, m3)
}

/// Applies the same matrix to every mode of `t`.
pub fn multilinear_all<T: Scalar>(t: &DenseTensor<T>, m: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    (0..t.order()).try_fold(t.clone(), |acc, mode| mode_multiply(&acc, mode, m))
}

/// `T(I, v, w) = Σ_{j,l} v_j w_l T(:, j, l)`.
pub fn contract_fibers<T: Scalar>(t: &DenseTensor<T>, v: &[T], w: &[T]) -> Result<Vec<T>> {
    if t.order() != 3 {
        return Err(Error::Shape("fibre contraction needs an order-3 tensor".into()));
    }
    let [d0, d1, d2] = [t.dims[0], t.dims[1], t.dims[2]];
    if v.len() != d1 || w.len() != d2 {
        return Err(Error::Shape(format!(
            "vectors of length {}, {} against dims {:?}",
            v.len(),
            w.len(),
            t.dims
        )));
    }
    let mut out = vec![T::zero(); d0];
    for (i, o) in out.iter_mut().enumerate() {
        let slab = &t.data[i * d1 * d2..(i + 1) * d1 * d2];
        let mut acc = T::zero();
        for (j, &vj) in v.iter().enumerate() {
            let row = &slab[j * d2..(j + 1) * d2];
            let inner = row.iter().zip(w).fold(T::zero(), |s, (&a, &b)| s + a * b);
            acc += vj * inner;
        }
        *o = acc;
    }
    Ok(out)
}

/// Full contraction `T(u, u, …, u)` of a cubical tensor with one vector.
pub fn contract_all<T: Scalar>(t: &DenseTensor<T>, u: &[T]) -> Result<T> {
    let mut cur = t.data.clone();
    for &d in t.dims.iter().rev() {
        if d != u.len() {
            return Err(Error::Shape(format!(
                "vector of length {} against dims {:?}",
                u.len(),
                t.dims
            )));
        }
        cur = cur
            .chunks(d)
            .map(|c| c.iter().zip(u).fold(T::zero(), |s, (&a, &b)| s + a * b))
            .collect();
    }
    Ok(cur[0])
}

/// Mode transposition: mode `i` of the output is mode `π_i` of the input,
/// i.e. `out(j_{π_1}, …, j_{π_r}) = t(j_1, …, j_r)`.
pub fn transpose<T: Scalar>(t: &DenseTensor<T>, pi: &Permutation) -> Result<DenseTensor<T>> {
    if pi.len() != t.order() {
        return Err(Error::Validation(format!(
            "permutation of length {} for an order-{} tensor",
            pi.len(),
            t.order()
        )));
    }
    let in_strides = t.strides();
    let dims: Vec<usize> = pi.entries.iter().map(|&p| t.dims[p]).collect();
    let gather: Vec<usize> = pi.entries.iter().map(|&p| in_strides[p]).collect();
    let mut data = Vec::with_capacity(t.len());
    let mut idx = vec![0; dims.len()];
    loop {
        let off: usize = idx.iter().zip(&gather).map(|(i, s)| i * s).sum();
        data.push(t.data[off]);
        if !next_index(&mut idx, &dims) {
            break;
        }
    }
    Ok(DenseTensor::from_parts(dims, data))
}

/// `Σ_j w_j · v_j^{⊗m}`.
pub fn rank1_sum<T: Scalar>(weights: &[T], vectors: &[Vec<T>], m: usize) -> Result<DenseTensor<T>> {
    if weights.is_empty() || vectors.is_empty() {
        return Err(Error::Validation("rank-1 sum needs at least one component".into()));
    }
    if weights.len() != vectors.len() {
        return Err(Error::Validation(format!(
            "{} weights for {} vectors",
            weights.len(),
            vectors.len()
        )));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("component vectors differ in length".into()));
    }
    let mut acc = DenseTensor::zeros(vec![d; m])?;
    for (&w, v) in weights.iter().zip(vectors) {
        let mut term = DenseTensor::scalar(w);
        let vt = DenseTensor::from_parts(vec![d], v.clone());
        for _ in 0..m {
            term = tensor_product(&term, &vt)?;
        }
        for (a, b) in acc.data.iter_mut().zip(&term.data) {
            *a += *b;
        }
    }
    Ok(acc)
}

/// Default central-difference step for coordinate value `x`.
pub fn default_step<T: Scalar>(x: T) -> T {
    T::lit(1e-4) * (T::one() + x.abs())
}

type TensorFn<'a, T> = dyn Fn(&[T]) -> Result<DenseTensor<T>> + 'a;

fn gradient_once<T: Scalar>(f: &TensorFn<'_, T>, x: &[T], step: Option<T>) -> Result<DenseTensor<T>> {
    let d = x.len();
    let mut columns = Vec::with_capacity(d);
    let mut point = x.to_vec();
    let mut out_dims: Option<Vec<usize>> = None;
    for j in 0..d {
        let h = step.unwrap_or_else(|| default_step(x[j]));
        let hi = x[j] + h;
        let lo = x[j] - h;
        point[j] = hi;
        let fp = f(&point)?;
        point[j] = lo;
        let fm = f(&point)?;
        point[j] = x[j];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("function value near coordinate {j}")));
        }
        match &out_dims {
            None => out_dims = Some(fp.dims.clone()),
            Some(dims) if *dims != fp.dims || *dims != fm.dims => {
                return Err(Error::Shape("function output shape changed".into()))
            }
            _ => {}
        }
        let denom = hi - lo;
        columns.push(
            fp.data
                .iter()
                .zip(&fm.data)
                .map(|(&a, &b)| (a - b) / denom)
                .collect::<Vec<T>>(),
        );
    }
    let mut dims = out_dims.unwrap_or_default();
    let inner = columns.first().map_or(1, Vec::len);
    dims.push(d);
    checked_len(&dims, DEFAULT_ELEMENT_BUDGET)?;
    let mut data = Vec::with_capacity(inner * d);
    for e in 0..inner {
        data.extend(columns.iter().map(|c| c[e]));
    }
    Ok(DenseTensor::from_parts(dims, data))
}

/// Nested central-difference estimate of `∇^(m) F(x)`; each pass appends the
/// differentiation index as the last mode. `step = None` uses
/// `1e-4 · (1 + |x_i|)` per coordinate.
pub fn numeric_gradient<T, F>(f: &F, x: &[T], m: usize, step: Option<T>) -> Result<DenseTensor<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<DenseTensor<T>>,
{
    if !(1..=3).contains(&m) {
        return Err(Error::Validation(format!(
            "numeric derivative order {m} outside 1..=3"
        )));
    }
    fn nested<T: Scalar>(f: &TensorFn<'_, T>, x: &[T], m: usize, step: Option<T>) -> Result<DenseTensor<T>> {
        if m == 1 {
            return gradient_once(f, x, step);
        }
        let inner = |y: &[T]| nested(f, y, m - 1, step);
        gradient_once(&inner, x, step)
    }
    nested(f, x, m, step)
}
