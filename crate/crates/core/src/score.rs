//! Input density models and their higher-order score functions.
//!
//! Two independent evaluation routes are provided:
//!
//! * [`DensityModel::score`] runs the recursion
//!   `S_m = −S_{m−1} ⊗ ∇log p − ∇S_{m−1}` (with `S_0 = 1`) symbolically over
//!   the analytic log-density derivatives `∇^(k) log p` of the model. Each
//!   recursion step either appends a new `∇log p` factor or differentiates
//!   one existing factor, so after `m` steps the terms are indexed by the set
//!   partitions of the `m` modes.
//! * [`DensityModel::score_explicit`] evaluates `(−1)^m ∇^(m) p / p`
//!   directly from per-component Gaussian derivatives (Hermite-type tensors
//!   weighted by posterior responsibilities).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::PolyFunction;
use crate::scalar::Scalar;
use crate::tensor::{multilinear_all, next_index, DenseTensor};

/// Highest supported score order.
pub const MAX_SCORE_ORDER: usize = 4;

/// Points whose density falls below this are rejected as degenerate.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Largest accepted condition number for affine maps.
pub const MAX_CONDITION: f64 = 1e12;

/// Order `m` of a score function, `1 ≤ m ≤ 4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreOrder(usize);

impl ScoreOrder {
    pub fn new(m: usize) -> Result<Self> {
        if (1..=MAX_SCORE_ORDER).contains(&m) {
            Ok(Self(m))
        } else {
            Err(Error::Validation(format!(
                "score order {m} outside 1..={MAX_SCORE_ORDER}"
            )))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for ScoreOrder {
    type Error = Error;

    fn try_from(m: usize) -> Result<Self> {
        Self::new(m)
    }
}

/// Log-density value; `normalized` is false when an unknown additive
/// constant (the log-partition function) is missing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDensity<T> {
    pub value: T,
    pub normalized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture<T> {
    dim: usize,
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    /// Per-component diagonal variances.
    variances: Vec<Vec<T>>,
    identity_cov: bool,
}

impl<T: Scalar> GaussianMixture<T> {
    /// Mixture with identity covariance in every component.
    pub fn isotropic(weights: Vec<T>, means: Vec<Vec<T>>) -> Result<Self> {
        let dim = means.first().map_or(0, Vec::len);
        let variances = vec![vec![T::one(); dim]; means.len()];
        Self::build(weights, means, variances, true)
    }

    /// Mixture with per-component diagonal covariances.
    pub fn diagonal(weights: Vec<T>, means: Vec<Vec<T>>, variances: Vec<Vec<T>>) -> Result<Self> {
        Self::build(weights, means, variances, false)
    }

    fn build(weights: Vec<T>, means: Vec<Vec<T>>, variances: Vec<Vec<T>>, identity_cov: bool) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || means.len() != variances.len() {
            return Err(Error::Validation(format!(
                "mixture needs matching weights/means/variances, got {}/{}/{}",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Validation("mixture dimension is zero".into()));
        }
        if means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(Error::Shape("component parameters differ in dimension".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::Validation("mixture weights must be positive".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
            return Err(Error::Validation(format!("mixture weights sum to {total}, not 1")));
        }
        if variances.iter().flatten().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::Validation("variances must be positive".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture mean".into()));
        }
        Ok(Self {
            dim,
            weights,
            means,
            variances,
            identity_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<T>] {
        &self.variances
    }

    pub fn has_identity_covariance(&self) -> bool {
        self.identity_cov
    }

    /// Same components with new mixing weights.
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        Self::build(weights, self.means.clone(), self.variances.clone(), self.identity_cov)
    }

    /// `log N(x; μ_h, diag σ_h²)` for component `h`.
    pub fn component_log_density(&self, h: usize, x: &[T]) -> T {
        let two_pi = T::lit(2.0) * T::PI();
        let mut acc = T::zero();
        for ((&xi, &mu), &var) in x.iter().zip(&self.means[h]).zip(&self.variances[h]) {
            let y = xi - mu;
            acc -= T::lit(0.5) * (y * y / var + (two_pi * var).ln());
        }
        acc
    }

    /// `(log p(x), responsibilities p(h | x))` via log-sum-exp.
    fn log_density_and_posterior(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        let joint: Vec<T> = (0..self.components())
            .map(|h| self.weights[h].ln() + self.component_log_density(h, x))
            .collect();
        let peak = joint.iter().copied().fold(T::neg_infinity(), T::max);
        let mut post: Vec<T> = joint.iter().map(|&a| (a - peak).exp()).collect();
        let total: T = post.iter().copied().sum();
        let log_p = peak + total.ln();
        guard(log_p)?;
        post.iter_mut().for_each(|r| *r /= total);
        Ok((log_p, post))
    }

    /// Posterior responsibilities `p(h | x)`.
    pub fn posterior(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim, x)?;
        Ok(self.log_density_and_posterior(x)?.1)
    }

    /// `A · E[h | x]`, the responsibility-weighted mean.
    pub fn posterior_mean(&self, x: &[T]) -> Result<Vec<T>> {
        let r = self.posterior(x)?;
        let mut out = vec![T::zero(); self.dim];
        for (rh, mu) in r.iter().zip(&self.means) {
            out.iter_mut().zip(mu).for_each(|(o, &m)| *o += *rh * m);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpFamily<T> {
    energy: PolyFunction<T>,
}

impl<T: Scalar> ExpFamily<T> {
    /// `p(x) ∝ exp(−E(x))`; integrability of `exp(−E)` is the caller's
    /// responsibility.
    pub fn new(energy: PolyFunction<T>) -> Result<Self> {
        if !energy.is_scalar() {
            return Err(Error::Validation("energy must be scalar valued".into()));
        }
        Ok(Self { energy })
    }

    pub fn energy(&self) -> &PolyFunction<T> {
        &self.energy
    }

    pub fn dim(&self) -> usize {
        self.energy.dim()
    }
}

/// Invertible affine map `t = A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T> {
    matrix: DenseTensor<T>,
    inverse: DenseTensor<T>,
    shift: Vec<T>,
    log_abs_det: T,
}

impl<T: Scalar> AffineMap<T> {
    pub fn new(matrix: DenseTensor<T>, shift: Vec<T>) -> Result<Self> {
        if matrix.order() != 2 || matrix.dims()[0] != matrix.dims()[1] {
            return Err(Error::Shape("affine map needs a square matrix".into()));
        }
        let d = matrix.dims()[0];
        if shift.len() != d {
            return Err(Error::Shape(format!("shift of length {} for dimension {d}", shift.len())));
        }
        let gram = DenseTensor::from_fn(vec![d, d], |i| {
            (0..d).map(|k| matrix.at2(k, i[0]) * matrix.at2(k, i[1])).sum()
        })?;
        let eig = linalg::symmetric_eigen(&gram)?;
        let hi = eig.values.iter().copied().fold(T::zero(), T::max);
        let lo = eig.values.iter().copied().fold(T::infinity(), T::min);
        if !(lo > T::zero()) || (hi / lo).sqrt() >= T::lit(MAX_CONDITION) {
            return Err(Error::Validation(format!(
                "affine matrix is singular or ill-conditioned (σ_max/σ_min = {})",
                (hi / lo.max(T::zero())).sqrt()
            )));
        }
        // |det A| = sqrt(det AᵀA)
        let log_abs_det = eig.values.iter().map(|v| v.ln()).sum::<T>() * T::lit(0.5);
        let inverse = linalg::invert(&matrix)?;
        Ok(Self {
            matrix,
            inverse,
            shift,
            log_abs_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &DenseTensor<T> {
        &self.matrix
    }

    pub fn shift(&self) -> &[T] {
        &self.shift
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix.at2(i, j) * x[j]).sum::<T>() + self.shift[i])
            .collect()
    }

    pub fn apply_inverse(&self, t: &[T]) -> Vec<T> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.inverse.at2(i, j) * (t[j] - self.shift[j])).sum())
            .collect()
    }
}

/// Generative input model.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityModel<T> {
    StandardGaussian { dim: usize },
    GaussianMixture(GaussianMixture<T>),
    ExpFamily(ExpFamily<T>),
    Affine {
        base: Box<DensityModel<T>>,
        map: AffineMap<T>,
    },
}

fn check_dim<T: Scalar>(dim: usize, x: &[T]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Shape(format!("point of length {} for a model of dimension {dim}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input point".into()));
    }
    Ok(())
}

fn guard<T: Scalar>(log_p: T) -> Result<()> {
    if !(log_p >= T::lit(DENSITY_FLOOR.ln())) {
        return Err(Error::degenerate(format!("density exp({log_p}) below {DENSITY_FLOOR:e}")));
    }
    Ok(())
}

impl<T: Scalar> DensityModel<T> {
    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dimension must be positive".into()));
        }
        Ok(Self::StandardGaussian { dim })
    }

    pub fn affine(base: DensityModel<T>, map: AffineMap<T>) -> Result<Self> {
        if base.dim() != map.dim() {
            return Err(Error::Shape(format!(
                "affine map of dimension {} over a model of dimension {}",
                map.dim(),
                base.dim()
            )));
        }
        Ok(Self::Affine {
            base: Box::new(base),
            map,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::StandardGaussian { dim } => *dim,
            Self::GaussianMixture(g) => g.dim(),
            Self::ExpFamily(e) => e.dim(),
            Self::Affine { map, .. } => map.dim(),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::StandardGaussian { .. } => "gaussian",
            Self::GaussianMixture(_) => "gmm",
            Self::ExpFamily(_) => "exp_family",
            Self::Affine { .. } => "affine",
        }
    }

    pub fn log_density(&self, x: &[T]) -> Result<LogDensity<T>> {
        check_dim(self.dim(), x)?;
        self.log_density_unchecked(x)
    }

    fn log_density_unchecked(&self, x: &[T]) -> Result<LogDensity<T>> {
        let out = match self {
            Self::StandardGaussian { dim } => {
                let sq: T = x.iter().map(|&v| v * v).sum();
                let c = T::lit(0.5) * T::from_usize_lossy(*dim) * (T::lit(2.0) * T::PI()).ln();
                LogDensity {
                    value: -T::lit(0.5) * sq - c,
                    normalized: true,
                }
            }
            Self::GaussianMixture(g) => LogDensity {
                value: g.log_density_and_posterior(x)?.0,
                normalized: true,
            },
            Self::ExpFamily(e) => LogDensity {
                value: -e.energy.eval(x)?[0],
                normalized: false,
            },
            Self::Affine { base, map } => {
                let inner = base.log_density_unchecked(&map.apply_inverse(x))?;
                LogDensity {
                    value: inner.value - map.log_abs_det,
                    normalized: inner.normalized,
                }
            }
        };
        guard(out.value)?;
        Ok(out)
    }

    /// Analytic `∇^(k) log p(x)` for `k = 1..=m` (entry `k − 1`).
    pub fn log_density_derivatives(&self, x: &[T], m: usize) -> Result<Vec<DenseTensor<T>>> {
        check_dim(self.dim(), x)?;
        ScoreOrder::new(m)?;
        self.log_derivs_unchecked(x, m)
    }

    fn log_derivs_unchecked(&self, x: &[T], m: usize) -> Result<Vec<DenseTensor<T>>> {
        let d = self.dim();
        match self {
            Self::StandardGaussian { .. } => {
                self.log_density_unchecked(x)?;
                Ok((1..=m)
                    .map(|k| match k {
                        1 => DenseTensor::from_parts(vec![d], x.iter().map(|&v| -v).collect()),
                        2 => DenseTensor::identity(d).scale(-T::one()),
                        _ => DenseTensor::from_parts(vec![d; k], vec![T::zero(); d.pow(k as u32)]),
                    })
                    .collect())
            }
            Self::GaussianMixture(g) => {
                // cumulants from the mixture moment tensors ∇^(k)p / p
                let (_, post) = g.log_density_and_posterior(x)?;
                let moments: Vec<DenseTensor<T>> = (1..=m)
                    .map(|k| {
                        let sign = if k % 2 == 1 { -T::one() } else { T::one() };
                        gmm_explicit(g, &post, x, k).scale(sign)
                    })
                    .collect();
                Ok((1..=m).map(|k| cumulant_from_moments(&moments, d, k)).collect())
            }
            Self::ExpFamily(e) => {
                guard(-e.energy.eval(x)?[0])?;
                (1..=m)
                    .map(|k| Ok(e.energy.derivative(x, k)?.scale(-T::one())))
                    .collect()
            }
            Self::Affine { base, map } => {
                let inner = map.apply_inverse(x);
                base.log_derivs_unchecked(&inner, m)?
                    .iter()
                    .map(|t| multilinear_all(t, &map.inverse))
                    .collect()
            }
        }
    }

    /// `S_m(x)` by the score recursion over log-density derivatives.
    pub fn score(&self, x: &[T], m: ScoreOrder) -> Result<DenseTensor<T>> {
        let derivs = self.log_density_derivatives(x, m.get())?;
        Ok(score_from_log_derivatives(&derivs, self.dim(), m.get()))
    }

    /// `S_m(x) = (−1)^m ∇^(m) p(x) / p(x)` from closed-form density
    /// derivatives. Requires a normalized density.
    pub fn score_explicit(&self, x: &[T], m: ScoreOrder) -> Result<DenseTensor<T>> {
        check_dim(self.dim(), x)?;
        self.explicit_unchecked(x, m.get())
    }

    fn explicit_unchecked(&self, x: &[T], m: usize) -> Result<DenseTensor<T>> {
        match self {
            Self::StandardGaussian { .. } => {
                self.log_density_unchecked(x)?;
                Ok(hermite_unchecked(x, m))
            }
            Self::GaussianMixture(g) => {
                let (_, post) = g.log_density_and_posterior(x)?;
                Ok(gmm_explicit(g, &post, x, m))
            }
            Self::ExpFamily(_) => Err(Error::Unsupported(
                "explicit scores need a normalized density; exp_family has an unknown normalizer".into(),
            )),
            Self::Affine { base, map } => {
                let inner = base.explicit_unchecked(&map.apply_inverse(x), m)?;
                multilinear_all(&inner, &map.inverse)
            }
        }
    }

    /// Draws `n` points (row-major `n × d`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<T>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            self.sample_one(rng, &mut out)?;
        }
        Ok(out)
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<T>) -> Result<()> {
        match self {
            Self::StandardGaussian { dim } => {
                out.extend((0..*dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))));
            }
            Self::GaussianMixture(g) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut h = g.components() - 1;
                for (i, w) in g.weights.iter().enumerate() {
                    acc += w.as_f64();
                    if u < acc {
                        h = i;
                        break;
                    }
                }
                for (&mu, &var) in g.means[h].iter().zip(&g.variances[h]) {
                    let z = T::lit(rng.sample::<f64, _>(StandardNormal));
                    out.push(mu + var.sqrt() * z);
                }
            }
            Self::ExpFamily(_) => {
                return Err(Error::Unsupported("no sampler for exp_family models".into()));
            }
            Self::Affine { base, map } => {
                let mut x = Vec::with_capacity(map.dim());
                base.sample_one(rng, &mut x)?;
                out.extend(map.apply(&x));
            }
        }
        Ok(())
    }
}

/// One term of the expanded recursion: `coef · Π_b ∇^(|b|) log p (i_b)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct PartitionTerm {
    pub coef: i64,
    pub blocks: Vec<Vec<usize>>,
}

/// Unrolls `S_m = −S_{m−1} ⊗ ∇log p − ∇S_{m−1}` from `S_0 = 1`.
///
/// The product rule sends `∇^(a) log p` to `∇^(a+1) log p` with the new
/// mode appended last, so differentiating a term grows one of its blocks.
pub(crate) fn recursion_terms(m: usize) -> Vec<PartitionTerm> {
    let mut terms = vec![PartitionTerm {
        coef: 1,
        blocks: Vec::new(),
    }];
    for mode in 0..m {
        let mut next = Vec::with_capacity(terms.len() * (mode + 1));
        for t in &terms {
            let mut outer = t.blocks.clone();
            outer.push(vec![mode]);
            next.push(PartitionTerm {
                coef: -t.coef,
                blocks: outer,
            });
            for j in 0..t.blocks.len() {
                let mut grown = t.blocks.clone();
                grown[j].push(mode);
                next.push(PartitionTerm {
                    coef: -t.coef,
                    blocks: grown,
                });
            }
        }
        terms = next;
    }
    terms
}

/// Fills a symmetric `[d; m]` tensor by evaluating `f` on non-decreasing
/// multi-indices and copying to their permutations.
pub(crate) fn fill_symmetric<T: Scalar>(d: usize, m: usize, mut f: impl FnMut(&[usize]) -> T) -> DenseTensor<T> {
    let dims = vec![d; m];
    let len = d.pow(m as u32);
    let mut data = vec![T::zero(); len];
    let mut idx = vec![0usize; m];
    let mut sorted = vec![0usize; m];
    let mut flat = 0;
    loop {
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            data[flat] = f(&idx);
        } else {
            sorted.copy_from_slice(&idx);
            sorted.sort_unstable();
            let off = sorted.iter().fold(0, |acc, &i| acc * d + i);
            data[flat] = data[off];
        }
        flat += 1;
        if m == 0 || !next_index(&mut idx, &dims) {
            break;
        }
    }
    DenseTensor::from_parts(dims, data)
}

fn block_offset(block: &[usize], idx: &[usize], d: usize) -> usize {
    block.iter().fold(0, |acc, &mode| acc * d + idx[mode])
}

/// Evaluates `S_m` given `∇^(k) log p`, `k = 1..=m` (or the parametric
/// analogue given `∇_θ^(k) log p`).
pub fn score_from_log_derivatives<T: Scalar>(derivs: &[DenseTensor<T>], d: usize, m: usize) -> DenseTensor<T> {
    let terms = recursion_terms(m);
    fill_symmetric(d, m, |idx| {
        let mut acc = T::zero();
        for t in &terms {
            let mut prod = T::lit(t.coef as f64);
            for b in &t.blocks {
                prod *= derivs[b.len() - 1].data()[block_offset(b, idx, d)];
                if prod == T::zero() {
                    break;
                }
            }
            acc += prod;
        }
        acc
    })
}

/// Joint cumulant tensor `κ_n = Σ_π (−1)^{|π|−1} (|π|−1)! Π_b M_{|b|}` from
/// moment tensors `M_k` (entry `k − 1`).
fn cumulant_from_moments<T: Scalar>(moments: &[DenseTensor<T>], d: usize, n: usize) -> DenseTensor<T> {
    let partitions = recursion_terms(n);
    let factorial = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    fill_symmetric(d, n, |idx| {
        let mut acc = T::zero();
        for p in &partitions {
            let k = p.blocks.len();
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let mut prod = T::lit(sign * factorial(k - 1));
            for b in &p.blocks {
                prod *= moments[b.len() - 1].data()[block_offset(b, idx, d)];
            }
            acc += prod;
        }
        acc
    })
}

/// A partial matching of `0..m`: `(singletons, pairs)`.
type Matching = (Vec<usize>, Vec<(usize, usize)>);

fn partial_matchings(m: usize) -> Vec<Matching> {
    fn rec(rest: &[usize], singles: &mut Vec<usize>, pairs: &mut Vec<(usize, usize)>, out: &mut Vec<Matching>) {
        let Some((&first, tail)) = rest.split_first() else {
            out.push((singles.clone(), pairs.clone()));
            return;
        };
        singles.push(first);
        rec(tail, singles, pairs, out);
        singles.pop();
        for (pos, &partner) in tail.iter().enumerate() {
            let mut remaining = tail.to_vec();
            remaining.remove(pos);
            pairs.push((first, partner));
            rec(&remaining, singles, pairs, out);
            pairs.pop();
        }
    }
    let modes: Vec<usize> = (0..m).collect();
    let mut out = Vec::new();
    rec(&modes, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

/// `(−1)^m ∇^(m) N(y; 0, diag(1/λ)) / N(y; 0, diag(1/λ))`: sums over partial
/// matchings of `Π_singles λ_i y_i · Π_pairs (−λ_i δ_ij)`.
fn weighted_hermite<T: Scalar>(y: &[T], precision: &[T], m: usize) -> DenseTensor<T> {
    let d = y.len();
    let scaled: Vec<T> = y.iter().zip(precision).map(|(&a, &l)| a * l).collect();
    let matchings = partial_matchings(m);
    fill_symmetric(d, m, |idx| {
        let mut acc = T::zero();
        'outer: for (singles, pairs) in &matchings {
            let mut prod = T::one();
            for &(a, b) in pairs {
                if idx[a] != idx[b] {
                    continue 'outer;
                }
                prod *= -precision[idx[a]];
            }
            for &s in singles {
                prod *= scaled[idx[s]];
            }
            acc += prod;
        }
        acc
    })
}

fn hermite_unchecked<T: Scalar>(x: &[T], m: usize) -> DenseTensor<T> {
    weighted_hermite(x, &vec![T::one(); x.len()], m)
}

fn gmm_explicit<T: Scalar>(g: &GaussianMixture<T>, post: &[T], x: &[T], m: usize) -> DenseTensor<T> {
    let d = g.dim();
    let mut acc = vec![T::zero(); d.pow(m as u32)];
    for h in 0..g.components() {
        let y: Vec<T> = x.iter().zip(&g.means[h]).map(|(&a, &b)| a - b).collect();
        let prec: Vec<T> = g.variances[h].iter().map(|&v| T::one() / v).collect();
        let comp = weighted_hermite(&y, &prec, m);
        acc.iter_mut().zip(comp.data()).for_each(|(a, &c)| *a += post[h] * c);
    }
    DenseTensor::from_parts(vec![d; m], acc)
}

/// Multivariate probabilists' Hermite tensor `H_m(x)`.
pub fn hermite<T: Scalar>(x: &[T], m: ScoreOrder) -> DenseTensor<T> {
    hermite_unchecked(x, m.get())
}

/// `S_m(x; μ)` for `N(μ, I)` with the mean as parameter, via the recursion
/// over `∇_μ^(k) log p = (x − μ, −I, 0, …)`.
pub fn parametric_score_gaussian_mean<T: Scalar>(x: &[T], mu: &[T], m: ScoreOrder) -> Result<DenseTensor<T>> {
    let d = x.len();
    if mu.len() != d {
        return Err(Error::Shape("x and μ differ in length".into()));
    }
    let m = m.get();
    let derivs: Vec<DenseTensor<T>> = (1..=m)
        .map(|k| match k {
            1 => DenseTensor::from_parts(vec![d], x.iter().zip(mu).map(|(&a, &b)| a - b).collect()),
            2 => DenseTensor::identity(d).scale(-T::one()),
            _ => DenseTensor::from_parts(vec![d; k], vec![T::zero(); d.pow(k as u32)]),
        })
        .collect();
    Ok(score_from_log_derivatives(&derivs, d, m))
}

/// Fisher score `∇_μ log p(x; μ) = x − μ` of `N(μ, I)`.
pub fn fisher_score_gaussian_mean<T: Scalar>(x: &[T], mu: &[T]) -> Result<Vec<T>> {
    if mu.len() != x.len() {
        return Err(Error::Shape("x and μ differ in length".into()));
    }
    Ok(x.iter().zip(mu).map(|(&a, &b)| a - b).collect())
}

/// `S_m` of `t = A x + b` at the point `t`.
pub fn transform_score_affine<T: Scalar>(
    model: &DensityModel<T>,
    matrix: &DenseTensor<T>,
    shift: &[T],
    t: &[T],
    m: ScoreOrder,
) -> Result<DenseTensor<T>> {
    let map = AffineMap::new(matrix.clone(), shift.to_vec())?;
    DensityModel::affine(model.clone(), map)?.score(t, m)
}

/// Result of re-estimating mixing weights with frozen components.
#[derive(Clone, Debug)]
pub struct WeightRefit<T> {
    pub weights: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean `log p(x_i)` under the refitted mixture.
    pub mean_log_likelihood: T,
    /// Samples skipped because every component density underflowed.
    pub skipped: usize,
}

/// Weights-only EM: component densities stay fixed, mixing weights move
/// to maximize the likelihood of `samples` (row-major `n × d`).
pub fn selftaught_refit_weights<T: Scalar>(components: &GaussianMixture<T>, samples: &[T]) -> Result<WeightRefit<T>> {
    const MAX_ITERS: usize = 10_000;
    let d = components.dim();
    let k = components.components();
    if samples.is_empty() || !samples.len().is_multiple_of(d) {
        return Err(Error::Validation(format!(
            "need at least one sample of dimension {d}, got {} values",
            samples.len()
        )));
    }
    let floor = T::lit(DENSITY_FLOOR.ln());
    let mut table: Vec<Vec<T>> = Vec::new();
    let mut skipped = 0;
    for x in samples.chunks(d) {
        let row: Vec<T> = (0..k).map(|h| components.component_log_density(h, x)).collect();
        if row.iter().copied().fold(T::neg_infinity(), T::max) < floor {
            skipped += 1;
        } else {
            table.push(row);
        }
    }
    if table.is_empty() {
        return Err(Error::Fit("every sample is degenerate under every component".into()));
    }
    let n = T::from_usize_lossy(table.len());
    let mut w = vec![T::one() / T::from_usize_lossy(k); k];
    let mut iterations = 0;
    let mut converged = false;
    let mut resp = vec![T::zero(); k];
    while iterations < MAX_ITERS {
        iterations += 1;
        let mut next = vec![T::zero(); k];
        for row in &table {
            let peak = (0..k)
                .map(|h| w[h].ln() + row[h])
                .fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for h in 0..k {
                resp[h] = (w[h].ln() + row[h] - peak).exp();
                total += resp[h];
            }
            for h in 0..k {
                next[h] += resp[h] / total;
            }
        }
        next.iter_mut().for_each(|v| *v /= n);
        let change = next
            .iter()
            .zip(&w)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        w = next;
        if change < T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            converged = true;
            break;
        }
    }
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    w.iter_mut().for_each(|v| *v = v.max(tiny));
    let s: T = w.iter().copied().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let mut ll = T::zero();
    for row in &table {
        let peak = (0..k).map(|h| w[h].ln() + row[h]).fold(T::neg_infinity(), T::max);
        let total: T = (0..k).map(|h| (w[h].ln() + row[h] - peak).exp()).sum();
        ll += peak + total.ln();
    }
    Ok(WeightRefit {
        weights: w,
        iterations,
        converged,
        mean_log_likelihood: ll / n,
        skipped,
    })
}
