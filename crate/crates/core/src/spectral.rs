//! Symmetric CP decomposition by multi-start tensor power iteration with
//! candidate clustering, plus whitening and the matrix (PCA) path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, canonicalize_sign, dot, norm};
use crate::scalar::Scalar;
use crate::tensor::{contract_all, contract_fibers, multilinear_form, rank1_sum, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    #[default]
    Random,
    Svd,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "svd" => Ok(Self::Svd),
            other => Err(Error::Validation(format!("unknown init method `{other}` (random|svd)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompConfig {
    pub k: usize,
    /// Number of initializations `L`.
    pub inits: usize,
    /// Power updates per start `N`.
    pub iters: usize,
    pub nu: f64,
    pub tol: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitMethod,
}

impl DecompConfig {
    /// Defaults: `L = max(50, 10k)`, `N = 100`, `tol = 1e-10`, `ν = 0.5`.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            inits: (10 * k).max(50),
            iters: 100,
            nu: 0.5,
            tol: 1e-10,
            seed: 0,
            init: InitMethod::Random,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.inits < self.k {
            return bad(format!("need at least k = {} initializations, got {}", self.k, self.inits));
        }
        if self.iters == 0 {
            return bad("iteration count must be positive".into());
        }
        if !(self.nu > 0.0 && self.nu <= 2.0) {
            return bad(format!("ν = {} outside (0, 2]", self.nu));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tolerance {} must be positive", self.tol));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component<T> {
    pub weight: T,
    pub vector: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub breakdown: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult<T> {
    /// Sorted by `|weight|`, descending.
    pub components: Vec<Component<T>>,
    pub residual_fro: T,
    /// Cluster centers emitted before truncation to `k`.
    pub candidates_kept: usize,
    pub starts: Vec<StartDiagnostics>,
}

impl<T: Scalar> DecompositionResult<T> {
    pub fn weights(&self) -> Vec<T> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn vectors(&self) -> Vec<Vec<T>> {
        self.components.iter().map(|c| c.vector.clone()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> DecompositionResult<U> {
        DecompositionResult {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    weight: U::lit(c.weight.as_f64()),
                    vector: c.vector.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
            residual_fro: U::lit(self.residual_fro.as_f64()),
            candidates_kept: self.candidates_kept,
            starts: self.starts.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerIterate<T> {
    pub vector: Vec<T>,
    pub lambda: T,
    pub iterations: usize,
    pub converged: bool,
}

fn cubic_dim<T: Scalar>(t: &DenseTensor<T>) -> Result<usize> {
    match t.cubical_dim() {
        Some(d) if t.order() == 3 => Ok(d),
        _ => Err(Error::Shape(format!("expected a cubical order-3 tensor, got dims {:?}", t.dims()))),
    }
}

fn symmetric_view<T: Scalar>(t: &DenseTensor<T>) -> Result<std::borrow::Cow<'_, DenseTensor<T>>> {
    if t.asymmetry() > T::lit(1e-10) {
        Ok(std::borrow::Cow::Owned(t.symmetrize()?))
    } else {
        Ok(std::borrow::Cow::Borrowed(t))
    }
}

fn power_loop<T: Scalar>(t: &DenseTensor<T>, u0: &[T], n: usize, tol: T) -> Result<PowerIterate<T>> {
    let floor = t.frobenius_norm() * T::epsilon() * T::lit(1e-3);
    let mut u = u0.to_vec();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < n {
        let v = contract_fibers(t, &u, &u)?;
        let len = norm(&v);
        if !(len > floor) || len == T::zero() {
            return Err(Error::Breakdown);
        }
        let next: Vec<T> = v.iter().map(|&a| a / len).collect();
        let step = next
            .iter()
            .zip(&u)
            .fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b))
            .sqrt();
        u = next;
        iterations += 1;
        if step < tol {
            converged = true;
            break;
        }
    }
    let lambda = contract_all(t, &u)?;
    Ok(PowerIterate {
        vector: u,
        lambda,
        iterations,
        converged,
    })
}

/// Runs `u ← T(I,u,u)/‖T(I,u,u)‖` from `u0` for at most `n` updates,
/// stopping early once successive iterates differ by less than `tol`.
pub fn power_iteration<T: Scalar>(t: &DenseTensor<T>, u0: &[T], n: usize, tol: T) -> Result<PowerIterate<T>> {
    let d = cubic_dim(t)?;
    if u0.len() != d {
        return Err(Error::Shape(format!("start vector of length {} for dimension {d}", u0.len())));
    }
    if (norm(u0) - T::one()).abs() > T::lit(1e-8) {
        return Err(Error::Validation("start vector must have unit norm".into()));
    }
    let sym = symmetric_view(t)?;
    power_loop(&sym, u0, n, tol)
}

/// Greedy clustering of converged candidates: repeatedly refine the
/// candidate with the largest `|T(u,u,u)|`, emit the refined center and
/// discard every candidate within `|⟨u, ũ⟩| > ν/2` of it (the chosen one
/// always goes). Refined centers that land within the same threshold of an
/// earlier center are not emitted again.
pub fn cluster<T: Scalar>(candidates: &[Vec<T>], t: &DenseTensor<T>, n: usize, nu: T, tol: T) -> Result<Vec<Vec<T>>> {
    let d = cubic_dim(t)?;
    if candidates.iter().any(|c| c.len() != d) {
        return Err(Error::Shape("candidate length differs from tensor dimension".into()));
    }
    let sym = symmetric_view(t)?;
    let threshold = nu / T::lit(2.0);
    let mut pool: Vec<(Vec<T>, T)> = candidates
        .iter()
        .map(|c| Ok((c.clone(), contract_all(&sym, c)?.abs())))
        .collect::<Result<_>>()?;
    let mut centers: Vec<Vec<T>> = Vec::new();
    while !pool.is_empty() {
        let mut best = 0;
        for (i, (_, score)) in pool.iter().enumerate() {
            if *score > pool[best].1 {
                best = i;
            }
        }
        let (chosen, _) = pool.swap_remove(best);
        let refined = match power_loop(&sym, &chosen, n, tol) {
            Ok(p) => p.vector,
            Err(Error::Breakdown) => continue,
            Err(e) => return Err(e),
        };
        pool.retain(|(u, _)| dot(u, &refined).abs() <= threshold);
        if centers.iter().all(|c| dot(c, &refined).abs() <= threshold) {
            centers.push(refined);
        }
    }
    Ok(centers)
}

/// Start vector number `start_index`, drawn from an RNG seeded with
/// `seed + start_index`.
pub fn initialize<T: Scalar>(t: &DenseTensor<T>, cfg: &DecompConfig, start_index: usize) -> Result<Vec<T>> {
    let d = cubic_dim(t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(start_index as u64));
    let theta: Vec<T> = linalg::random_unit(&mut rng, d);
    match cfg.init {
        InitMethod::Random => Ok(theta),
        InitMethod::Svd => {
            let slice = DenseTensor::from_fn(vec![d, d], |ij| {
                (0..d).map(|l| t.get(&[ij[0], ij[1], l]) * theta[l]).sum::<T>()
            })?;
            let eig = linalg::symmetric_eigen(&slice)?;
            let top = (0..d)
                .max_by(|&a, &b| eig.values[a].abs().partial_cmp(&eig.values[b].abs()).unwrap())
                .unwrap_or(0);
            let mut v = eig.vectors[top].clone();
            let len = norm(&v);
            v.iter_mut().for_each(|x| *x /= len);
            Ok(v)
        }
    }
}

fn residual<T: Scalar>(t: &DenseTensor<T>, components: &[Component<T>]) -> Result<T> {
    if components.is_empty() {
        return Ok(t.frobenius_norm());
    }
    let w: Vec<T> = components.iter().map(|c| c.weight).collect();
    let v: Vec<Vec<T>> = components.iter().map(|c| c.vector.clone()).collect();
    Ok(t.sub(&rank1_sum(&w, &v, 3)?)?.frobenius_norm())
}

fn finish<T: Scalar>(
    t: &DenseTensor<T>,
    mut components: Vec<Component<T>>,
    candidates_kept: usize,
    starts: Vec<StartDiagnostics>,
    k: usize,
) -> Result<DecompositionResult<T>> {
    for c in &mut components {
        let s = canonicalize_sign(&mut c.vector);
        c.weight *= s;
    }
    components.sort_by(|a, b| b.weight.abs().partial_cmp(&a.weight.abs()).unwrap());
    components.truncate(k);
    let result = DecompositionResult {
        residual_fro: residual(t, &components)?,
        components,
        candidates_kept,
        starts,
    };
    if result.components.len() < k {
        return Err(Error::PartialResult {
            found: result.components.len(),
            requested: k,
            result: Box::new(result.cast()),
        });
    }
    Ok(result)
}

/// Multi-start power iteration followed by clustering; keeps the top `k`
/// centers by `|T(u,u,u)|` with weights `T(u,u,u)`.
pub fn decompose<T: Scalar>(t: &DenseTensor<T>, cfg: &DecompConfig) -> Result<DecompositionResult<T>> {
    cfg.validate()?;
    cubic_dim(t)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("input tensor".into()));
    }
    let scale = t.frobenius_norm();
    if t.asymmetry() > T::lit(1e-10) * scale {
        return Err(Error::Validation(
            "tensor is not symmetric; symmetrize it before decomposing".into(),
        ));
    }
    let tol = T::lit(cfg.tol);
    let runs: Vec<(Option<Vec<T>>, StartDiagnostics)> = (0..cfg.inits)
        .into_par_iter()
        .map(|s| {
            let u0 = initialize(t, cfg, s)?;
            Ok(match power_loop(t, &u0, cfg.iters, tol) {
                Ok(p) => (
                    Some(p.vector),
                    StartDiagnostics {
                        iterations: p.iterations,
                        converged: p.converged,
                        breakdown: false,
                    },
                ),
                Err(Error::Breakdown) => (
                    None,
                    StartDiagnostics {
                        iterations: 0,
                        converged: false,
                        breakdown: true,
                    },
                ),
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<_>>()?;
    let (candidates, starts): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let candidates: Vec<Vec<T>> = candidates.into_iter().flatten().collect();
    let centers = cluster(&candidates, t, cfg.iters, T::lit(cfg.nu), tol)?;
    let kept = centers.len();
    let components = centers
        .into_iter()
        .map(|v| {
            Ok(Component {
                weight: contract_all(t, &v)?,
                vector: v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(t, components, kept, starts, cfg.k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Whitening<T> {
    /// `d × k` matrix `W` with `Wᵀ M₂ W = I_k`.
    pub w: DenseTensor<T>,
    /// `d × k` map `B = U_k D_k^{1/2}` taking whitened vectors back.
    pub unwhiten: DenseTensor<T>,
    /// Top-`k` eigenvalues of `M₂`, descending.
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> Whitening<T> {
    /// `B v`, normalized to unit length.
    pub fn unwhiten_direction(&self, v: &[T]) -> Vec<T> {
        let (d, k) = (self.unwhiten.dims()[0], self.unwhiten.dims()[1]);
        let mut out: Vec<T> = (0..d).map(|i| (0..k).map(|a| self.unwhiten.at2(i, a) * v[a]).sum()).collect();
        let len = norm(&out);
        if len > T::zero() {
            out.iter_mut().for_each(|x| *x /= len);
        }
        out
    }
}

/// Whitening from the top-`k` eigenpairs of a positive semidefinite `M₂`.
pub fn whiten<T: Scalar>(m2: &DenseTensor<T>, k: usize) -> Result<Whitening<T>> {
    if m2.order() != 2 || m2.dims()[0] != m2.dims()[1] {
        return Err(Error::Shape(format!("whitening needs a square matrix, got {:?}", m2.dims())));
    }
    let d = m2.dims()[0];
    if k == 0 || k > d {
        return Err(Error::Validation(format!("whitening rank {k} outside 1..={d}")));
    }
    let eig = linalg::symmetric_eigen(m2)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].partial_cmp(&eig.values[a]).unwrap());
    let top = eig.values[order[0]];
    let threshold = T::lit(1e-12) * top;
    for (pos, &i) in order.iter().take(k).enumerate() {
        if !(top > T::zero()) || eig.values[i] < threshold {
            return Err(Error::RankDeficient {
                index: pos + 1,
                value: eig.values[i].as_f64(),
                threshold: threshold.as_f64(),
            });
        }
    }
    let eigenvalues: Vec<T> = order.iter().take(k).map(|&i| eig.values[i]).collect();
    let w = DenseTensor::from_fn(vec![d, k], |ia| eig.vectors[order[ia[1]]][ia[0]] / eigenvalues[ia[1]].sqrt())?;
    let unwhiten = DenseTensor::from_fn(vec![d, k], |ia| eig.vectors[order[ia[1]]][ia[0]] * eigenvalues[ia[1]].sqrt())?;
    Ok(Whitening { w, unwhiten, eigenvalues })
}

/// Whiten with `M₂`, decompose `T(W, W, W)`, and map the recovered
/// directions back. Weights are re-solved in the original space by least
/// squares against the Gram matrix `(u_i·u_j)³`.
pub fn decompose_whitened<T: Scalar>(
    t: &DenseTensor<T>,
    m2: &DenseTensor<T>,
    cfg: &DecompConfig,
) -> Result<DecompositionResult<T>> {
    cfg.validate()?;
    let d = cubic_dim(t)?;
    if m2.dims() != [d, d] {
        return Err(Error::Shape("second moment and tensor dimensions differ".into()));
    }
    let wh = whiten(m2, cfg.k)?;
    let tw = multilinear_form(t, &wh.w, &wh.w, &wh.w)?;
    let inner = decompose(&tw, cfg)?;
    let vectors: Vec<Vec<T>> = inner.components.iter().map(|c| wh.unwhiten_direction(&c.vector)).collect();
    let k = vectors.len();
    let gram: Vec<T> = (0..k * k)
        .map(|ij| dot(&vectors[ij / k], &vectors[ij % k]).powi(3))
        .collect();
    let rhs: Vec<T> = vectors.iter().map(|v| contract_all(t, v)).collect::<Result<_>>()?;
    let weights = linalg::solve(&gram, &rhs)?;
    let components = weights
        .into_iter()
        .zip(vectors)
        .map(|(weight, vector)| Component { weight, vector })
        .collect();
    finish(t, components, inner.candidates_kept, inner.starts, cfg.k)
}

/// Top-`k` eigenpairs of a symmetric matrix by `|eigenvalue|`, with sign-
/// canonical eigenvectors.
pub fn matrix_decompose<T: Scalar>(m: &DenseTensor<T>, k: usize) -> Result<Vec<Component<T>>> {
    if m.order() != 2 || m.dims()[0] != m.dims()[1] {
        return Err(Error::Shape(format!("expected a square matrix, got {:?}", m.dims())));
    }
    let d = m.dims()[0];
    if k > d {
        return Err(Error::Validation(format!("requested {k} eigenpairs of a {d}×{d} matrix")));
    }
    let eig = linalg::symmetric_eigen(m)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().partial_cmp(&eig.values[a].abs()).unwrap());
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| {
            let mut vector = eig.vectors[i].clone();
            canonicalize_sign(&mut vector);
            Component {
                weight: eig.values[i],
                vector,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn basis(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn two_spike() -> DenseTensor<f64> {
        rank1_sum(&[2.0, 1.0], &[basis(2, 0), basis(2, 1)], 3).unwrap()
    }

    #[test]
    fn fixed_point_in_one_step() {
        let t = rank1_sum(&[1.0], &[basis(3, 0)], 3).unwrap();
        let p = power_iteration(&t, &basis(3, 0), 10, 1e-10).unwrap();
        assert_eq!(p.vector, basis(3, 0));
        assert_eq!(p.lambda, 1.0);
        assert_eq!(p.iterations, 1);
    }

    #[test]
    fn single_update_by_hand() {
        let h = 0.5f64.sqrt();
        let p = power_iteration(&two_spike(), &[h, h], 1, 1e-10).unwrap();
        // T(I,u,u) = (2·½, 1·½) → (1, ½)/‖·‖
        let n = (1.25f64).sqrt();
        assert!((p.vector[0] - 1.0 / n).abs() < 1e-15 && (p.vector[1] - 0.5 / n).abs() < 1e-15);
        assert!((p.vector[0] - 0.8944).abs() < 1e-4 && (p.vector[1] - 0.4472).abs() < 1e-4);
    }

    #[test]
    fn converges_to_dominant_spike() {
        let h = 0.5f64.sqrt();
        let p = power_iteration(&two_spike(), &[h, h], 30, 1e-10).unwrap();
        assert!((p.vector[0] - 1.0).abs() <= 1e-10 && p.vector[1].abs() <= 1e-10);
        assert!((p.lambda - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn zero_tensor_breaks_down() {
        let t = DenseTensor::<f64>::zeros(vec![2, 2, 2]).unwrap();
        assert!(matches!(power_iteration(&t, &basis(2, 0), 5, 1e-10), Err(Error::Breakdown)));
        match decompose(&t, &DecompConfig::new(1)) {
            Err(Error::PartialResult { found: 0, requested: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clustering_traces() {
        let t = rank1_sum(&[1.0], &[basis(2, 0)], 3).unwrap();
        let c = cluster(&[basis(2, 0), basis(2, 0), basis(2, 0)], &t, 10, 0.5, 1e-10).unwrap();
        assert_eq!(c, vec![basis(2, 0)]);

        let c = cluster(&[basis(2, 1), basis(2, 0)], &two_spike(), 10, 0.5, 1e-10).unwrap();
        assert_eq!(c, vec![basis(2, 0), basis(2, 1)]);

        let h = 0.5f64.sqrt();
        let flat = rank1_sum(&[1.0, 1.0], &[basis(2, 0), basis(2, 1)], 3).unwrap();
        let cands = [basis(2, 0), vec![h, h]];
        assert_eq!(cluster(&cands, &flat, 10, 1.9, 1e-10).unwrap().len(), 2);
        assert_eq!(cluster(&cands, &flat, 10, 1.2, 1e-10).unwrap().len(), 1);
        assert!(cluster(&[], &flat, 10, 1.2, 1e-10).unwrap().is_empty());
    }

    #[test]
    fn recovers_orthogonal_basis_spikes() {
        let d = 8;
        let vs: Vec<Vec<f64>> = (0..4).map(|j| basis(d, j)).collect();
        let t = rank1_sum(&[1.0; 4], &vs, 3).unwrap();
        let r = decompose(&t, &DecompConfig::new(4).with_seed(3)).unwrap();
        assert_eq!(r.components.len(), 4);
        for c in &r.components {
            assert!((c.weight - 1.0).abs() <= 1e-10);
            let j = c.vector.iter().position(|v| v.abs() > 0.5).unwrap();
            assert!(c.vector.iter().zip(&vs[j]).all(|(a, b)| (a - b).abs() <= 1e-10));
        }
        assert!(r.residual_fro <= 1e-10);
        assert_eq!(r.starts.len(), 50);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut data = vec![0.0; 8];
        data[1] = 1.0;
        let t = DenseTensor::new(vec![2, 2, 2], data).unwrap();
        assert!(matches!(decompose(&t, &DecompConfig::new(1)), Err(Error::Validation(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = DecompConfig::new(2);
        assert!(c.validate().is_ok());
        c.nu = 2.5;
        assert!(c.validate().is_err());
        let mut c = DecompConfig::new(2);
        c.inits = 1;
        assert!(c.validate().is_err());
        assert!(DecompConfig::new(0).validate().is_err());
    }

    #[test]
    fn initialization_modes() {
        let t = rank1_sum(&[1.0], &[basis(3, 0)], 3).unwrap();
        let cfg = DecompConfig::new(1).with_seed(11);
        assert_eq!(initialize(&t, &cfg, 4).unwrap(), initialize(&t, &cfg, 4).unwrap());
        assert_ne!(initialize(&t, &cfg, 4).unwrap(), initialize(&t, &cfg, 5).unwrap());
        let svd = DecompConfig {
            init: InitMethod::Svd,
            ..cfg
        };
        let v = initialize(&t, &svd, 0).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = DenseTensor::from_fn(vec![4, 4, 4], |_| rng.random_range(-1.0..1.0)).unwrap();
        let sym = raw.symmetrize().unwrap();
        let v: Vec<f64> = initialize(&sym, &svd, 3).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn whitening_identity_and_rank() {
        let wh = whiten(&DenseTensor::<f64>::identity(4), 4).unwrap();
        let wtw = DenseTensor::from_fn(vec![4, 4], |ij| (0..4).map(|r| wh.w.at2(r, ij[0]) * wh.w.at2(r, ij[1])).sum::<f64>()).unwrap();
        assert!(wtw.max_abs_diff(&DenseTensor::identity(4)) < 1e-12);
        let m2 = rank1_sum(&[1.0, 1.0], &[basis(3, 0), basis(3, 1)], 2).unwrap();
        assert!(matches!(whiten(&m2, 3), Err(Error::RankDeficient { index: 3, .. })));
    }

    #[test]
    fn matrix_path() {
        let m = DenseTensor::<f64>::matrix(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let c = matrix_decompose(&m, 2).unwrap();
        assert!((c[0].weight - 3.0).abs() < 1e-14 && (c[0].vector[0] - 1.0).abs() < 1e-14);
        assert!((c[1].weight - 1.0).abs() < 1e-14 && (c[1].vector[1] - 1.0).abs() < 1e-14);
        let z = matrix_decompose(&DenseTensor::<f64>::zeros(vec![3, 3]).unwrap(), 3).unwrap();
        assert!(z.iter().all(|c| c.weight == 0.0));
    }
}
