//! Label cross-moments `E[y ⊗ S_m(x)]`, oracles for `E[∇^(m) G(x)]`, and
//! Monte-Carlo checks of the (parametric) higher-order Stein identities.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::PolyFunction;
use crate::quadrature::{normal_moment, GaussHermite, DEFAULT_NODES, MAX_QUADRATURE_DIM};
use crate::scalar::Scalar;
use crate::score::{parametric_score_gaussian_mean, DensityModel, ScoreOrder};
use crate::tensor::{all_permutations, next_index, tensor_product, DenseTensor};

/// Rows per reduction chunk.
pub const CHUNK: usize = 4096;

/// Inputs `X` (`n × d`) and labels `Y` (`n × p`), both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    d: usize,
    p: usize,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(d: usize, p: usize, x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Validation("dataset needs at least one input and one label column".into()));
        }
        if x.is_empty() || !x.len().is_multiple_of(d) || !y.len().is_multiple_of(p) || x.len() / d != y.len() / p {
            return Err(Error::Shape(format!(
                "{} input values and {} label values do not form rows of widths {d} and {p}",
                x.len(),
                y.len()
            )));
        }
        if let Some(pos) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            let row = if pos < x.len() { pos / d } else { (pos - x.len()) / p };
            return Err(Error::NonFinite(format!("dataset row {row}")));
        }
        Ok(Self { d, p, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn label_dim(&self) -> usize {
        self.p
    }

    pub fn x_row(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y_row(&self, i: usize) -> &[T] {
        &self.y[i * self.p..(i + 1) * self.p]
    }

    pub fn inputs(&self) -> &[T] {
        &self.x
    }

    pub fn labels(&self) -> &[T] {
        &self.y
    }

    /// Labels `G(x_i)` for given inputs.
    pub fn from_function(x: Vec<T>, g: &PolyFunction<T>) -> Result<Self> {
        let d = g.dim();
        if !x.len().is_multiple_of(d) {
            return Err(Error::Shape("inputs do not match the label function dimension".into()));
        }
        let mut y = Vec::with_capacity(x.len() / d * g.output_dim());
        for row in x.chunks(d) {
            y.extend(g.eval(row)?);
        }
        Self::new(d, g.output_dim(), x, y)
    }
}

/// Column names of a headerless numeric table, validated against the
/// `x1..xd[,y1..yp]` convention.
fn split_header(header: &csv::StringRecord, allow_labels: bool) -> Result<(usize, usize)> {
    let mut d = 0;
    let mut p = 0;
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        let expected_x = format!("x{}", d + 1);
        let expected_y = format!("y{}", p + 1);
        if p == 0 && name == expected_x {
            d += 1;
        } else if allow_labels && name == expected_y {
            p += 1;
        } else {
            return Err(Error::Format(format!(
                "unexpected column `{name}` at position {}; expected {}",
                col + 1,
                if p == 0 { expected_x } else { expected_y }
            )));
        }
    }
    if d == 0 {
        return Err(Error::Format("no input columns `x1..xd`".into()));
    }
    Ok((d, p))
}

fn parse_rows<R: Read>(reader: R, allow_labels: bool) -> Result<(usize, usize, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let (d, p) = split_header(&header, allow_labels)?;
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
        if rec.len() != d + p {
            return Err(Error::Format(format!("row {} has {} fields, expected {}", i + 1, rec.len(), d + p)));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", i + 1)))?;
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Validation("table has no rows".into()));
    }
    Ok((d, p, values))
}

impl LabeledDataset<f64> {
    /// CSV with header `x1,…,xd,y1,…,yp`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (d, p, values) = parse_rows(reader, true)?;
        if p == 0 {
            return Err(Error::Format("no label columns `y1..yp`".into()));
        }
        let mut x = Vec::with_capacity(values.len() / (d + p) * d);
        let mut y = Vec::with_capacity(values.len() / (d + p) * p);
        for row in values.chunks(d + p) {
            x.extend_from_slice(&row[..d]);
            y.extend_from_slice(&row[d..]);
        }
        Self::new(d, p, x, y)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.d)
            .map(|i| format!("x{i}"))
            .chain((1..=self.p).map(|j| format!("y{j}")))
            .collect();
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x_row(i)
                .iter()
                .chain(self.y_row(i))
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Points table with header `x1,…,xd`; returns `(d, row-major values)`.
pub fn read_points_csv<R: Read>(reader: R) -> Result<(usize, Vec<f64>)> {
    let (d, _, values) = parse_rows(reader, false)?;
    Ok((d, values))
}

/// Entrywise sample mean with standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate<T> {
    pub value: DenseTensor<T>,
    /// Sample standard deviation over `√n`.
    pub std_error: DenseTensor<T>,
    pub n: usize,
}

impl<T: Scalar> MomentEstimate<T> {
    pub fn max_std_error(&self) -> T {
        self.std_error.max_abs()
    }

    pub fn mean_std_error(&self) -> T {
        let s: T = self.std_error.data().iter().copied().sum();
        s / T::from_usize_lossy(self.std_error.len())
    }
}

struct Accumulator<T> {
    count: usize,
    mean: Vec<T>,
    m2: Vec<T>,
}

impl<T: Scalar> Accumulator<T> {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![T::zero(); len],
            m2: vec![T::zero(); len],
        }
    }

    fn push(&mut self, v: &[T]) {
        self.count += 1;
        let n = T::from_usize_lossy(self.count);
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(v) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let (na, nb) = (T::from_usize_lossy(a.count), T::from_usize_lossy(b.count));
        let n = na + nb;
        let mut out = Self::new(a.mean.len());
        out.count = a.count + b.count;
        for i in 0..a.mean.len() {
            let delta = b.mean[i] - a.mean[i];
            out.mean[i] = a.mean[i] + delta * nb / n;
            out.m2[i] = a.m2[i] + b.m2[i] + delta * delta * na * nb / n;
        }
        out
    }
}

fn tree_reduce<T: Scalar>(mut parts: Vec<Accumulator<T>>) -> Accumulator<T> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(Accumulator::merge(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Mean and standard error of `f(i)` over `i in 0..n`. Rows are processed
/// in fixed chunks merged by a fixed pairwise tree, so the result does not
/// depend on the number of worker threads.
pub fn empirical_mean<T, F>(n: usize, dims: &[usize], f: F) -> Result<MomentEstimate<T>>
where
    T: Scalar,
    F: Fn(usize) -> Result<DenseTensor<T>> + Sync,
{
    if n == 0 {
        return Err(Error::Validation("empirical mean of zero samples".into()));
    }
    let len: usize = dims.iter().product();
    let chunks: Vec<Accumulator<T>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(len);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let v = f(i).map_err(|e| e.at_row(i))?;
                if v.dims() != dims {
                    return Err(Error::Shape(format!("row {i} produced dims {:?}, expected {dims:?}", v.dims())));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("moment contribution of row {i}")));
                }
                acc.push(v.data());
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let acc = tree_reduce(chunks);
    let nf = T::from_usize_lossy(n);
    let se: Vec<T> = acc
        .m2
        .iter()
        .map(|&s| {
            if n < 2 {
                T::zero()
            } else {
                (s.max(T::zero()) / (nf - T::one()) / nf).sqrt()
            }
        })
        .collect();
    Ok(MomentEstimate {
        value: DenseTensor::new(dims.to_vec(), acc.mean)?,
        std_error: DenseTensor::new(dims.to_vec(), se)?,
        n,
    })
}

fn label_tensor<T: Scalar>(y: &[T]) -> DenseTensor<T> {
    if y.len() == 1 {
        DenseTensor::scalar(y[0])
    } else {
        DenseTensor::from_parts(vec![y.len()], y.to_vec())
    }
}

fn moment_dims(p: usize, d: usize, m: usize) -> Vec<usize> {
    let mut dims = if p == 1 { vec![] } else { vec![p] };
    dims.extend(std::iter::repeat_n(d, m));
    dims
}

/// `(1/N) Σ_i y_i ⊗ S_m(x_i)`; scalar labels add no mode, vector labels
/// add one leading mode.
pub fn cross_moment<T: Scalar>(
    data: &LabeledDataset<T>,
    model: &DensityModel<T>,
    m: ScoreOrder,
) -> Result<MomentEstimate<T>> {
    let d = model.dim();
    if data.input_dim() != d {
        return Err(Error::Shape(format!(
            "dataset has {} input columns, model dimension is {d}",
            data.input_dim()
        )));
    }
    let dims = moment_dims(data.label_dim(), d, m.get());
    empirical_mean(data.len(), &dims, |i| {
        let s = model.score(data.x_row(i), m)?;
        tensor_product(&label_tensor(data.y_row(i)), &s)
    })
}

/// How an expectation under the input model is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMethod {
    /// Closed-form Gaussian moments (Gaussian and diagonal GMM models).
    Analytic,
    /// Tensor-product Gauss–Hermite, `d ≤ 3`.
    Quadrature,
    /// Sample mean from the model's sampler.
    MonteCarlo { samples: usize, seed: u64 },
}

/// `E[x^e]` for a monomial under the model, when closed-form.
fn monomial_expectation<T: Scalar>(model: &DensityModel<T>, exponents: &[u32]) -> Option<f64> {
    match model {
        DensityModel::StandardGaussian { .. } => Some(
            exponents
                .iter()
                .map(|&e| normal_moment(e, 0.0, 1.0))
                .product(),
        ),
        DensityModel::GaussianMixture(g) => Some(
            (0..g.components())
                .map(|h| {
                    g.weights()[h].as_f64()
                        * exponents
                            .iter()
                            .enumerate()
                            .map(|(i, &e)| normal_moment(e, g.means()[h][i].as_f64(), g.variances()[h][i].as_f64().sqrt()))
                            .product::<f64>()
                })
                .sum(),
        ),
        _ => None,
    }
}

/// Weighted nodes of a product Gauss–Hermite rule adapted to the model.
pub fn quadrature_points<T: Scalar>(model: &DensityModel<T>, nodes: usize) -> Result<Vec<(T, Vec<T>)>> {
    let d = model.dim();
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::Validation(format!(
            "quadrature limited to d ≤ {MAX_QUADRATURE_DIM}, model has d = {d}"
        )));
    }
    let rule = GaussHermite::new(nodes)?;
    let lift = |pts: Vec<(f64, Vec<f64>)>, scale: f64| -> Vec<(T, Vec<T>)> {
        pts.into_iter()
            .map(|(w, x)| (T::lit(w * scale), x.into_iter().map(T::lit).collect()))
            .collect()
    };
    match model {
        DensityModel::StandardGaussian { .. } => Ok(lift(rule.product_rule(&vec![0.0; d], &vec![1.0; d])?, 1.0)),
        DensityModel::GaussianMixture(g) => {
            let mut out = Vec::new();
            for h in 0..g.components() {
                let mean: Vec<f64> = g.means()[h].iter().map(|v| v.as_f64()).collect();
                let sd: Vec<f64> = g.variances()[h].iter().map(|v| v.as_f64().sqrt()).collect();
                out.extend(lift(rule.product_rule(&mean, &sd)?, g.weights()[h].as_f64()));
            }
            Ok(out)
        }
        DensityModel::Affine { base, map } => Ok(quadrature_points(base, nodes)?
            .into_iter()
            .map(|(w, x)| (w, map.apply(&x)))
            .collect()),
        DensityModel::ExpFamily(_) => Err(Error::Validation(
            "quadrature needs a Gaussian-based model; exp_family has no quadrature rule".into(),
        )),
    }
}

/// `E[f(x)]` by quadrature under the model.
pub fn quadrature_expectation<T, F>(model: &DensityModel<T>, f: F) -> Result<DenseTensor<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<DenseTensor<T>>,
{
    let pts = quadrature_points(model, DEFAULT_NODES)?;
    let mut acc: Option<DenseTensor<T>> = None;
    let mut data: Vec<T> = Vec::new();
    for (w, x) in &pts {
        let v = f(x)?;
        match &acc {
            None => {
                data = v.data().iter().map(|&a| a * *w).collect();
                acc = Some(v);
            }
            Some(first) => {
                if first.dims() != v.dims() {
                    return Err(Error::Shape("integrand changed shape".into()));
                }
                data.iter_mut().zip(v.data()).for_each(|(a, &b)| *a += *w * b);
            }
        }
    }
    let first = acc.ok_or_else(|| Error::Validation("empty quadrature rule".into()))?;
    DenseTensor::new(first.dims().to_vec(), data)
}

/// `E[∇^(m) G(x)]` under the model, of order `label_order + m`.
pub fn expected_derivative<T: Scalar>(
    g: &PolyFunction<T>,
    model: &DensityModel<T>,
    m: ScoreOrder,
    method: ExpectationMethod,
) -> Result<DenseTensor<T>> {
    let d = model.dim();
    if g.dim() != d {
        return Err(Error::Shape(format!("G has {} inputs, model dimension is {d}", g.dim())));
    }
    let m = m.get();
    match method {
        ExpectationMethod::Analytic => {
            if monomial_expectation(model, &vec![0; d]).is_none() {
                return Err(Error::Validation(format!(
                    "analytic expectations need a gaussian or gmm model, got {}",
                    model.variant_name()
                )));
            }
            let dims = g.derivative_dims(m);
            let block = d.pow(m as u32);
            let mut data = vec![T::zero(); g.output_dim() * block];
            let mut idx = vec![0usize; m];
            let mut flat = 0;
            loop {
                for t in g.partial(&idx).terms() {
                    let e = monomial_expectation(model, &t.exponents).unwrap_or(0.0);
                    data[t.output * block + flat] += t.coef * T::lit(e);
                }
                flat += 1;
                if !next_index(&mut idx, &vec![d; m]) {
                    break;
                }
            }
            DenseTensor::new(dims, data)
        }
        ExpectationMethod::Quadrature => quadrature_expectation(model, |x| g.derivative(x, m)),
        ExpectationMethod::MonteCarlo { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = model.sample(&mut rng, samples)?;
            let dims = g.derivative_dims(m);
            Ok(empirical_mean(samples, &dims, |i| g.derivative(&xs[i * d..(i + 1) * d], m))?.value)
        }
    }
}

/// Best available deterministic oracle for the model.
pub fn oracle_method<T: Scalar>(model: &DensityModel<T>) -> Result<ExpectationMethod> {
    if monomial_expectation(model, &vec![0; model.dim()]).is_some() {
        Ok(ExpectationMethod::Analytic)
    } else if model.dim() <= MAX_QUADRATURE_DIM && !matches!(model, DensityModel::ExpFamily(_)) {
        Ok(ExpectationMethod::Quadrature)
    } else {
        Err(Error::Validation(format!(
            "no deterministic oracle for a {} model of dimension {}",
            model.variant_name(),
            model.dim()
        )))
    }
}

/// Comparison of a Monte-Carlo moment with its oracle.
#[derive(Clone, Debug)]
pub struct SteinReport<T> {
    pub estimate: MomentEstimate<T>,
    pub oracle: DenseTensor<T>,
    pub max_abs_gap: T,
    /// Worst `|estimate − oracle| / std_error` over entries.
    pub max_gap_in_std_errors: T,
}

impl<T: Scalar> SteinReport<T> {
    pub fn compare(estimate: MomentEstimate<T>, oracle: DenseTensor<T>) -> Result<Self> {
        if estimate.value.dims() != oracle.dims() {
            return Err(Error::Shape(format!(
                "estimate dims {:?} differ from oracle dims {:?}",
                estimate.value.dims(),
                oracle.dims()
            )));
        }
        let scale = oracle.max_abs().max(T::one());
        let mut max_abs_gap = T::zero();
        let mut max_se = T::zero();
        for ((&a, &b), &se) in estimate.value.data().iter().zip(oracle.data()).zip(estimate.std_error.data()) {
            let gap = (a - b).abs();
            max_abs_gap = max_abs_gap.max(gap);
            let z = if se > T::zero() {
                gap / se
            } else if gap <= T::lit(1e-12) * scale {
                T::zero()
            } else {
                T::infinity()
            };
            max_se = max_se.max(z);
        }
        Ok(Self {
            estimate,
            oracle,
            max_abs_gap,
            max_gap_in_std_errors: max_se,
        })
    }

    pub fn within(&self, std_errors: T) -> bool {
        self.max_gap_in_std_errors <= std_errors
    }
}

/// Draws `n_samples` points, forms `E[G(x) ⊗ S_m(x)]` and compares it with
/// `E[∇^(m) G(x)]` from the analytic or quadrature oracle.
pub fn stein_residual<T: Scalar>(
    model: &DensityModel<T>,
    g: &PolyFunction<T>,
    m: ScoreOrder,
    n_samples: usize,
    seed: u64,
) -> Result<SteinReport<T>> {
    let oracle = expected_derivative(g, model, m, oracle_method(model)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = model.sample(&mut rng, n_samples)?;
    let data = LabeledDataset::from_function(xs, g)?;
    SteinReport::compare(cross_moment(&data, model, m)?, oracle)
}

/// Parametric identity for `N(μ₀, I)` with `G(x; μ) = G₀(x − μ)`:
/// compares `E[G ⊗ S_m(x; μ₀)]` against `E[∇_μ^(m) G] = (−1)^m E[∇^(m) G₀(z)]`.
/// Draws are `x = μ₀ + z` from the same stream as a standard Gaussian run.
pub fn parametric_stein_residual<T: Scalar>(
    mu0: &[T],
    g0: &PolyFunction<T>,
    m: ScoreOrder,
    n_samples: usize,
    seed: u64,
) -> Result<SteinReport<T>> {
    let d = mu0.len();
    let base = DensityModel::standard_gaussian(d)?;
    let sign = if m.get().is_multiple_of(2) { T::one() } else { -T::one() };
    let oracle = expected_derivative(g0, &base, m, ExpectationMethod::Analytic)?.scale(sign);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs = base.sample(&mut rng, n_samples)?;
    let dims = moment_dims(g0.output_dim(), d, m.get());
    let estimate = empirical_mean(n_samples, &dims, |i| {
        let z = &zs[i * d..(i + 1) * d];
        let x: Vec<T> = z.iter().zip(mu0).map(|(&a, &b)| a + b).collect();
        let y = g0.eval(z)?;
        let s = parametric_score_gaussian_mean(&x, mu0, m)?;
        tensor_product(&label_tensor(&y), &s)
    })?;
    SteinReport::compare(estimate, oracle)
}

/// Order-`2m` tensor with entry `(i_1..i_m, j_1..j_m) = Σ_σ Π_a δ(i_a, j_σ(a))`.
pub fn symmetrized_delta<T: Scalar>(d: usize, m: usize) -> Result<DenseTensor<T>> {
    let perms = all_permutations(m);
    DenseTensor::from_fn(vec![d; 2 * m], |idx| {
        let (i, j) = idx.split_at(m);
        let hits = perms
            .iter()
            .filter(|s| (0..m).all(|a| i[a] == j[s[a]]))
            .count();
        T::from_usize_lossy(hits)
    })
}
