//! Reference computations written independently of the library internals:
//! monomial calculus, closed-form Gaussian moments, hand-coded densities and
//! finite differences.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scorefeat::poly::{PolySpec, TermSpec};

#[derive(Clone, Debug)]
pub struct Mono {
    pub output: usize,
    pub coef: f64,
    pub exps: Vec<u32>,
}

pub fn spec_of(d: usize, p: usize, monos: &[Mono]) -> PolySpec {
    PolySpec {
        dim: d,
        output_dim: p,
        terms: monos
            .iter()
            .map(|t| TermSpec {
                output: t.output,
                coef: t.coef,
                exponents: t.exps.clone(),
            })
            .collect(),
    }
}

/// `count` random scalar polynomials of total degree ≤ `max_deg`, stacked
/// as outputs `0..count`.
pub fn random_polys(rng: &mut ChaCha8Rng, d: usize, count: usize, terms: usize, max_deg: u32) -> Vec<Mono> {
    let mut out = Vec::new();
    for o in 0..count {
        for _ in 0..terms {
            let deg = rng.random_range(0..=max_deg);
            let mut exps = vec![0u32; d];
            for _ in 0..deg {
                exps[rng.random_range(0..d)] += 1;
            }
            out.push(Mono {
                output: o,
                coef: rng.random_range(-1.0..1.0),
                exps,
            });
        }
    }
    out
}

pub fn eval_poly(monos: &[Mono], p: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for t in monos {
        y[t.output] += t.coef * t.exps.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product::<f64>();
    }
    y
}

fn differentiate(t: &Mono, var: usize) -> Option<Mono> {
    let e = t.exps[var];
    if e == 0 {
        return None;
    }
    let mut exps = t.exps.clone();
    exps[var] -= 1;
    Some(Mono {
        output: t.output,
        coef: t.coef * e as f64,
        exps,
    })
}

fn double_factorial_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).map(f64::from).product()
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// `E[(μ + σ z)^e]`, `z` standard normal.
pub fn normal_power(e: u32, mu: f64, sd: f64) -> f64 {
    (0..=e)
        .map(|k| binom(e, k) * mu.powi((e - k) as i32) * sd.powi(k as i32) * double_factorial_moment(k))
        .sum()
}

/// Diagonal-covariance Gaussian mixture written out by hand.
#[derive(Clone, Debug)]
pub struct RefMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl RefMixture {
    pub fn standard(d: usize) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![vec![0.0; d]],
            vars: vec![vec![1.0; d]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let tau = std::f64::consts::TAU;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.vars)
            .map(|((&w, mu), var)| {
                w * x
                    .iter()
                    .zip(mu)
                    .zip(var)
                    .map(|((&xi, &m), &v)| (-(xi - m).powi(2) / (2.0 * v)).exp() / (tau * v).sqrt())
                    .product::<f64>()
            })
            .sum()
    }

    pub fn expect_monomial(&self, exps: &[u32]) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.vars)
            .map(|((&w, mu), var)| {
                w * exps
                    .iter()
                    .zip(mu)
                    .zip(var)
                    .map(|((&e, &m), &v)| normal_power(e, m, v.sqrt()))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn model_json(&self) -> String {
        serde_json::json!({
            "type": "gmm",
            "weights": self.weights,
            "means": self.means,
            "variances": self.vars,
        })
        .to_string()
    }
}

/// Row-major `[p, d, …, d]` (the `p` mode dropped when `p == 1`) tensor
/// `E[∇^(m) G]` under the mixture.
pub fn expected_derivative(monos: &[Mono], p: usize, mix: &RefMixture, m: usize) -> Vec<f64> {
    let d = mix.dim();
    let block = d.pow(m as u32);
    let mut out = vec![0.0; p * block];
    for flat in 0..block {
        let idx: Vec<usize> = (0..m).map(|a| flat / d.pow((m - 1 - a) as u32) % d).collect();
        for t in monos {
            let mut cur = Some(t.clone());
            for &v in &idx {
                cur = cur.and_then(|c| differentiate(&c, v));
            }
            if let Some(c) = cur {
                out[c.output * block + flat] += c.coef * mix.expect_monomial(&c.exps);
            }
        }
    }
    out
}

/// Fourth-order central difference of `f` along coordinate `i`.
fn central<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], i: usize, h: f64) -> f64 {
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[i] += s * h;
        f(&y)
    };
    (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
}

fn nested<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], idx: &[usize], h: f64) -> f64 {
    match idx.split_first() {
        None => f(x),
        Some((&i, rest)) => central(&|y: &[f64]| nested(f, y, rest, h), x, i, h),
    }
}

/// `(−1)^m ∇^(m) p / p` by nested finite differences of the density.
pub fn score_by_differences(mix: &RefMixture, x: &[f64], m: usize, h: f64) -> Vec<f64> {
    let d = mix.dim();
    let p = mix.density(x);
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let f = |y: &[f64]| mix.density(y);
    (0..d.pow(m as u32))
        .map(|flat| {
            let idx: Vec<usize> = (0..m).map(|a| flat / d.pow((m - 1 - a) as u32) % d).collect();
            sign * nested(&f, x, &idx, h) / p
        })
        .collect()
}

/// Gram–Schmidt on Gaussian draws.
pub fn orthonormal(seed: u64, d: usize, k: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for u in &out {
            let c: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    out
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

/// `Σ_j w_j u_j^{⊗order}`, row-major.
pub fn rank_one_sum(weights: &[f64], vectors: &[Vec<f64>], order: usize) -> Vec<f64> {
    let d = vectors[0].len();
    (0..d.pow(order as u32))
        .map(|flat| {
            weights
                .iter()
                .zip(vectors)
                .map(|(w, u)| w * (0..order).map(|a| u[flat / d.pow((order - 1 - a) as u32) % d]).product::<f64>())
                .sum()
        })
        .collect()
}

/// Sign of the largest-magnitude entry (first one on ties), the sign a
/// canonical odd-order component folds into its weight.
pub fn canonical_sign(u: &[f64]) -> f64 {
    let mut best = 0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `min(‖a − b‖, ‖a + b‖)`.
pub fn sign_matched_distance(a: &[f64], b: &[f64]) -> f64 {
    let dist = |s: f64| a.iter().zip(b).map(|(x, y)| (x - s * y).powi(2)).sum::<f64>().sqrt();
    dist(1.0).min(dist(-1.0))
}

/// For each planted vector, the best sign-matched distance to any estimate.
pub fn best_matches(estimates: &[Vec<f64>], planted: &[Vec<f64>]) -> Vec<(usize, f64)> {
    planted
        .iter()
        .map(|u| {
            estimates
                .iter()
                .enumerate()
                .map(|(i, e)| (i, sign_matched_distance(e, u)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((usize::MAX, 2.0))
        })
        .collect()
}
