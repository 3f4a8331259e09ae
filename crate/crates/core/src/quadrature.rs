//! Gauss–Hermite rules for expectations under Gaussian measures.

use std::num::NonZeroUsize;

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 40;
/// Largest dimension for which tensor-product rules are used.
pub const MAX_QUADRATURE_DIM: usize = 3;

/// Nodes and weights for `E[f(z)]`, `z ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Physicists' rule from `gauss-quad`, rescaled to the standard normal.
    /// Exact for polynomials of degree `2n − 1`.
    pub fn new(n: usize) -> Result<Self> {
        let n = NonZeroUsize::new(n).ok_or_else(|| Error::Validation("quadrature needs at least one node".into()))?;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = gauss_quad::hermite::GaussHermite::new(n)
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Tensor-product nodes in `d` dimensions for `N(mean, diag(sd²))`,
    /// yielded as `(weight, point)`.
    pub fn product_rule(&self, mean: &[f64], sd: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let d = mean.len();
        if d > MAX_QUADRATURE_DIM {
            return Err(Error::Unsupported(format!(
                "tensor-product quadrature limited to d ≤ {MAX_QUADRATURE_DIM}, got {d}"
            )));
        }
        let n = self.nodes.len();
        let mut out = Vec::with_capacity(n.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            let mut w = 1.0;
            let mut point = Vec::with_capacity(d);
            for a in 0..d {
                w *= self.weights[idx[a]];
                point.push(mean[a] + sd[a] * self.nodes[idx[a]]);
            }
            out.push((w, point));
            if d == 0 || !crate::tensor::next_index(&mut idx, &vec![n; d]) {
                break;
            }
        }
        Ok(out)
    }
}

/// `E[z^k]` for `z ~ N(0, 1)`: `(k − 1)!!` for even `k`, zero for odd.
pub fn standard_normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).map(|j| j as f64).product()
}

/// `E[x^k]` for `x ~ N(mu, sd²)`.
pub fn normal_moment(k: u32, mu: f64, sd: f64) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for j in 0..=k {
        if j > 0 {
            binom = binom * (k - j + 1) as f64 / j as f64;
        }
        total += binom * mu.powi((k - j) as i32) * sd.powi(j as i32) * standard_normal_moment(j);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_moments_exactly() {
        let q = GaussHermite::new(DEFAULT_NODES).unwrap();
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for k in 0..=20u32 {
            let got = q.expect(|x| x.powi(k as i32));
            let want = standard_normal_moment(k);
            let scale = standard_normal_moment(k + k % 2);
            assert!((got - want).abs() <= 1e-12 * scale, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn small_rule_nodes() {
        let q = GaussHermite::new(2).unwrap();
        assert!((q.nodes()[1] - 1.0).abs() < 1e-14);
        assert!((q.weights()[0] - 0.5).abs() < 1e-14);
        let q3 = GaussHermite::new(3).unwrap();
        assert!((q3.nodes()[2] - 3f64.sqrt()).abs() < 1e-14);
        assert!((q3.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_moments() {
        assert_eq!(normal_moment(2, 1.0, 2.0), 5.0);
        assert_eq!(normal_moment(3, 1.0, 1.0), 4.0);
        let q = GaussHermite::new(DEFAULT_NODES).unwrap();
        let got = q.expect(|z| (0.5 + 1.5 * z).powi(5));
        assert!((got - normal_moment(5, 0.5, 1.5)).abs() < 1e-10);
    }

    #[test]
    fn product_rule_caps_dimension() {
        let q = GaussHermite::new(4).unwrap();
        assert_eq!(q.product_rule(&[0.0; 3], &[1.0; 3]).unwrap().len(), 64);
        assert!(q.product_rule(&[0.0; 4], &[1.0; 4]).is_err());
    }
}
