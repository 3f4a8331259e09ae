//! JSON descriptions of input models.
//!
//! ```json
//! {"type": "gaussian", "dim": 3}
//! {"type": "gmm", "weights": [0.5, 0.5], "means": [[-2, 0], [2, 0]]}
//! {"type": "gmm", "weights": [1.0], "means": [[0, 0]], "variances": [[1.0, 2.0]]}
//! {"type": "exp_family", "dim": 1, "energy": [{"coef": 0.5, "exponents": [2]}]}
//! {"type": "affine", "base": {"type": "gaussian", "dim": 2},
//!  "matrix": [[2, 0], [0, 1]], "shift": [0, 1]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{PolyFunction, PolySpec, TermSpec};
use crate::scalar::Scalar;
use crate::score::{AffineMap, DensityModel, ExpFamily, GaussianMixture};
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gaussian {
        dim: usize,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        /// Per-component diagonal variances; identity covariance if absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variances: Option<Vec<Vec<f64>>>,
    },
    ExpFamily {
        dim: usize,
        energy: Vec<TermSpec>,
    },
    Affine {
        base: Box<ModelSpec>,
        matrix: Vec<Vec<f64>>,
        shift: Vec<f64>,
    },
}

fn lift<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

impl ModelSpec {
    pub fn build<T: Scalar>(&self) -> Result<DensityModel<T>> {
        match self {
            Self::Gaussian { dim } => DensityModel::standard_gaussian(*dim),
            Self::Gmm {
                weights,
                means,
                variances,
            } => {
                let w = lift(weights);
                let mu = means.iter().map(|m| lift(m)).collect();
                let g = match variances {
                    None => GaussianMixture::isotropic(w, mu)?,
                    Some(v) => GaussianMixture::diagonal(w, mu, v.iter().map(|r| lift(r)).collect())?,
                };
                Ok(DensityModel::GaussianMixture(g))
            }
            Self::ExpFamily { dim, energy } => {
                let spec = PolySpec {
                    dim: *dim,
                    output_dim: 1,
                    terms: energy.clone(),
                };
                Ok(DensityModel::ExpFamily(ExpFamily::new(PolyFunction::from_spec(&spec)?)?))
            }
            Self::Affine { base, matrix, shift } => {
                let rows: Vec<Vec<T>> = matrix.iter().map(|r| lift(r)).collect();
                let a = DenseTensor::from_rows(&rows)?;
                DensityModel::affine(base.build()?, AffineMap::new(a, lift(shift))?)
            }
        }
    }

    pub fn from_model<T: Scalar>(model: &DensityModel<T>) -> Self {
        let down = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        match model {
            DensityModel::StandardGaussian { dim } => Self::Gaussian { dim: *dim },
            DensityModel::GaussianMixture(g) => Self::Gmm {
                weights: down(g.weights()),
                means: g.means().iter().map(|m| down(m)).collect(),
                variances: (!g.has_identity_covariance()).then(|| g.variances().iter().map(|v| down(v)).collect()),
            },
            DensityModel::ExpFamily(e) => Self::ExpFamily {
                dim: e.dim(),
                energy: e.energy().to_spec().terms,
            },
            DensityModel::Affine { base, map } => {
                let d = map.dim();
                Self::Affine {
                    base: Box::new(Self::from_model(base)),
                    matrix: (0..d).map(|i| (0..d).map(|j| map.matrix().at2(i, j).as_f64()).collect()).collect(),
                    shift: down(map.shift()),
                }
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
