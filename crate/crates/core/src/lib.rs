//! Higher-order score functions of probabilistic input models, label cross-moments
//! that estimate expected derivatives of the label function, and symmetric CP
//! decomposition of those moments into rank-1 discriminative directions.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod model_spec;
pub mod pipeline;
pub mod poly;
pub mod quadrature;
pub mod scalar;
pub mod score;
pub mod spectral;
pub mod stein;
pub mod tensor;

pub use error::{Error, Result};
pub use model_spec::ModelSpec;
pub use pipeline::{ExperimentConfig, PipelineReport};
pub use scalar::Scalar;
pub use score::{ScoreOrder, MAX_SCORE_ORDER};
pub use spectral::{DecompConfig, InitMethod};
pub use tensor::Permutation;

pub type Tensor = tensor::DenseTensor<f64>;
pub type Model = score::DensityModel<f64>;
pub type Mixture = score::GaussianMixture<f64>;
pub type Poly = poly::PolyFunction<f64>;
pub type Dataset = stein::LabeledDataset<f64>;
pub type Moment = stein::MomentEstimate<f64>;
pub type Decomposition = spectral::DecompositionResult<f64>;
