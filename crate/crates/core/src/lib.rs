//! Numerical laboratory for the M-term nonlinear approximation error of
//! rotated Gaussian vectors: is the Karhunen–Loève basis optimal for keeping
//! the `M` largest coefficients?
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below name the `f64` instantiations used by the CLI.

pub mod error;
pub mod inequality;
pub mod model;
pub mod orthogonal;
mod quadrature;
pub mod reconstruction;
pub mod rng;
mod scalar;
pub mod search;

pub use error::{Error, Result};
pub use model::{apply_map, sample_source, SampleBatch, VarianceSpec};
pub use orthogonal::{
    compose_givens, haar_random, induced_variances, signed_permutations, squared_entry_matrix,
    to_givens, InducedVariances, LinearMap, OrthogonalMatrix, RotationParams,
};
pub use reconstruction::{
    estimate_error, expected_max_quadrature, independent_error_quadrature, m_term_error_sample,
    paired_gap, phi_m, EstimateWithCI, QuadratureResult,
};
pub use rng::SeedSpec;
pub use scalar::Scalar;

pub type VarianceSpec64 = VarianceSpec<f64>;
pub type SampleBatch64 = SampleBatch<f64>;
pub type LinearMap64 = LinearMap<f64>;
pub type OrthogonalMatrix64 = OrthogonalMatrix<f64>;
pub type RotationParams64 = RotationParams<f64>;
pub type InducedVariances64 = InducedVariances<f64>;

pub type VarianceSpec32 = VarianceSpec<f32>;
pub type LinearMap32 = LinearMap<f32>;
pub type OrthogonalMatrix32 = OrthogonalMatrix<f32>;
