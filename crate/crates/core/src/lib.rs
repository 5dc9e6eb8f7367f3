//! Anisotropic heat-kernel convolutional networks for dense correspondence
//! between triangle meshes.
//!
//! The numerical core is generic over the [`Real`] scalar; the aliases at the
//! crate root fix it to `f64`, which is what the pipeline and all file formats
//! use.

pub mod binio;
pub mod correspondence;
pub mod error;
pub mod laplacian;
pub mod linalg;
pub mod mesh;
pub mod nn;
pub mod patch;
pub mod scalar;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = mesh::TriMesh<f64>;
pub type Frame = mesh::TriangleFrame<f64>;
pub type Operator = laplacian::AnisoOperator<f64>;
pub type Basis = spectral::SpectralBasis<f64>;
pub type HeatKernels = spectral::HeatKernelSet<f64>;
pub type PatchOperators = patch::PatchOperatorSet<f64>;
pub type Network = nn::Network<f64>;
pub type PointMap = correspondence::PointMap<f64>;
