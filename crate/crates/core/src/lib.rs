//! Semantic Gaussian scene memory.
//!
//! A world-frame lattice of semantic Gaussians is refined frame by frame from
//! posed geometric cues. Position residuals are pushed onto local surface
//! planes, and updates are gated by the entropy of Monte Carlo semantic
//! proposals. Final memories are splatted into labeled voxel grids and scored
//! against procedurally generated ground truth.

pub mod camera;
pub mod classes;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod grm;
pub mod io;
pub mod knn;
pub mod memory;
pub mod metrics;
pub mod quat;
pub mod rng;
pub mod scene;
pub mod splat;
pub mod sus;

pub use camera::{CameraFrame, GeometricCues, Intrinsics};
pub use classes::{SemanticClass, NUM_CLASSES, NUM_SEMANTIC};
pub use config::{FusionStrategy, RefinementConfig, RunConfig, UpdateMode};
pub use error::{Error, Result};
pub use gaussian::{GaussianDelta, SemanticGaussian};
pub use memory::{GaussianMemory, RunReport};
pub use quat::Quat;
pub use scene::SyntheticScene;
pub use splat::{GridSpec, VoxelGrid};
