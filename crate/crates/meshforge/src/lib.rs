//! Geometry processing toolkit for implicit-field asset pipelines.
//!
//! The crate covers the non-neural half of a 3D asset pipeline:
//!
//! - [`field`]: scalar-field query contract plus analytic (sphere, torus,
//!   CSG) and grid-backed implementations,
//! - [`isosurface`]: sparse coarse-to-fine marching cubes with watertight,
//!   manifold output and per-query accounting,
//! - [`codec`]: rule-based mesh <-> token-sequence codec (vertex
//!   quantization, block indexing, patchified fan aggregation),
//! - [`meshkit`]: OBJ/PLY I/O, smallest-enclosing-sphere normalization,
//!   mesh statistics and the dataset filter gate,
//! - [`watertight`]: multi-view depth rendering, per-view morphological
//!   closing and TSDF fusion into a watertight envelope,
//! - [`sampling`]: SPACE / SURFACE / NEAR-SURFACE training point groups,
//! - [`pipeline`]: resumable batch orchestration with a JSON manifest.

pub mod codec;
pub mod field;
pub mod isosurface;
pub mod mesh;
pub mod meshkit;
pub mod pipeline;
pub mod sampling;
pub mod watertight;

pub use field::{Aabb, GridField, ScalarField, SphereField, TorusField};
pub use isosurface::{extract, ExtractionConfig, ExtractionStats};
pub use mesh::TriangleMesh;
