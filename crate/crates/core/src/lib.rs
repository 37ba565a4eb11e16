//! Physical primitive decomposition of composite rigid objects.
//!
//! An object is a stack of up to eight cuboid primitives, each carrying a
//! density slot. This crate generates such towers, simulates them under
//! four canonical pushes, recovers their geometry from voxel grids, and
//! infers per-primitive densities by sampling candidates, simulating them
//! and keeping the ones whose trajectories match an observation.

pub mod error;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rigidbody;
pub mod rng;
pub mod shapefit;
pub mod towergen;
pub mod trajextract;
pub mod voxel;

pub use error::{Error, Result};
