//! Progressive, region-constrained editing of voxel radiance fields.
//!
//! An edit step takes a source field and a pair of prompts, derives per-view
//! editable masks from a 3D region prompt, and optimizes a copy of the field
//! with score distillation guided by overlapped-semantic-component
//! suppression, while consistency and initialization constraints keep the
//! edit local. Chains of such steps build up complex scenes one object at a
//! time.

pub mod constraints;
pub mod editor;
pub mod error;
pub mod field;
pub mod guidance;
pub mod io;
pub mod map;
pub mod metrics;
pub mod region;
pub mod render;
pub mod scene;

pub use error::{Error, Result};

/// World-space 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix, used for box rotations and camera frames.
pub type Mat3 = nalgebra::Matrix3<f64>;
