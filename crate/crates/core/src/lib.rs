//! Support-volume simulation for triangle meshes and preference alignment on
//! the resulting scores.
//!
//! - [`mesh`]: mesh type, STL/OBJ ingestion, PLY export, validation, volume and the print frame
//! - [`bvh`]: bounding volume hierarchy and first-hit ray queries
//! - [`support`]: risky-face classification, tetrahedral column volumes, NSV and a voxel cross-check
//! - [`metrics`]: dataset NSV aggregates and the win/tie consistency score
//! - [`preference`]: pair construction, offsets, DPO/ODPO losses and the toy alignment run
//! - [`records`]: versioned CSV formats shared with the command line

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvh;
pub mod mesh;
pub mod metrics;
pub mod preference;
pub mod records;
pub mod shapes;
pub mod support;
