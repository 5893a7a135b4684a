//! Risky-face classification and support-volume estimation.
//!
//! A face is safe when `n · d + sin(alpha_max) >= 0`. Every risky face emits a
//! column towards the bed: each of its vertices drops a ray along `-z`, which
//! ends at the first mesh surface below or at the bed plane `z = 0`. The
//! column between the face and the three end points is split into three
//! tetrahedra whose volumes are summed.

mod voxel;

use std::collections::BTreeMap;

use nalgebra::{Matrix4, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::{BvhError, BvhIndex, Ray};
use crate::mesh::{signed_volume, validate, PrintSetup, TriangleMesh};

pub use voxel::voxel_support_oracle;

/// Absolute slack on `n · d + sin(alpha_max)`; faces sitting exactly on the
/// self-support limit stay safe despite rounding in the normal.
pub const CLASSIFY_TOLERANCE: f64 = 1e-9;
/// Ray origins start this fraction of the bounding-box diagonal below the vertex.
pub const RAY_OFFSET_RATIO: f64 = 1e-6;
/// Meshes with `|V| <= ZERO_VOLUME_RATIO * bbox_diag^3` have no usable volume.
pub const ZERO_VOLUME_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupportError {
    #[error("NSV undefined for zero-volume mesh")]
    ZeroVolume,
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error("voxel oracle needs a watertight mesh (parity undefined)")]
    NotWatertight,
    #[error("voxel resolution {0} outside [16, 1024]")]
    Resolution(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceClassification {
    pub risky_flags: Vec<bool>,
    pub risky_area: f64,
    pub risky_count: usize,
}

/// Where a support column's vertex ray stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Bed,
    Mesh(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportColumn {
    pub face_id: usize,
    pub top: [Point3<f64>; 3],
    pub bottom: [Point3<f64>; 3],
    pub terminations: [Termination; 3],
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub mesh_volume: f64,
    pub support_volume: f64,
    pub nsv: f64,
    pub risky_count: usize,
    pub risky_area: f64,
    pub column_count: usize,
    pub watertight: bool,
    pub setup: PrintSetup,
}

/// Classifies faces of a mesh already in its print frame against `setup`'s
/// direction and angle. Degenerate faces are always safe.
pub fn classify_faces(mesh: &TriangleMesh, setup: &PrintSetup) -> FaceClassification {
    let d = setup.direction();
    let sin_alpha = setup.sin_alpha_max();
    let risky_flags: Vec<bool> = (0..mesh.face_count())
        .map(|f| !mesh.is_degenerate(f) && is_risky(&mesh.face_normals()[f], &d, sin_alpha))
        .collect();
    let risky_area = risky_flags
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(f, _)| mesh.face_area(f))
        .sum();
    let risky_count = risky_flags.iter().filter(|&&r| r).count();
    FaceClassification { risky_flags, risky_area, risky_count }
}

pub fn is_risky(normal: &Vector3<f64>, direction: &Vector3<f64>, sin_alpha_max: f64) -> bool {
    normal.dot(direction) + sin_alpha_max < -CLASSIFY_TOLERANCE
}

/// `|det [p_i 1]| / 6` for the tetrahedron with the given corners.
pub fn tetra_volume(p1: &Point3<f64>, p2: &Point3<f64>, p3: &Point3<f64>, p4: &Point3<f64>) -> f64 {
    let m = Matrix4::new(
        p1.x, p1.y, p1.z, 1.0, //
        p2.x, p2.y, p2.z, 1.0, //
        p3.x, p3.y, p3.z, 1.0, //
        p4.x, p4.y, p4.z, 1.0,
    );
    m.determinant().abs() / 6.0
}

/// Volume between a top triangle and the points below its vertices, as the
/// tetrahedra `(t0,t1,t2,b0)`, `(t1,t2,b0,b1)` and `(t2,b0,b1,b2)`.
pub fn prism_volume(top: &[Point3<f64>; 3], bottom: &[Point3<f64>; 3]) -> f64 {
    let [t0, t1, t2] = top;
    let [b0, b1, b2] = bottom;
    tetra_volume(t0, t1, t2, b0) + tetra_volume(t1, t2, b0, b1) + tetra_volume(t2, b0, b1, b2)
}

/// Full simulation result including the individual columns.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: SupportReport,
    pub classification: FaceClassification,
    pub columns: Vec<SupportColumn>,
}

/// Runs classification and column casting on a mesh in its print frame
/// (direction +Z, bed at z = 0).
pub fn simulate(mesh: &TriangleMesh, setup: &PrintSetup) -> Result<SupportReport, SupportError> {
    simulate_detailed(mesh, setup).map(|s| s.report)
}

pub fn simulate_detailed(mesh: &TriangleMesh, setup: &PrintSetup) -> Result<Simulation, SupportError> {
    let diag = mesh.bbox_diag();
    let mesh_volume = signed_volume(mesh).abs();
    if !(mesh_volume > ZERO_VOLUME_RATIO * diag.powi(3)) {
        return Err(SupportError::ZeroVolume);
    }
    let watertight = validate(mesh).is_watertight;
    if !watertight {
        log::warn!("{}: mesh is not watertight, support volume may be unreliable", mesh.source_name());
    }
    let classification = classify_faces(mesh, setup);

    let bvh = BvhIndex::build(mesh)?;
    let offset = RAY_OFFSET_RATIO * diag;

    // One downward ray per distinct vertex of a risky face. A vertical line
    // meets any non-vertical face through the vertex only at the vertex itself
    // (t = -offset), so the emitting face never needs to be masked and the
    // result can be shared between all faces around the vertex.
    let mut emitters: Vec<u32> = classification
        .risky_flags
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .flat_map(|(f, _)| mesh.faces()[f])
        .collect();
    emitters.sort_unstable();
    emitters.dedup();
    let drops: BTreeMap<u32, (Point3<f64>, Termination)> = emitters
        .par_iter()
        .map(|&v| (v, drop_vertex(mesh, &bvh, &mesh.vertices()[v as usize], offset)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let columns: Vec<SupportColumn> = classification
        .risky_flags
        .par_iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(f, _)| {
            let top = mesh.triangle(f);
            let ends = mesh.faces()[f].map(|v| drops[&v]);
            let bottom = ends.map(|(p, _)| p);
            SupportColumn {
                face_id: f,
                top,
                bottom,
                terminations: ends.map(|(_, t)| t),
                volume: prism_volume(&top, &bottom),
            }
        })
        .collect();

    // ordered in face id, so the sum is independent of the worker count
    let support_volume: f64 = columns.iter().map(|c| c.volume).sum();
    let report = SupportReport {
        mesh_volume,
        support_volume,
        nsv: support_volume / mesh_volume,
        risky_count: classification.risky_count,
        risky_area: classification.risky_area,
        column_count: columns.len(),
        watertight,
        setup: *setup,
    };
    Ok(Simulation { report, classification, columns })
}

fn drop_vertex(mesh: &TriangleMesh, bvh: &BvhIndex, top: &Point3<f64>, offset: f64) -> (Point3<f64>, Termination) {
    if top.z <= 0.0 {
        return (*top, Termination::Bed);
    }
    let origin = Point3::new(top.x, top.y, top.z - offset);
    let ray = Ray::new(origin, -Vector3::z());
    match bvh.first_hit(mesh, &ray) {
        Some(hit) if hit.point.z > 0.0 => {
            (Point3::new(top.x, top.y, hit.point.z.min(top.z)), Termination::Mesh(hit.face_id))
        }
        _ => (Point3::new(top.x, top.y, 0.0), Termination::Bed),
    }
}
