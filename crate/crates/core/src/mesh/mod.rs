//! Indexed triangle meshes, file ingestion, validation and the print frame.
//!
//! A [`TriangleMesh`] is immutable once built. Face normals are always
//! recomputed from the winding order; any normals stored in a source file are
//! discarded. Faces whose area falls below `1e-12 * bbox_diag^2` are flagged as
//! degenerate and skipped by classification, volume sums and ray casting.

mod obj;
mod ply;
mod stl;

use std::collections::HashMap;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use obj::{parse_obj, parse_obj_detailed, write_obj, ObjStats};
pub use ply::write_ply_colored;
pub use stl::{parse_stl, write_stl_ascii, write_stl_binary};

/// Relative area threshold (against `bbox_diag^2`) below which a face is degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("risky flag count {flags} does not match face count {faces}")]
    FlagLengthMismatch { flags: usize, faces: usize },
    #[error("invalid print setup: {0}")]
    InvalidSetup(String),
}

impl MeshError {
    pub(crate) fn at_line(line: usize, message: impl Into<String>) -> Self {
        MeshError::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn at_byte(offset: usize, message: impl Into<String>) -> Self {
        MeshError::Parse {
            location: format!("byte {offset}"),
            message: message.into(),
        }
    }
}

/// Indexed triangle mesh with derived per-face normals.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_normals: Vec<Vector3<f64>>,
    degenerate: Vec<bool>,
    source_name: String,
}

impl TriangleMesh {
    /// Builds a mesh, checking indices and coordinates and deriving normals.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        source_name: impl Into<String>,
    ) -> Result<Self, MeshError> {
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: idx as usize,
                        count: vertices.len(),
                    });
                }
            }
        }
        let mut mesh = TriangleMesh {
            vertices,
            faces,
            face_normals: Vec::new(),
            degenerate: Vec::new(),
            source_name: source_name.into(),
        };
        mesh.derive_normals();
        Ok(mesh)
    }

    /// Builds a mesh from a triangle soup, merging bit-identical vertices.
    pub fn from_triangles(
        triangles: &[[Point3<f64>; 3]],
        source_name: impl Into<String>,
    ) -> Result<Self, MeshError> {
        let mut welder = VertexWelder::default();
        let faces = triangles
            .iter()
            .map(|tri| [welder.index(tri[0]), welder.index(tri[1]), welder.index(tri[2])])
            .collect();
        Self::new(welder.vertices, faces, source_name)
    }

    fn derive_normals(&mut self) {
        let diag = self.bbox_diag();
        let area_floor = DEGENERATE_AREA_RATIO * diag * diag;
        self.face_normals.clear();
        self.degenerate.clear();
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area < area_floor || area == 0.0 {
                self.face_normals.push(Vector3::zeros());
                self.degenerate.push(true);
            } else {
                self.face_normals.push(cross / cross.norm());
                self.degenerate.push(false);
            }
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Unit normal of each face; the zero vector for degenerate faces.
    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normals
    }

    pub fn is_degenerate(&self, face: usize) -> bool {
        self.degenerate[face]
    }

    pub fn degenerate_face_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Axis-aligned bounds of all vertices, or `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    pub fn bbox_diag(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    /// Applies `f` to every vertex, keeping connectivity. Normals are rederived.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Result<Self, MeshError> {
        Self::new(
            self.vertices.iter().map(f).collect(),
            self.faces.clone(),
            self.source_name.clone(),
        )
    }

    /// Same geometry with every face's winding reversed.
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::new(self.vertices.clone(), faces, self.source_name.clone())
            .expect("flipping keeps indices valid")
    }

    pub fn with_source_name(mut self, name: impl Into<String>) -> Self {
        self.source_name = name.into();
        self
    }

    /// Concatenates two meshes into one (disjoint components).
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        Self::new(vertices, faces, self.source_name.clone()).expect("offset indices are valid")
    }
}

/// Exact-equality vertex deduplication keyed on the coordinate bit patterns.
#[derive(Default)]
pub(crate) struct VertexWelder {
    lookup: HashMap<[u64; 3], u32>,
    pub(crate) vertices: Vec<Point3<f64>>,
}

impl VertexWelder {
    pub(crate) fn index(&mut self, p: Point3<f64>) -> u32 {
        // +0.0 and -0.0 compare equal, so they must weld too
        let key = [p.x, p.y, p.z].map(|c| if c == 0.0 { 0 } else { c.to_bits() });
        *self.lookup.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            (self.vertices.len() - 1) as u32
        })
    }
}

/// Edge-adjacency summary of a mesh. Never rejects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Closed surface: no boundary edges and no edge shared by more than two faces.
    pub is_watertight: bool,
    /// Every edge shared by exactly two faces that traverse it in opposite directions.
    pub is_manifold: bool,
    pub degenerate_face_count: usize,
    pub duplicate_vertex_count: usize,
    pub boundary_edge_count: usize,
}

pub fn validate(mesh: &TriangleMesh) -> ValidationReport {
    // undirected edge -> (uses in forward direction, uses in reverse direction)
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let entry = edges.entry((a.min(b), a.max(b))).or_default();
            if a < b {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    let boundary_edge_count = edges.values().filter(|(f, r)| f + r == 1).count();
    let overused = edges.values().any(|(f, r)| f + r > 2);
    let is_manifold = !mesh.is_empty() && edges.values().all(|&(f, r)| f == 1 && r == 1);

    let mut seen = HashMap::new();
    let mut duplicate_vertex_count = 0;
    for v in mesh.vertices() {
        let key = [v.x, v.y, v.z].map(|c| if c == 0.0 { 0 } else { c.to_bits() });
        if seen.insert(key, ()).is_some() {
            duplicate_vertex_count += 1;
        }
    }

    ValidationReport {
        is_watertight: !mesh.is_empty() && boundary_edge_count == 0 && !overused,
        is_manifold,
        degenerate_face_count: mesh.degenerate_face_count(),
        duplicate_vertex_count,
        boundary_edge_count,
    }
}

/// Sum of `det(v0, v1, v2) / 6` over non-degenerate faces.
///
/// Positive for closed meshes wound counter-clockwise seen from outside.
pub fn signed_volume(mesh: &TriangleMesh) -> f64 {
    (0..mesh.face_count())
        .filter(|&f| !mesh.is_degenerate(f))
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
        })
        .sum()
}

/// Where the print bed sits after rotating the mesh into the print frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum BedPlane {
    /// Bed touches the lowest point of the model.
    #[default]
    Grounded,
    /// Bed at this coordinate along the print direction; the model may float above it.
    At(f64),
}

/// Print direction, maximal self-support angle and bed placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintSetup {
    direction: Vector3<f64>,
    alpha_max_degrees: f64,
    bed: BedPlane,
}

impl Default for PrintSetup {
    fn default() -> Self {
        PrintSetup {
            direction: Vector3::z(),
            alpha_max_degrees: 45.0,
            bed: BedPlane::Grounded,
        }
    }
}

impl PrintSetup {
    /// `direction` is normalized; it must be finite and non-zero.
    pub fn new(direction: Vector3<f64>, alpha_max_degrees: f64) -> Result<Self, MeshError> {
        let norm = direction.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(MeshError::InvalidSetup(format!(
                "print direction {direction:?} has no usable length"
            )));
        }
        if !(alpha_max_degrees > 0.0 && alpha_max_degrees < 90.0) {
            return Err(MeshError::InvalidSetup(format!(
                "alpha_max {alpha_max_degrees} must lie strictly between 0 and 90 degrees"
            )));
        }
        Ok(PrintSetup {
            direction: direction / norm,
            alpha_max_degrees,
            bed: BedPlane::Grounded,
        })
    }

    pub fn with_bed(mut self, bed: BedPlane) -> Self {
        self.bed = bed;
        self
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn alpha_max_degrees(&self) -> f64 {
        self.alpha_max_degrees
    }

    pub fn bed(&self) -> BedPlane {
        self.bed
    }

    pub fn sin_alpha_max(&self) -> f64 {
        self.alpha_max_degrees.to_radians().sin()
    }

    /// The same setup expressed in the print frame (direction +Z, bed at z = 0).
    pub fn in_print_frame(&self) -> Self {
        PrintSetup {
            direction: Vector3::z(),
            alpha_max_degrees: self.alpha_max_degrees,
            bed: BedPlane::At(0.0),
        }
    }

    /// Minimal rotation carrying the print direction onto +Z.
    pub fn rotation_to_z(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::rotation_between(&self.direction, &Vector3::z()).unwrap_or_else(|| {
            // antiparallel: any half turn about an axis orthogonal to z
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
        })
    }
}

/// Rotates `direction` onto +Z and translates so the bed plane is z = 0.
pub fn transform_to_print_frame(mesh: &TriangleMesh, setup: &PrintSetup) -> TriangleMesh {
    let rotation = setup.rotation_to_z();
    let is_identity = setup.direction == Vector3::z();
    let rotated: Vec<Point3<f64>> = if is_identity {
        mesh.vertices().to_vec()
    } else {
        mesh.vertices().iter().map(|v| rotation * v).collect()
    };
    let shift = match setup.bed() {
        BedPlane::Grounded => rotated.iter().map(|v| v.z).fold(f64::INFINITY, f64::min),
        BedPlane::At(z) => z,
    };
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let vertices = rotated
        .into_iter()
        .map(|v| Point3::new(v.x, v.y, v.z - shift))
        .collect();
    TriangleMesh::new(vertices, mesh.faces().to_vec(), mesh.source_name())
        .expect("rigid motion keeps the mesh valid")
}
