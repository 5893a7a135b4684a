//! Median-split bounding volume hierarchy with first-hit ray queries.
//!
//! The hierarchy stores face ids only; queries take the mesh alongside the
//! index. [`brute_force_first_hit`] shares the ray–triangle test and the
//! tie-break rule, so both routes return the same face for the same ray.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::mesh::TriangleMesh;

pub const DEFAULT_LEAF_SIZE: usize = 4;

/// Slack on barycentric coordinates so rays through shared edges and
/// vertices hit at least one of the adjacent triangles.
const BARYCENTRIC_SLACK: f64 = 1e-12;
/// Rays whose direction lies within this relative tolerance of the triangle
/// plane are treated as parallel.
const PARALLEL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BvhError {
    #[error("cannot build a hierarchy over a mesh without non-degenerate faces")]
    EmptyMesh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::from([f64::INFINITY; 3]),
            max: Point3::from([f64::NEG_INFINITY; 3]),
        }
    }

    pub fn from_points(points: &[Point3<f64>]) -> Self {
        points.iter().fold(Self::empty(), |b, p| b.grow(p))
    }

    pub fn grow(self, p: &Point3<f64>) -> Self {
        Aabb { min: self.min.inf(p), max: self.max.sup(p) }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    /// Grown on every side so hits accepted by the barycentric slack and
    /// rounding in the slab test stay inside the box.
    fn padded(&self) -> Self {
        let e = self.extent();
        let pad = 1e-9 * e.x.max(e.y).max(e.z) + 1e-300;
        let d = Vector3::repeat(pad);
        Aabb { min: self.min - d, max: self.max + d }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    /// Entry distance of the ray into the box clipped to `[t_min, t_max]`.
    /// Bounds are inclusive; axes the ray does not move along are tested
    /// against the slab directly.
    fn entry(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        let (mut lo, mut hi) = (t_min, t_max);
        for a in 0..3 {
            if inv_dir[a].is_infinite() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[a] - origin[a]) * inv_dir[a];
            let t1 = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            lo = lo.max(near);
            hi = hi.min(far);
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Leaf { start: u32, len: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    aabb: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct BvhIndex {
    nodes: Vec<Node>,
    face_order: Vec<u32>,
    leaf_size: usize,
}

/// A ray query. `direction` must be unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
    pub ignore_face: Option<usize>,
    pub t_min: f64,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Ray { origin, direction, ignore_face: None, t_min: 0.0 }
    }

    pub fn ignoring(mut self, face: usize) -> Self {
        self.ignore_face = Some(face);
        self
    }

    pub fn with_t_min(mut self, t_min: f64) -> Self {
        self.t_min = t_min;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub face_id: usize,
    pub t: f64,
    pub point: Point3<f64>,
}

impl RayHit {
    /// Strict ordering used for "nearest": smaller `t`, then smaller face id.
    fn beats(&self, other: &RayHit) -> bool {
        self.t < other.t || (self.t == other.t && self.face_id < other.face_id)
    }
}

/// Möller–Trumbore intersection returning the ray parameter of the hit.
pub fn intersect_triangle(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() <= PARALLEL_TOLERANCE * e1.norm() * e2.norm() {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(&p) * inv_det;
    if !(-BARYCENTRIC_SLACK..=1.0 + BARYCENTRIC_SLACK).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv_det;
    if v < -BARYCENTRIC_SLACK || u + v > 1.0 + BARYCENTRIC_SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t >= ray.t_min && t.is_finite()).then_some(t)
}

fn test_face(mesh: &TriangleMesh, face: usize, ray: &Ray, best: &mut Option<RayHit>) {
    if ray.ignore_face == Some(face) || mesh.is_degenerate(face) {
        return;
    }
    if let Some(t) = intersect_triangle(ray, &mesh.triangle(face)) {
        let hit = RayHit { face_id: face, t, point: ray.origin + ray.direction * t };
        if best.as_ref().is_none_or(|b| hit.beats(b)) {
            *best = Some(hit);
        }
    }
}

/// Exhaustive first-hit query over every face.
pub fn brute_force_first_hit(mesh: &TriangleMesh, ray: &Ray) -> Option<RayHit> {
    let mut best = None;
    for face in 0..mesh.face_count() {
        test_face(mesh, face, ray, &mut best);
    }
    best
}

impl BvhIndex {
    pub fn build(mesh: &TriangleMesh) -> Result<Self, BvhError> {
        Self::build_with_leaf_size(mesh, DEFAULT_LEAF_SIZE)
    }

    pub fn build_with_leaf_size(mesh: &TriangleMesh, leaf_size: usize) -> Result<Self, BvhError> {
        let leaf_size = leaf_size.max(1);
        let mut refs: Vec<FaceRef> = (0..mesh.face_count())
            .filter(|&f| !mesh.is_degenerate(f))
            .map(|f| {
                let tri = mesh.triangle(f);
                let aabb = Aabb::from_points(&tri).padded();
                FaceRef {
                    id: f as u32,
                    aabb,
                    centroid: Point3::from((tri[0].coords + tri[1].coords + tri[2].coords) / 3.0),
                }
            })
            .collect();
        if refs.is_empty() {
            return Err(BvhError::EmptyMesh);
        }
        let mut nodes = Vec::with_capacity(2 * refs.len() / leaf_size + 1);
        build_node(&mut refs, 0, leaf_size, &mut nodes);
        Ok(BvhIndex {
            nodes,
            face_order: refs.iter().map(|r| r.id).collect(),
            leaf_size,
        })
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn face_order(&self) -> &[u32] {
        &self.face_order
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].aabb
    }

    /// Longest root-to-leaf path, counting the root as depth 1.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i].kind {
                NodeKind::Leaf { .. } => 1,
                NodeKind::Inner { left, right } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Checks that every node bounds all faces below it and every indexed
    /// face appears once. Returns a description of the first violation.
    pub fn check_invariants(&self, mesh: &TriangleMesh) -> Result<(), String> {
        let mut seen = vec![false; mesh.face_count()];
        for &f in &self.face_order {
            if std::mem::replace(&mut seen[f as usize], true) {
                return Err(format!("face {f} appears twice"));
            }
        }
        for (f, &present) in seen.iter().enumerate() {
            if !present && !mesh.is_degenerate(f) {
                return Err(format!("face {f} missing"));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let mut stack = vec![i];
            while let Some(j) = stack.pop() {
                match self.nodes[j].kind {
                    NodeKind::Leaf { start, len } => {
                        for &f in &self.face_order[start as usize..(start + len) as usize] {
                            let fb = Aabb::from_points(&mesh.triangle(f as usize));
                            if !node.aabb.contains(&fb) {
                                return Err(format!("node {i} does not contain face {f}"));
                            }
                        }
                    }
                    NodeKind::Inner { left, right } => {
                        stack.push(left as usize);
                        stack.push(right as usize);
                    }
                }
            }
        }
        Ok(())
    }

    /// Nearest hit with `t >= ray.t_min`, skipping `ray.ignore_face`.
    /// Equal distances resolve to the smaller face id.
    pub fn first_hit(&self, mesh: &TriangleMesh, ray: &Ray) -> Option<RayHit> {
        let inv_dir = ray.direction.map(|d| 1.0 / d);
        let mut best: Option<RayHit> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        if let Some(t) = self.nodes[0].aabb.entry(&ray.origin, &inv_dir, ray.t_min, f64::INFINITY) {
            stack.push((0, t));
        }
        while let Some((idx, entry)) = stack.pop() {
            // equal entry distance may still hold a smaller face id
            if best.as_ref().is_some_and(|b| entry > b.t) {
                continue;
            }
            match self.nodes[idx as usize].kind {
                NodeKind::Leaf { start, len } => {
                    for &f in &self.face_order[start as usize..(start + len) as usize] {
                        test_face(mesh, f as usize, ray, &mut best);
                    }
                }
                NodeKind::Inner { left, right } => {
                    let t_max = best.as_ref().map_or(f64::INFINITY, |b| b.t);
                    let hit_l = self.nodes[left as usize].aabb.entry(&ray.origin, &inv_dir, ray.t_min, t_max);
                    let hit_r = self.nodes[right as usize].aabb.entry(&ray.origin, &inv_dir, ray.t_min, t_max);
                    match (hit_l, hit_r) {
                        (Some(tl), Some(tr)) => {
                            // push the farther child first so the nearer pops first
                            if tl <= tr {
                                stack.push((right, tr));
                                stack.push((left, tl));
                            } else {
                                stack.push((left, tl));
                                stack.push((right, tr));
                            }
                        }
                        (Some(tl), None) => stack.push((left, tl)),
                        (None, Some(tr)) => stack.push((right, tr)),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy)]
struct FaceRef {
    id: u32,
    aabb: Aabb,
    centroid: Point3<f64>,
}

fn build_node(refs: &mut [FaceRef], offset: usize, leaf_size: usize, nodes: &mut Vec<Node>) -> u32 {
    let aabb = refs.iter().fold(Aabb::empty(), |b, r| b.union(&r.aabb));
    let index = nodes.len() as u32;
    if refs.len() <= leaf_size {
        nodes.push(Node {
            aabb,
            kind: NodeKind::Leaf { start: offset as u32, len: refs.len() as u32 },
        });
        return index;
    }
    let centroids = refs.iter().fold(Aabb::empty(), |b, r| b.grow(&r.centroid));
    let extent = centroids.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = refs.len() / 2;
    refs.select_nth_unstable_by(mid, |a, b| {
        a.centroid[axis].total_cmp(&b.centroid[axis]).then(a.id.cmp(&b.id))
    });
    // placeholder, patched once both children exist
    nodes.push(Node { aabb, kind: NodeKind::Inner { left: 0, right: 0 } });
    let (lo, hi) = refs.split_at_mut(mid);
    let left = build_node(lo, offset, leaf_size, nodes);
    let right = build_node(hi, offset + mid, leaf_size, nodes);
    nodes[index as usize].kind = NodeKind::Inner { left, right };
    index
}
