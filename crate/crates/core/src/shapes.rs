//! Procedural meshes: boxes and box unions, pyramids, cones, icospheres,
//! the parametric tabletop and random triangle soups.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::TriangleMesh;

/// Closed axis-aligned box, wound outward.
pub fn axis_box(lo: [f64; 3], hi: [f64; 3]) -> TriangleMesh {
    box_union(&[(lo, hi)], f64::INFINITY).with_source_name("box")
}

/// The unit cube `[0,1]^3` as 12 triangles over 8 vertices.
pub fn unit_cube() -> TriangleMesh {
    axis_box([0.0; 3], [1.0; 3]).with_source_name("unit_cube")
}

/// Surface of the union of axis-aligned boxes.
///
/// Space is cut along every box face coordinate, and intervals longer than
/// `max_cell` are split evenly. The boundary between occupied and empty cells
/// becomes two triangles per cell face. Boxes that touch only along an edge or
/// a corner produce a non-manifold result.
pub fn box_union(boxes: &[([f64; 3], [f64; 3])], max_cell: f64) -> TriangleMesh {
    let axes: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let mut cuts: Vec<f64> = boxes.iter().flat_map(|(lo, hi)| [lo[a], hi[a]]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        refine(&cuts, max_cell)
    });
    let dims = axes.clone().map(|c| c.len().saturating_sub(1));
    let occupied = |cell: [i64; 3]| -> bool {
        if (0..3).any(|a| cell[a] < 0 || cell[a] >= dims[a] as i64) {
            return false;
        }
        let centre: [f64; 3] = std::array::from_fn(|a| {
            0.5 * (axes[a][cell[a] as usize] + axes[a][cell[a] as usize + 1])
        });
        boxes
            .iter()
            .any(|(lo, hi)| (0..3).all(|a| lo[a] < centre[a] && centre[a] < hi[a]))
    };

    let mut ids: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |g: [usize; 3]| -> u32 {
        *ids.entry(g).or_insert_with(|| {
            vertices.push(Point3::new(axes[0][g[0]], axes[1][g[1]], axes[2][g[2]]));
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let cell = [i as i64, j as i64, k as i64];
                if !occupied(cell) {
                    continue;
                }
                for a in 0..3 {
                    for positive in [false, true] {
                        let mut n = cell;
                        n[a] += if positive { 1 } else { -1 };
                        if occupied(n) {
                            continue;
                        }
                        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                        let base = [i, j, k];
                        let corner = |db: usize, dc: usize| {
                            let mut g = base;
                            g[a] += positive as usize;
                            g[b] += db;
                            g[c] += dc;
                            g
                        };
                        let mut quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        if !positive {
                            quad.reverse();
                        }
                        let q = quad.map(&mut vertex);
                        faces.push([q[0], q[1], q[2]]);
                        faces.push([q[0], q[2], q[3]]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, faces, "box_union").expect("grid indices are valid")
}

fn refine(cuts: &[f64], max_cell: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let pieces = if max_cell.is_finite() && max_cell > 0.0 {
            ((w[1] - w[0]) / max_cell).ceil().max(1.0) as usize
        } else {
            1
        };
        for p in 0..pieces {
            out.push(w[0] + (w[1] - w[0]) * p as f64 / pieces as f64);
        }
    }
    if let Some(&last) = cuts.last() {
        out.push(last);
    }
    out
}

/// Winds every face of a convex solid so its normal points away from the
/// vertex centroid.
fn orient_convex(vertices: Vec<Point3<f64>>, mut faces: Vec<[u32; 3]>, name: &str) -> TriangleMesh {
    let centroid = vertices.iter().fold(Vector3::zeros(), |acc, v| acc + v.coords) / vertices.len() as f64;
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        let mid = (a.coords + b.coords + c.coords) / 3.0;
        if n.dot(&(mid - centroid)) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriangleMesh::new(vertices, faces, name).expect("indices are valid")
}

/// Square pyramid standing on its apex at the origin with its base square at
/// `z = height`. With `half_width == height` every lateral face overhangs at
/// exactly 45 degrees.
pub fn inverted_pyramid(half_width: f64, height: f64) -> TriangleMesh {
    let h = half_width;
    let vertices = vec![
        Point3::origin(),
        Point3::new(-h, -h, height),
        Point3::new(h, -h, height),
        Point3::new(h, h, height),
        Point3::new(-h, h, height),
    ];
    let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1], [1, 2, 3], [1, 3, 4]];
    orient_convex(vertices, faces, "inverted_pyramid")
}

/// Square pyramid with its base on the bed and apex up.
pub fn upright_pyramid(half_width: f64, height: f64) -> TriangleMesh {
    let h = half_width;
    let vertices = vec![
        Point3::new(0.0, 0.0, height),
        Point3::new(-h, -h, 0.0),
        Point3::new(h, -h, 0.0),
        Point3::new(h, h, 0.0),
        Point3::new(-h, h, 0.0),
    ];
    let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1], [1, 2, 3], [1, 3, 4]];
    orient_convex(vertices, faces, "upright_pyramid")
}

/// Faceted cone on its apex at the origin whose flank leans `overhang_degrees`
/// away from vertical, capped by a flat disc at `z = height`.
pub fn inverted_cone(height: f64, overhang_degrees: f64, segments: usize) -> TriangleMesh {
    let radius = height * overhang_degrees.to_radians().tan();
    let mut vertices = vec![Point3::origin(), Point3::new(0.0, 0.0, height)];
    for s in 0..segments {
        let phi = std::f64::consts::TAU * s as f64 / segments as f64;
        vertices.push(Point3::new(radius * phi.cos(), radius * phi.sin(), height));
    }
    let mut faces = Vec::new();
    for s in 0..segments {
        let a = 2 + s as u32;
        let b = 2 + ((s + 1) % segments) as u32;
        faces.push([0, a, b]);
        faces.push([1, a, b]);
    }
    orient_convex(vertices, faces, "inverted_cone")
}

/// Subdivided icosahedron projected onto a sphere about the origin.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::from(*c).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vector3<f64>>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let points = vertices.into_iter().map(|v| Point3::from(v * radius)).collect();
    TriangleMesh::new(points, faces, "icosphere").expect("indices are valid")
}

/// Translates a mesh by `offset`.
pub fn translated(mesh: &TriangleMesh, offset: [f64; 3]) -> TriangleMesh {
    let d = Vector3::from(offset);
    mesh.map_vertices(|v| v + d).expect("translation keeps coordinates finite")
}

type Block = ([f64; 3], [f64; 3]);

/// Watertight box-union test pieces in the print frame (bed at `z = 0`):
/// floating blocks, tables, bridges, shelves and stepped overhangs. Every
/// piece except the first two needs some support; the first is grounded.
pub fn fixture_suite(max_cell: f64) -> Vec<TriangleMesh> {
    let pieces: Vec<(&str, Vec<Block>)> = vec![
        ("grounded_block", vec![([0.0; 3], [1.0, 0.6, 0.8])]),
        ("floating_cube", vec![([0.0, 0.0, 0.5], [1.0, 1.0, 1.5])]),
        ("floating_plate", vec![([0.0, 0.0, 1.0], [2.0, 1.0, 1.2])]),
        (
            "t_table",
            vec![([0.4, 0.4, 0.0], [0.6, 0.6, 1.0]), ([0.0, 0.0, 1.0], [1.0, 1.0, 1.2])],
        ),
        (
            "wide_table",
            vec![([0.7, 0.2, 0.0], [1.3, 0.8, 0.6]), ([0.0, 0.0, 0.6], [2.0, 1.0, 0.8])],
        ),
        (
            "bridge",
            vec![
                ([0.0, 0.0, 0.0], [0.3, 1.0, 1.0]),
                ([1.7, 0.0, 0.0], [2.0, 1.0, 1.0]),
                ([0.0, 0.0, 1.0], [2.0, 1.0, 1.3]),
            ],
        ),
        (
            "stepped_overhang",
            vec![
                ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
                ([0.0, 0.0, 1.0], [1.5, 1.0, 1.5]),
                ([0.0, 0.0, 1.5], [2.0, 1.0, 2.0]),
            ],
        ),
        (
            "shelf",
            vec![([0.0, 0.0, 0.0], [0.2, 1.0, 2.0]), ([0.2, 0.0, 1.0], [1.0, 1.0, 1.1])],
        ),
        (
            "double_shelf",
            vec![
                ([0.0, 0.0, 0.0], [0.2, 1.0, 2.0]),
                ([0.2, 0.0, 0.8], [1.2, 1.0, 0.9]),
                ([0.2, 0.0, 1.6], [0.9, 1.0, 1.7]),
            ],
        ),
        (
            "cantilever",
            vec![([0.0, 0.0, 0.0], [0.5, 0.5, 2.0]), ([0.5, 0.0, 1.7], [2.0, 0.5, 2.0])],
        ),
        (
            "tunnel",
            vec![
                ([0.0, 0.0, 0.0], [2.0, 1.0, 0.2]),
                ([0.0, 0.0, 0.2], [0.2, 1.0, 1.0]),
                ([1.8, 0.0, 0.2], [2.0, 1.0, 1.0]),
                ([0.0, 0.0, 1.0], [2.0, 1.0, 1.2]),
            ],
        ),
        (
            "block_over_block",
            vec![([0.0, 0.0, 0.0], [1.0, 1.0, 0.5]), ([0.25, 0.25, 1.0], [0.75, 0.75, 1.5])],
        ),
        (
            "inverted_steps",
            vec![
                ([0.6, 0.6, 0.0], [1.0, 1.0, 0.5]),
                ([0.4, 0.4, 0.5], [1.2, 1.2, 1.0]),
                ([0.0, 0.0, 1.0], [1.6, 1.6, 1.4]),
            ],
        ),
    ];
    pieces
        .into_iter()
        .map(|(name, blocks)| box_union(&blocks, max_cell).with_source_name(name))
        .collect()
}

/// Shape parameters of a tabletop: a grounded square column of fixed volume
/// carrying a square slab that overhangs the column on every side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tabletop {
    pub overhang: f64,
    pub column_height: f64,
    pub column_volume: f64,
    pub slab_thickness: f64,
}

impl Tabletop {
    pub fn column_width(&self) -> f64 {
        (self.column_volume / self.column_height).sqrt()
    }

    pub fn slab_width(&self) -> f64 {
        self.column_width() + 2.0 * self.overhang
    }

    pub fn volume(&self) -> f64 {
        self.column_volume + self.slab_width().powi(2) * self.slab_thickness
    }

    /// Support under the overhanging rim, all the way to the bed.
    pub fn support_volume(&self) -> f64 {
        (self.slab_width().powi(2) - self.column_width().powi(2)) * self.column_height
    }

    pub fn mesh(&self) -> TriangleMesh {
        let w = self.column_width() / 2.0;
        let s = self.slab_width() / 2.0;
        let h = self.column_height;
        box_union(
            &[
                ([-w, -w, 0.0], [w, w, h]),
                ([-s, -s, h], [s, s, h + self.slab_thickness]),
            ],
            f64::INFINITY,
        )
        .with_source_name("tabletop")
    }
}

/// Random triangles with centres in `[-1, 1]^3` and edges up to `size`.
pub fn random_soup(seed: u64, triangles: usize, size: f64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tris: Vec<[Point3<f64>; 3]> = (0..triangles)
        .map(|_| {
            let centre = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            std::array::from_fn(|_| {
                let jitter = Vector3::new(
                    rng.gen_range(-size..size),
                    rng.gen_range(-size..size),
                    rng.gen_range(-size..size),
                );
                Point3::from(centre + jitter)
            })
        })
        .collect();
    TriangleMesh::from_triangles(&tris, format!("soup-{seed}")).expect("finite coordinates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{signed_volume, validate};
    use approx::assert_relative_eq;

    #[test]
    fn unit_cube_shape() {
        let cube = unit_cube();
        assert_eq!(cube.face_count(), 12);
        assert_eq!(cube.vertices().len(), 8);
        assert_relative_eq!(signed_volume(&cube), 1.0);
    }

    #[test]
    fn box_union_is_closed_and_has_union_volume() {
        // T shape: column plus wider slab
        let t = box_union(
            &[([0.4, 0.4, 0.0], [0.6, 0.6, 1.0]), ([0.0, 0.0, 1.0], [1.0, 1.0, 1.2])],
            0.1,
        );
        let report = validate(&t);
        assert!(report.is_watertight && report.is_manifold, "{report:?}");
        assert_relative_eq!(signed_volume(&t), 0.04 + 0.2, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_boxes_count_once() {
        let u = box_union(&[([0.0; 3], [2.0, 1.0, 1.0]), ([1.0, 0.0, 0.0], [3.0, 1.0, 1.0])], 0.5);
        assert!(validate(&u).is_manifold);
        assert_relative_eq!(signed_volume(&u), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn convex_solids_are_closed_and_positive() {
        for mesh in [
            inverted_pyramid(1.0, 1.0),
            upright_pyramid(1.0, 1.0),
            inverted_cone(1.0, 50.0, 32),
            icosphere(1.0, 2),
        ] {
            let report = validate(&mesh);
            assert!(report.is_manifold, "{}: {report:?}", mesh.source_name());
            assert!(signed_volume(&mesh) > 0.0);
        }
        assert_relative_eq!(signed_volume(&inverted_pyramid(1.0, 1.0)), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn tabletop_matches_closed_form_volume() {
        let t = Tabletop { overhang: 0.5, column_height: 2.0, column_volume: 1.0, slab_thickness: 0.25 };
        let mesh = t.mesh();
        assert!(validate(&mesh).is_manifold);
        assert_relative_eq!(signed_volume(&mesh), t.volume(), epsilon = 1e-12);
    }
}
