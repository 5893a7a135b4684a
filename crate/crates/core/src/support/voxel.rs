//! Voxel estimate of support volume, independent of the column method.
//!
//! The grounded bounding box is cut into `resolution^3` cells. For every
//! vertical line through a column of cells, all surface crossings are found
//! and paired by parity to mark occupied cells. Below the lowest cell of each
//! occupied run whose underside surface is risky, empty cells are counted down
//! to the next occupied cell or the bed.

use nalgebra::Point2;

use super::{classify_faces, SupportError};
use crate::mesh::{validate, PrintSetup, TriangleMesh};

// Sample lines sit off the cell centre by an irrational-looking fraction so
// they do not run exactly along the edges of grid-aligned meshes.
const JITTER: [f64; 2] = [0.013_579_2, 0.021_468_3];

struct Crossing {
    z: f64,
    face: usize,
}

pub fn voxel_support_oracle(
    mesh: &TriangleMesh,
    setup: &PrintSetup,
    resolution: usize,
) -> Result<f64, SupportError> {
    if !(16..=1024).contains(&resolution) {
        return Err(SupportError::Resolution(resolution));
    }
    if !validate(mesh).is_watertight {
        return Err(SupportError::NotWatertight);
    }
    let Some((lo, hi)) = mesh.bounds() else {
        return Ok(0.0);
    };
    let z_lo = lo.z.min(0.0);
    let n = resolution;
    let cell = [(hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64, (hi.z - z_lo) / n as f64];
    if cell.iter().any(|&c| c <= 0.0) {
        return Ok(0.0);
    }
    let risky = classify_faces(mesh, setup).risky_flags;

    // bucket each face into the sample columns its xy footprint covers
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n * n];
    for f in 0..mesh.face_count() {
        if mesh.is_degenerate(f) {
            continue;
        }
        let tri = mesh.triangle(f);
        let range = |axis: usize, origin: f64| {
            let (mn, mx) = tri
                .iter()
                .map(|p| p[axis])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let first = ((mn - origin) / cell[axis] - 1.0).floor().max(0.0) as usize;
            let last = (((mx - origin) / cell[axis]).ceil() as usize).min(n - 1);
            first..=last
        };
        for i in range(0, lo.x) {
            for j in range(1, lo.y) {
                buckets[i * n + j].push(f);
            }
        }
    }

    let mut support_cells = 0usize;
    let mut crossings: Vec<Crossing> = Vec::new();
    let mut occupied = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            let sample = Point2::new(
                lo.x + (i as f64 + 0.5 + JITTER[0]) * cell[0],
                lo.y + (j as f64 + 0.5 + JITTER[1]) * cell[1],
            );
            crossings.clear();
            for &f in &buckets[i * n + j] {
                if let Some(z) = vertical_crossing(mesh, f, &sample) {
                    crossings.push(Crossing { z, face: f });
                }
            }
            if crossings.is_empty() {
                continue;
            }
            if crossings.len() % 2 == 1 {
                return Err(SupportError::NotWatertight);
            }
            crossings.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.face.cmp(&b.face)));

            for (k, occ) in occupied.iter_mut().enumerate() {
                let zc = z_lo + (k as f64 + 0.5) * cell[2];
                *occ = crossings.chunks(2).any(|pair| pair[0].z < zc && zc < pair[1].z);
            }
            for k in 0..n {
                let run_bottom = occupied[k] && (k == 0 || !occupied[k - 1]);
                if !run_bottom || k == 0 {
                    continue;
                }
                // the surface entered from below that covers this run
                let zc = z_lo + (k as f64 + 0.5) * cell[2];
                let Some(pair) = crossings.chunks(2).find(|p| p[0].z < zc && zc < p[1].z) else {
                    continue;
                };
                if !risky[pair[0].face] {
                    continue;
                }
                support_cells += (0..k).rev().take_while(|&b| !occupied[b]).count();
            }
        }
    }
    Ok(support_cells as f64 * cell[0] * cell[1] * cell[2])
}

/// Height where the vertical line through `sample` crosses face `f`. Edges
/// are inclusive; the jittered samples keep lines off shared edges.
fn vertical_crossing(mesh: &TriangleMesh, f: usize, sample: &Point2<f64>) -> Option<f64> {
    let [a, b, c] = mesh.triangle(f);
    let (pa, pb, pc) = (a.xy(), b.xy(), c.xy());
    let area = orient(&pa, &pb, &pc);
    if area == 0.0 {
        return None;
    }
    let w0 = orient(&pb, &pc, sample) / area;
    let w1 = orient(&pc, &pa, sample) / area;
    let w2 = orient(&pa, &pb, sample) / area;
    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
        return None;
    }
    Some(w0 * a.z + w1 * b.z + w2 * c.z)
}

fn orient(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BedPlane;
    use crate::shapes;

    fn frame() -> PrintSetup {
        PrintSetup::default().with_bed(BedPlane::At(0.0))
    }

    #[test]
    fn floating_cube_close_to_half() {
        let cube = shapes::axis_box([0.0, 0.0, 0.5], [1.0, 1.0, 1.5]);
        let v = voxel_support_oracle(&cube, &frame(), 128).unwrap();
        assert!((v - 0.5).abs() / 0.5 < 0.05, "{v}");
    }

    #[test]
    fn grounded_shapes_need_nothing() {
        assert_eq!(voxel_support_oracle(&shapes::unit_cube(), &frame(), 64).unwrap(), 0.0);
        let pyramid = shapes::inverted_pyramid(1.0, 1.0);
        assert_eq!(voxel_support_oracle(&pyramid, &frame(), 64).unwrap(), 0.0);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let tri = TriangleMesh::new(
            vec![
                nalgebra::Point3::new(0.0, 0.0, 1.0),
                nalgebra::Point3::new(1.0, 0.0, 1.0),
                nalgebra::Point3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2]],
            "open",
        )
        .unwrap();
        assert_eq!(voxel_support_oracle(&tri, &frame(), 32), Err(SupportError::NotWatertight));
    }

    #[test]
    fn resolution_bounds() {
        let cube = shapes::unit_cube();
        assert_eq!(voxel_support_oracle(&cube, &frame(), 8), Err(SupportError::Resolution(8)));
        assert_eq!(voxel_support_oracle(&cube, &frame(), 2048), Err(SupportError::Resolution(2048)));
    }
}
