use super::{MeshError, TriangleMesh};

pub const RISKY_RGB: [u8; 3] = [220, 40, 40];
pub const SAFE_RGB: [u8; 3] = [60, 90, 220];

/// Binary little-endian PLY with double vertex coordinates and per-face RGB.
/// Risky faces are red, safe faces blue.
pub fn write_ply_colored(mesh: &TriangleMesh, risky_flags: &[bool]) -> Result<Vec<u8>, MeshError> {
    if risky_flags.len() != mesh.face_count() {
        return Err(MeshError::FlagLengthMismatch {
            flags: risky_flags.len(),
            faces: mesh.face_count(),
        });
    }
    let header = format!(
        "ply\nformat binary_little_endian 1.0\ncomment risky faces red, safe faces blue\n\
         element vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        mesh.vertices().len(),
        mesh.face_count()
    );
    let mut out = header.into_bytes();
    for v in mesh.vertices() {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for (face, &risky) in mesh.faces().iter().zip(risky_flags) {
        out.push(3);
        for &i in face {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
        out.extend_from_slice(if risky { &RISKY_RGB } else { &SAFE_RGB });
    }
    Ok(out)
}
