//! Binary and ASCII STL.
//!
//! Binary layout: 80-byte header, little-endian `u32` triangle count, then one
//! 50-byte record per triangle (normal, three vertices as `f32` triples, and a
//! `u16` attribute count). A file is read as binary when its size matches the
//! declared count; otherwise it must start with `solid` to be read as ASCII.

use nalgebra::Point3;

use super::{MeshError, TriangleMesh};

const HEADER_LEN: usize = 80;
const PREAMBLE_LEN: usize = 84;
const RECORD_LEN: usize = 50;

pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if bytes.len() >= PREAMBLE_LEN {
        let count = u32::from_le_bytes(bytes[HEADER_LEN..PREAMBLE_LEN].try_into().unwrap()) as u64;
        let expected = PREAMBLE_LEN as u64 + count * RECORD_LEN as u64;
        if expected == bytes.len() as u64 {
            return parse_binary(bytes, count as usize);
        }
        if !looks_ascii(bytes) {
            let body = bytes.len() - PREAMBLE_LEN;
            if (bytes.len() as u64) < expected && !body.is_multiple_of(RECORD_LEN) {
                let record = body / RECORD_LEN;
                return Err(MeshError::at_byte(
                    PREAMBLE_LEN + record * RECORD_LEN,
                    format!("truncated record {record}"),
                ));
            }
            return Err(MeshError::at_byte(
                HEADER_LEN,
                format!(
                    "triangle count mismatch: header declares {count} triangles \
                     ({expected} bytes) but file has {} bytes",
                    bytes.len()
                ),
            ));
        }
    }
    if looks_ascii(bytes) {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| MeshError::at_byte(e.valid_up_to(), "ASCII STL is not valid UTF-8"))?;
        return parse_ascii(text);
    }
    Err(MeshError::at_byte(
        bytes.len(),
        "truncated record: file shorter than the 84-byte binary preamble",
    ))
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    bytes[start..].starts_with(b"solid")
}

fn parse_binary(bytes: &[u8], count: usize) -> Result<TriangleMesh, MeshError> {
    let mut triangles = Vec::with_capacity(count);
    for t in 0..count {
        let base = PREAMBLE_LEN + t * RECORD_LEN;
        let mut tri = [Point3::origin(); 3];
        for (k, vertex) in tri.iter_mut().enumerate() {
            // skip the 12-byte stored normal
            let off = base + 12 + k * 12;
            let mut c = [0.0f64; 3];
            for (axis, value) in c.iter_mut().enumerate() {
                let at = off + axis * 4;
                let raw = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                if !raw.is_finite() {
                    return Err(MeshError::at_byte(at, "non-finite coordinate"));
                }
                *value = raw as f64;
            }
            *vertex = Point3::from(c);
        }
        triangles.push(tri);
    }
    TriangleMesh::from_triangles(&triangles, "")
}

fn parse_ascii(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut triangles = Vec::new();
    let mut pending: Vec<Point3<f64>> = Vec::with_capacity(3);
    let mut in_facet = false;
    let mut name = String::new();
    let mut last_line = 0;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else { continue };
        match keyword {
            "solid" => name = tokens.collect::<Vec<_>>().join(" "),
            "facet" => {
                if in_facet {
                    return Err(MeshError::at_line(line_no, "nested facet"));
                }
                in_facet = true;
                pending.clear();
            }
            "outer" | "endloop" => {}
            "vertex" => {
                if !in_facet {
                    return Err(MeshError::at_line(line_no, "vertex outside facet"));
                }
                let coords: Vec<&str> = tokens.collect();
                if coords.len() != 3 {
                    return Err(MeshError::at_line(line_no, "vertex needs three coordinates"));
                }
                let mut c = [0.0; 3];
                for (slot, tok) in c.iter_mut().zip(&coords) {
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| MeshError::at_line(line_no, format!("bad number `{tok}`")))?;
                    if !slot.is_finite() {
                        return Err(MeshError::at_line(line_no, "non-finite coordinate"));
                    }
                }
                if pending.len() == 3 {
                    return Err(MeshError::at_line(line_no, "facet has more than three vertices"));
                }
                pending.push(Point3::from(c));
            }
            "endfacet" => {
                if pending.len() != 3 {
                    return Err(MeshError::at_line(
                        line_no,
                        format!("facet has {} vertices, expected 3", pending.len()),
                    ));
                }
                triangles.push([pending[0], pending[1], pending[2]]);
                in_facet = false;
            }
            "endsolid" => break,
            other => {
                return Err(MeshError::at_line(line_no, format!("unexpected token `{other}`")));
            }
        }
    }
    if in_facet {
        return Err(MeshError::at_line(last_line, "unterminated facet"));
    }
    TriangleMesh::from_triangles(&triangles, name)
}

/// Binary STL with recomputed normals. Coordinates are narrowed to `f32`.
pub fn write_stl_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREAMBLE_LEN + RECORD_LEN * mesh.face_count());
    let mut header = [0u8; HEADER_LEN];
    let label = b"binary stl";
    header[..label.len()].copy_from_slice(label);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.face_count() as u32).to_le_bytes());
    for f in 0..mesh.face_count() {
        let n = mesh.face_normals()[f];
        for c in [n.x, n.y, n.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for v in mesh.triangle(f) {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl_ascii(mesh: &TriangleMesh) -> String {
    let mut out = format!("solid {}\n", mesh.source_name());
    for f in 0..mesh.face_count() {
        let n = mesh.face_normals()[f];
        out.push_str(&format!("facet normal {:e} {:e} {:e}\n outer loop\n", n.x, n.y, n.z));
        for v in mesh.triangle(f) {
            out.push_str(&format!("  vertex {:?} {:?} {:?}\n", v.x, v.y, v.z));
        }
        out.push_str(" endloop\nendfacet\n");
    }
    out.push_str(&format!("endsolid {}\n", mesh.source_name()));
    out
}
