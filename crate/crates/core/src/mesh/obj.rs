//! Wavefront OBJ subset: `v` and `f` statements.

use std::collections::BTreeMap;

use nalgebra::Point3;

use super::{MeshError, TriangleMesh, VertexWelder};

/// Statements other than `v`/`f` that were skipped, keyed by keyword.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjStats {
    pub ignored: BTreeMap<String, usize>,
}

impl ObjStats {
    pub fn ignored_total(&self) -> usize {
        self.ignored.values().sum()
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    parse_obj_detailed(text).map(|(mesh, _)| mesh)
}

/// Parses `v x y z` and `f i j k ...` lines; polygons are fan-triangulated from
/// their first vertex. Indices are 1-based, negative indices count back from
/// the latest vertex, and `i/t/n` forms use only the position index.
pub fn parse_obj_detailed(text: &str) -> Result<(TriangleMesh, ObjStats), MeshError> {
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut stats = ObjStats::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else { continue };
        match keyword {
            "v" => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| MeshError::at_line(line_no, "vertex needs three coordinates"))?;
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| MeshError::at_line(line_no, format!("bad number `{tok}`")))?;
                    if !slot.is_finite() {
                        return Err(MeshError::at_line(line_no, "non-finite coordinate"));
                    }
                }
                positions.push(Point3::from(c));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw_index: i64 = head
                        .parse()
                        .map_err(|_| MeshError::at_line(line_no, format!("bad face index `{tok}`")))?;
                    let resolved = match raw_index {
                        i if i > 0 => i - 1,
                        i if i < 0 => positions.len() as i64 + i,
                        _ => -1,
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(MeshError::at_line(
                            line_no,
                            format!("index out of range at line {line_no}: {raw_index}"),
                        ));
                    }
                    corners.push(resolved as usize);
                }
                if corners.len() < 3 {
                    return Err(MeshError::at_line(line_no, "face needs at least three vertices"));
                }
                polygons.push((line_no, corners));
            }
            other => *stats.ignored.entry(other.to_string()).or_default() += 1,
        }
    }

    let mut welder = VertexWelder::default();
    let remap: Vec<u32> = positions.iter().map(|&p| welder.index(p)).collect();
    let mut faces = Vec::new();
    for (_, corners) in &polygons {
        for k in 1..corners.len() - 1 {
            faces.push([remap[corners[0]], remap[corners[k]], remap[corners[k + 1]]]);
        }
    }
    let mesh = TriangleMesh::new(welder.vertices, faces, "")?;
    Ok((mesh, stats))
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        out.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
    }
    for f in mesh.faces() {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out
}
