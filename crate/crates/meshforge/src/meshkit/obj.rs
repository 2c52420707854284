//! Wavefront OBJ subset: v / vn / vt / f with all index forms, n-gon fan
//! triangulation, `usemtl` counted for the material gate, `mtllib`, `o`,
//! `g`, `s` and unknown keywords ignored.

use std::collections::BTreeSet;

use crate::mesh::{Point3, TriangleMesh};

use super::{MeshkitError, ObjParseError};

#[derive(Debug, Clone)]
pub struct ObjDocument {
    pub mesh: TriangleMesh,
    /// Distinct `usemtl` names.
    pub material_count: usize,
    /// Polygon count before fan triangulation.
    pub source_polygon_count: usize,
}

fn parse_float(tok: &str, line: usize) -> Result<f64, ObjParseError> {
    let v: f64 = tok.parse().map_err(|_| ObjParseError {
        line,
        message: format!("invalid number `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(ObjParseError {
            line,
            message: format!("non-finite coordinate `{tok}`"),
        });
    }
    Ok(v)
}

/// Resolve a 1-based or negative OBJ index against the current list length.
fn resolve_index(raw: i64, len: usize, line: usize, what: &str) -> Result<u32, ObjParseError> {
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        len as i64 + raw
    } else {
        return Err(ObjParseError {
            line,
            message: format!("{what} index 0 is not valid"),
        });
    };
    if idx < 0 || idx >= len as i64 {
        return Err(ObjParseError {
            line,
            message: format!("{what} index {raw} out of range (have {len})"),
        });
    }
    Ok(idx as u32)
}

pub fn parse_obj_document(bytes: &[u8]) -> Result<ObjDocument, MeshkitError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ObjParseError {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;

    let mut vertices: Vec<Point3> = Vec::new();
    let mut normals: Vec<Point3> = Vec::new();
    let mut texcoord_count = 0usize;
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut corner_normals: Vec<Option<u32>> = Vec::new();
    let mut materials: BTreeSet<String> = BTreeSet::new();
    let mut source_polygon_count = 0usize;

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let keyword = toks.next().unwrap();
        match keyword {
            "v" => {
                let mut c = [0.0f64; 3];
                for a in &mut c {
                    let tok = toks.next().ok_or_else(|| ObjParseError {
                        line: line_no,
                        message: "vertex needs 3 coordinates".into(),
                    })?;
                    *a = parse_float(tok, line_no)?;
                }
                // Optional w / color components are ignored.
                vertices.push(c);
            }
            "vn" => {
                let mut c = [0.0f64; 3];
                for a in &mut c {
                    let tok = toks.next().ok_or_else(|| ObjParseError {
                        line: line_no,
                        message: "normal needs 3 coordinates".into(),
                    })?;
                    *a = parse_float(tok, line_no)?;
                }
                normals.push(c);
            }
            "vt" => {
                let tok = toks.next().ok_or_else(|| ObjParseError {
                    line: line_no,
                    message: "texcoord needs at least 1 coordinate".into(),
                })?;
                parse_float(tok, line_no)?;
                texcoord_count += 1;
            }
            "f" => {
                let mut corners: Vec<(u32, Option<u32>)> = Vec::new();
                for tok in toks {
                    let mut parts = tok.split('/');
                    let v_tok = parts.next().unwrap_or("");
                    let raw: i64 = v_tok.parse().map_err(|_| ObjParseError {
                        line: line_no,
                        message: format!("malformed face corner `{tok}`"),
                    })?;
                    let v_idx = resolve_index(raw, vertices.len(), line_no, "vertex")?;
                    // Optional texcoord.
                    let mut n_idx = None;
                    if let Some(t_tok) = parts.next() {
                        if !t_tok.is_empty() {
                            let raw_t: i64 = t_tok.parse().map_err(|_| ObjParseError {
                                line: line_no,
                                message: format!("malformed face corner `{tok}`"),
                            })?;
                            resolve_index(raw_t, texcoord_count, line_no, "texcoord")?;
                        }
                        if let Some(n_tok) = parts.next() {
                            if !n_tok.is_empty() {
                                let raw_n: i64 = n_tok.parse().map_err(|_| ObjParseError {
                                    line: line_no,
                                    message: format!("malformed face corner `{tok}`"),
                                })?;
                                n_idx =
                                    Some(resolve_index(raw_n, normals.len(), line_no, "normal")?);
                            }
                            if parts.next().is_some() {
                                return Err(ObjParseError {
                                    line: line_no,
                                    message: format!("malformed face corner `{tok}`"),
                                }
                                .into());
                            }
                        }
                    }
                    corners.push((v_idx, n_idx));
                }
                if corners.len() < 3 {
                    return Err(ObjParseError {
                        line: line_no,
                        message: format!("face needs at least 3 corners, got {}", corners.len()),
                    }
                    .into());
                }
                source_polygon_count += 1;
                // Fan triangulation: (0, i, i+1).
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0].0, corners[k].0, corners[k + 1].0]);
                    corner_normals.push(corners[0].1);
                    corner_normals.push(corners[k].1);
                    corner_normals.push(corners[k + 1].1);
                }
            }
            "usemtl" => {
                let name = toks.collect::<Vec<_>>().join(" ");
                materials.insert(name);
            }
            // Structure and library statements carry no geometry.
            "mtllib" | "o" | "g" | "s" | "l" | "p" => {}
            _ => {}
        }
    }

    // Attach per-vertex normals only when every corner references the
    // matching normal slot (the layout our writer produces).
    let has_full_normals = normals.len() == vertices.len()
        && !triangles.is_empty()
        && corner_normals
            .iter()
            .zip(triangles.iter().flat_map(|t| t.iter()))
            .all(|(n, v)| *n == Some(*v));
    let mut mesh = TriangleMesh::new(vertices, triangles);
    if has_full_normals {
        mesh.normals = Some(normals);
    }
    Ok(ObjDocument {
        mesh,
        material_count: materials.len(),
        source_polygon_count,
    })
}

/// Format with 9 significant digits; quantized-lattice coordinates survive a
/// write/parse round trip exactly.
pub(crate) fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (8 - exp).clamp(0, 17) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub fn write_obj(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!(
            "v {} {} {}\n",
            fmt_sig(v[0]),
            fmt_sig(v[1]),
            fmt_sig(v[2])
        ));
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            out.push_str(&format!(
                "vn {} {} {}\n",
                fmt_sig(n[0]),
                fmt_sig(n[1]),
                fmt_sig(n[2])
            ));
        }
        for t in &mesh.triangles {
            out.push_str(&format!(
                "f {}//{} {}//{} {}//{}\n",
                t[0] + 1,
                t[0] + 1,
                t[1] + 1,
                t[1] + 1,
                t[2] + 1,
                t[2] + 1
            ));
        }
    } else {
        for t in &mesh.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
    }
    out.into_bytes()
}
