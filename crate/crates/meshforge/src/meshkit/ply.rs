//! Binary little-endian PLY for point sets: float32 x y z, optional float32
//! normals, optional uchar inside flag for occupancy-labeled samples.

use super::{MeshkitError, PlyParseError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub normals: Option<Vec<[f32; 3]>>,
    pub inside: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Guard for untrusted headers.
const MAX_POINTS: u64 = 1 << 28;

pub fn write_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.points.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if cloud.inside.is_some() {
        header.push_str("property uchar inside\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for i in 0..cloud.points.len() {
        for c in cloud.points[i] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(normals) = &cloud.normals {
            for c in normals[i] {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        if let Some(inside) = &cloud.inside {
            out.push(inside[i] as u8);
        }
    }
    out
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, MeshkitError> {
    let err = |message: String| PlyParseError { message };
    // Locate the header terminator.
    let marker = b"end_header\n";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| err("missing end_header".into()))?
        + marker.len();
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|e| err(format!("header not UTF-8: {e}")))?;
    let body = &bytes[header_end..];

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(err("missing ply magic".into()).into());
    }
    let mut count: Option<u64> = None;
    let mut properties: Vec<(String, String)> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, "1.0"] => {
                if *fmt != "binary_little_endian" {
                    return Err(err(format!("unsupported format {fmt}")).into());
                }
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                let n: u64 = n
                    .parse()
                    .map_err(|_| err(format!("bad vertex count {n}")))?;
                if n > MAX_POINTS {
                    return Err(err(format!("vertex count {n} too large")).into());
                }
                count = Some(n);
            }
            ["element", other, _] => {
                return Err(err(format!("unsupported element {other}")).into());
            }
            ["property", ty, name] => properties.push((ty.to_string(), name.to_string())),
            ["end_header"] => break,
            _ => return Err(err(format!("unrecognized header line `{line}`")).into()),
        }
    }
    let count = count.ok_or_else(|| err("missing element vertex".into()))? as usize;

    let expect_float = ["x", "y", "z"];
    if properties.len() < 3
        || properties[..3]
            .iter()
            .zip(expect_float)
            .any(|((ty, name), want)| ty != "float" || name != want)
    {
        return Err(err("first properties must be float x y z".into()).into());
    }
    let mut rest = &properties[3..];
    let has_normals = rest.len() >= 3
        && rest[..3]
            .iter()
            .zip(["nx", "ny", "nz"])
            .all(|((ty, name), want)| ty == "float" && name == want);
    if has_normals {
        rest = &rest[3..];
    }
    let has_inside = rest.len() == 1 && rest[0].0 == "uchar" && rest[0].1 == "inside";
    if has_inside {
        rest = &rest[1..];
    }
    if !rest.is_empty() {
        return Err(err(format!("unsupported property layout {properties:?}")).into());
    }

    let stride = 12 + if has_normals { 12 } else { 0 } + if has_inside { 1 } else { 0 };
    let need = count
        .checked_mul(stride)
        .ok_or_else(|| err("vertex count overflow".into()))?;
    if body.len() < need {
        return Err(err(format!(
            "payload too short: need {need} bytes, have {}",
            body.len()
        ))
        .into());
    }

    let mut points = Vec::with_capacity(count);
    let mut normals = has_normals.then(|| Vec::with_capacity(count));
    let mut inside = has_inside.then(|| Vec::with_capacity(count));
    let mut off = 0usize;
    let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().unwrap());
    for _ in 0..count {
        points.push([f32_at(off), f32_at(off + 4), f32_at(off + 8)]);
        off += 12;
        if let Some(ns) = &mut normals {
            ns.push([f32_at(off), f32_at(off + 4), f32_at(off + 8)]);
            off += 12;
        }
        if let Some(fs) = &mut inside {
            fs.push(body[off] != 0);
            off += 1;
        }
    }
    Ok(PointCloud {
        points,
        normals,
        inside,
    })
}
