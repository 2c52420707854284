//! Mesh I/O, bounding-sphere normalization, statistics, and the dataset
//! filter gate.

mod obj;
mod ply;
mod welzl;

pub use obj::{parse_obj_document, write_obj, ObjDocument};
pub use ply::{parse_ply, write_ply, PointCloud};
pub use welzl::{
    normalize_to_unit_sphere, welzl_sphere, welzl_sphere_seeded, BoundingSphere,
    NormalizeTransform,
};

use serde::Serialize;
use thiserror::Error;

use crate::isosurface::verify_watertight;
use crate::mesh::TriangleMesh;

/// Face-count window accepted by the filter (inclusive).
pub const FACE_COUNT_MIN: usize = 500;
pub const FACE_COUNT_MAX: usize = 80_000;
/// Meshes with more than this many materials are rejected.
pub const MATERIAL_COUNT_MAX: usize = 100;

#[derive(Debug, Error)]
pub enum MeshkitError {
    #[error(transparent)]
    ObjParse(#[from] ObjParseError),
    #[error(transparent)]
    PlyParse(#[from] PlyParseError),
    #[error("empty point set")]
    EmptyPointSet,
    #[error("mesh is degenerate (zero bounding radius), cannot normalize")]
    DegenerateMesh,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
#[error("OBJ parse error at line {line}: {message}")]
pub struct ObjParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
#[error("PLY parse error: {message}")]
pub struct PlyParseError {
    pub message: String,
}

/// Exact mesh statistics for reports and the filter gate.
///
/// `face_count` counts triangles after fan triangulation;
/// `source_polygon_count` is the pre-triangulation polygon count.
#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub face_count: usize,
    pub source_polygon_count: usize,
    pub vertex_count: usize,
    pub material_count: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub is_closed: bool,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub bounding_sphere: BoundingSphere,
}

/// Compute stats for a triangle mesh plus its source metadata.
pub fn mesh_stats(
    mesh: &TriangleMesh,
    material_count: usize,
    source_polygon_count: usize,
) -> Result<MeshStats, MeshkitError> {
    let report = verify_watertight(mesh);
    let (bbox_min, bbox_max) = mesh.bbox().unwrap_or(([0.0; 3], [0.0; 3]));
    let bounding_sphere = if mesh.vertices.is_empty() {
        BoundingSphere {
            center: [0.0; 3],
            radius: 0.0,
        }
    } else {
        welzl_sphere(&mesh.vertices)?
    };
    Ok(MeshStats {
        face_count: mesh.triangles.len(),
        source_polygon_count,
        vertex_count: mesh.vertices.len(),
        material_count,
        boundary_edges: report.boundary_edge_count,
        non_manifold_edges: report.non_manifold_edge_count,
        is_closed: report.is_closed,
        bbox_min,
        bbox_max,
        bounding_sphere,
    })
}

/// Parse an OBJ file and compute its statistics in one go.
pub fn parse_obj(bytes: &[u8]) -> Result<(TriangleMesh, MeshStats), MeshkitError> {
    let doc = parse_obj_document(bytes)?;
    let stats = mesh_stats(&doc.mesh, doc.material_count, doc.source_polygon_count)?;
    Ok((doc.mesh, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    FaceCountBelowMin,
    FaceCountAboveMax,
    MaterialCountAboveMax,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReason {
    pub rule: FilterRule,
    pub measured: u64,
    pub limit: u64,
}

/// Outcome of the dataset filter. `accepted` holds exactly when `reasons` is
/// empty; rules that need data unavailable here are listed in
/// `not_evaluated`.
#[derive(Debug, Clone, Serialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub reasons: Vec<FilterReason>,
    pub not_evaluated: Vec<&'static str>,
}

/// Apply the numeric dataset rules: face count within [500, 80000]
/// inclusive, at most 100 materials. The pure-color rule needs DCC material
/// graphs and is reported as not evaluated.
pub fn filter_mesh(stats: &MeshStats) -> FilterVerdict {
    let mut reasons = Vec::new();
    if stats.face_count < FACE_COUNT_MIN {
        reasons.push(FilterReason {
            rule: FilterRule::FaceCountBelowMin,
            measured: stats.face_count as u64,
            limit: FACE_COUNT_MIN as u64,
        });
    }
    if stats.face_count > FACE_COUNT_MAX {
        reasons.push(FilterReason {
            rule: FilterRule::FaceCountAboveMax,
            measured: stats.face_count as u64,
            limit: FACE_COUNT_MAX as u64,
        });
    }
    if stats.material_count > MATERIAL_COUNT_MAX {
        reasons.push(FilterReason {
            rule: FilterRule::MaterialCountAboveMax,
            measured: stats.material_count as u64,
            limit: MATERIAL_COUNT_MAX as u64,
        });
    }
    FilterVerdict {
        accepted: reasons.is_empty(),
        reasons,
        not_evaluated: vec!["pure_color"],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with(face_count: usize, material_count: usize) -> MeshStats {
        MeshStats {
            face_count,
            source_polygon_count: face_count,
            vertex_count: 0,
            material_count,
            boundary_edges: 0,
            non_manifold_edges: 0,
            is_closed: true,
            bbox_min: [0.0; 3],
            bbox_max: [0.0; 3],
            bounding_sphere: BoundingSphere {
                center: [0.0; 3],
                radius: 1.0,
            },
        }
    }

    #[test]
    fn filter_boundaries() {
        let v = filter_mesh(&stats_with(499, 0));
        assert!(!v.accepted);
        assert_eq!(v.reasons.len(), 1);
        assert_eq!(v.reasons[0].rule, FilterRule::FaceCountBelowMin);
        assert_eq!(v.reasons[0].measured, 499);

        let v = filter_mesh(&stats_with(500, 100));
        assert!(v.accepted);
        assert!(v.reasons.is_empty());

        let v = filter_mesh(&stats_with(1000, 101));
        assert!(!v.accepted);
        assert_eq!(v.reasons[0].rule, FilterRule::MaterialCountAboveMax);
        assert_eq!(v.reasons[0].measured, 101);

        let v = filter_mesh(&stats_with(80_000, 0));
        assert!(v.accepted);
        let v = filter_mesh(&stats_with(80_001, 0));
        assert!(!v.accepted);
        assert_eq!(v.reasons[0].rule, FilterRule::FaceCountAboveMax);
    }

    #[test]
    fn stats_from_obj() {
        let src = b"usemtl a\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n\
f 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
        let (_, stats) = parse_obj(src).unwrap();
        assert_eq!(stats.face_count, 4);
        assert_eq!(stats.vertex_count, 4);
        assert_eq!(stats.material_count, 1);
        assert_eq!(stats.boundary_edges, 0);
        assert!(stats.is_closed);
    }
}
