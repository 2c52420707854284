//! Median-split triangle BVH for ray-parity occupancy queries.

use crate::mesh::{cross, dot, sub, Point3, TriangleMesh};

struct Node {
    bbox_min: Point3,
    bbox_max: Point3,
    /// Leaf: count > 0 and (start, count) index into `order`. Internal: the
    /// left child directly follows this node, `right` holds the right child.
    right: u32,
    start: u32,
    count: u32,
}

pub struct TriangleBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Point3; 3]>,
}

const LEAF_SIZE: usize = 8;

impl TriangleBvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Point3; 3]> = mesh
            .triangles
            .iter()
            .map(|t| {
                [
                    mesh.vertices[t[0] as usize],
                    mesh.vertices[t[1] as usize],
                    mesh.vertices[t[2] as usize],
                ]
            })
            .collect();
        let centroids: Vec<Point3> = tris
            .iter()
            .map(|t| {
                [
                    (t[0][0] + t[1][0] + t[2][0]) / 3.0,
                    (t[0][1] + t[1][1] + t[2][1]) / 3.0,
                    (t[0][2] + t[1][2] + t[2][2]) / 3.0,
                ]
            })
            .collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        }
        Self { nodes, order, tris }
    }

    /// Count ray/surface crossings for parity tests. Returns `None` when a
    /// hit lands too close to a triangle edge or the ray origin to be
    /// trusted.
    pub fn count_crossings(&self, origin: Point3, dir: Point3) -> Option<usize> {
        if self.nodes.is_empty() {
            return Some(0);
        }
        let inv = [1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]];
        let mut stack = vec![0usize];
        let mut crossings = 0usize;
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !ray_box(origin, inv, node.bbox_min, node.bbox_max) {
                continue;
            }
            if node.count > 0 {
                for k in 0..node.count {
                    let t = &self.tris[self.order[(node.start + k) as usize] as usize];
                    match ray_triangle(origin, dir, t) {
                        Hit::Miss => {}
                        Hit::Cross => crossings += 1,
                        Hit::Grazing => return None,
                    }
                }
            } else {
                stack.push(ni + 1);
                stack.push(node.right as usize);
            }
        }
        Some(crossings)
    }
}

fn build_node(
    tris: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bb_min = [f64::INFINITY; 3];
    let mut bb_max = [f64::NEG_INFINITY; 3];
    for &t in &order[start..start + count] {
        for p in &tris[t as usize] {
            for a in 0..3 {
                bb_min[a] = bb_min[a].min(p[a]);
                bb_max[a] = bb_max[a].max(p[a]);
            }
        }
    }
    let idx = nodes.len() as u32;
    nodes.push(Node {
        bbox_min: bb_min,
        bbox_max: bb_max,
        right: 0,
        start: start as u32,
        count: 0,
    });
    if count <= LEAF_SIZE {
        nodes[idx as usize].count = count as u32;
        return idx;
    }
    // Longest axis, median split.
    let mut axis = 0;
    for a in 1..3 {
        if bb_max[a] - bb_min[a] > bb_max[axis] - bb_min[axis] {
            axis = a;
        }
    }
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .partial_cmp(&centroids[b as usize][axis])
            .unwrap()
    });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    debug_assert_eq!(left, idx + 1);
    let right = build_node(tris, centroids, order, start + mid, count - mid, nodes);
    nodes[idx as usize].right = right;
    idx
}

fn ray_box(origin: Point3, inv_dir: Point3, lo: Point3, hi: Point3) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for a in 0..3 {
        let t1 = (lo[a] - origin[a]) * inv_dir[a];
        let t2 = (hi[a] - origin[a]) * inv_dir[a];
        let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        tmin = tmin.max(t1);
        tmax = tmax.min(t2);
        if tmin > tmax {
            return false;
        }
    }
    true
}

enum Hit {
    Miss,
    Cross,
    Grazing,
}

/// Double-sided Moller-Trumbore; hits within 1e-10 of an edge or the origin
/// are flagged as grazing so the caller can recast a perturbed ray.
fn ray_triangle(origin: Point3, dir: Point3, tri: &[Point3; 3]) -> Hit {
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let p = cross(dir, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-14 {
        return Hit::Miss;
    }
    let inv = 1.0 / det;
    let s = sub(origin, tri[0]);
    let u = dot(s, p) * inv;
    let q = cross(s, e1);
    let v = dot(dir, q) * inv;
    let t = dot(e2, q) * inv;
    let w = 1.0 - u - v;
    let eps = 1e-10;
    if u < -eps || v < -eps || w < -eps || t < -eps {
        return Hit::Miss;
    }
    if u < eps || v < eps || w < eps || t.abs() < 1e-12 {
        return Hit::Grazing;
    }
    Hit::Cross
}
