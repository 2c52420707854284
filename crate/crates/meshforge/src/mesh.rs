//! Indexed triangle mesh, the exchange type between all modules.

use std::collections::HashMap;

pub type Point3 = [f64; 3];

/// Float-coordinate vertices plus a triangle index list.
///
/// Triangles are counter-clockwise seen from outside; closed meshes produced
/// by this crate have outward normals, so the signed volume is positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex normals, same length as `vertices` when present.
    pub normals: Option<Vec<Point3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles,
            normals: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Axis-aligned bounding box, `None` for an empty vertex set.
    pub fn bbox(&self) -> Option<(Point3, Point3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        let mut lo = first;
        let mut hi = first;
        for v in it {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    /// Signed volume enclosed by the mesh, via the divergence theorem over
    /// triangle tetrahedra. Positive for closed meshes with outward normals.
    pub fn signed_volume(&self) -> f64 {
        let mut vol = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize];
            let b = self.vertices[t[1] as usize];
            let c = self.vertices[t[2] as usize];
            vol += dot(a, cross(b, c));
        }
        vol / 6.0
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        let a = self.vertices[i as usize];
        let b = self.vertices[j as usize];
        let c = self.vertices[k as usize];
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Number of connected components of the triangle adjacency graph
    /// (triangles connected through shared vertices).
    pub fn connected_components(&self) -> usize {
        if self.triangles.is_empty() {
            return 0;
        }
        // Union-find over vertices, then count distinct roots used by triangles.
        let n = self.vertices.len();
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for t in &self.triangles {
            let r0 = find(&mut parent, t[0]);
            let r1 = find(&mut parent, t[1]);
            let r2 = find(&mut parent, t[2]);
            parent[r1 as usize] = r0;
            parent[r2 as usize] = r0;
        }
        let mut roots = std::collections::HashSet::new();
        for t in &self.triangles {
            let r = find(&mut parent, t[0]);
            roots.insert(r);
        }
        roots.len()
    }

    /// Canonical triangle soup: per-triangle vertex positions, rotated so the
    /// lexicographically smallest vertex comes first (cyclic order kept),
    /// then sorted. Two meshes triangulating the same surface with the same
    /// cell marcher compare equal regardless of vertex emission order.
    pub fn canonical_soup(&self) -> Vec<[[f64; 3]; 3]> {
        let key = |p: &Point3| (p[0].to_bits(), p[1].to_bits(), p[2].to_bits());
        let mut soup: Vec<[[f64; 3]; 3]> = self
            .triangles
            .iter()
            .map(|t| {
                let p = [
                    self.vertices[t[0] as usize],
                    self.vertices[t[1] as usize],
                    self.vertices[t[2] as usize],
                ];
                let mut best = 0;
                for i in 1..3 {
                    if key(&p[i]) < key(&p[best]) {
                        best = i;
                    }
                }
                [p[best], p[(best + 1) % 3], p[(best + 2) % 3]]
            })
            .collect();
        soup.sort_by(|a, b| {
            let ka: Vec<_> = a.iter().map(key).collect();
            let kb: Vec<_> = b.iter().map(key).collect();
            ka.cmp(&kb)
        });
        soup
    }

    /// Merge vertices with bit-identical coordinates and drop triangles that
    /// become degenerate. Used when concatenating meshes.
    pub fn dedup_vertices(&mut self) {
        let mut map: HashMap<(u64, u64, u64), u32> = HashMap::new();
        let mut remap = vec![0u32; self.vertices.len()];
        let mut kept: Vec<Point3> = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let k = (v[0].to_bits(), v[1].to_bits(), v[2].to_bits());
            let idx = *map.entry(k).or_insert_with(|| {
                kept.push(*v);
                (kept.len() - 1) as u32
            });
            remap[i] = idx;
        }
        self.vertices = kept;
        self.normals = None;
        self.triangles.retain_mut(|t| {
            *t = [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]];
            t[0] != t[1] && t[1] != t[2] && t[0] != t[2]
        });
    }

    /// Append another mesh (indices offset), without welding.
    pub fn append(&mut self, other: &TriangleMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.normals = None;
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    }
}

pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}
