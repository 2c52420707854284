//! Smallest enclosing sphere (Welzl's algorithm) and unit-sphere
//! normalization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::mesh::{add, cross, distance, dot, norm, scale, sub, Point3, TriangleMesh};

use super::MeshkitError;

/// Relative slack for containment tests.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingSphere {
    pub center: Point3,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn contains(&self, p: Point3, slack: f64) -> bool {
        distance(self.center, p) <= self.radius * (1.0 + slack) + slack
    }
}

/// Exact minimal enclosing sphere, expected linear time.
///
/// The input is shuffled with a fixed-seed RNG so results are reproducible;
/// the support set never exceeds 4 points.
pub fn welzl_sphere(points: &[Point3]) -> Result<BoundingSphere, MeshkitError> {
    welzl_sphere_seeded(points, 0x5EED_BA11)
}

pub fn welzl_sphere_seeded(points: &[Point3], seed: u64) -> Result<BoundingSphere, MeshkitError> {
    if points.is_empty() {
        return Err(MeshkitError::EmptyPointSet);
    }
    let mut shuffled: Vec<Point3> = points.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    Ok(min_sphere(&shuffled, &mut Vec::new()))
}

/// Welzl recursion: the prefix loop runs iteratively, recursion depth is
/// bounded by the support size (at most 4 levels).
fn min_sphere(points: &[Point3], support: &mut Vec<Point3>) -> BoundingSphere {
    let mut ball = trivial_sphere(support);
    if support.len() == 4 {
        return ball;
    }
    for i in 0..points.len() {
        let p = points[i];
        if !ball.contains(p, EPS) {
            support.push(p);
            ball = min_sphere(&points[..i], support);
            support.pop();
        }
    }
    ball
}

/// Smallest sphere with the support points on its boundary, degenerate
/// configurations (collinear, coplanar) falling back to smaller supports.
fn trivial_sphere(support: &[Point3]) -> BoundingSphere {
    match support.len() {
        0 => BoundingSphere {
            center: [0.0; 3],
            radius: -1.0,
        },
        1 => BoundingSphere {
            center: support[0],
            radius: 0.0,
        },
        2 => sphere_from_2(support[0], support[1]),
        3 => sphere_from_3(support[0], support[1], support[2])
            .unwrap_or_else(|| best_subset_sphere(support)),
        4 => sphere_from_4(support[0], support[1], support[2], support[3])
            .unwrap_or_else(|| best_subset_sphere(support)),
        _ => unreachable!("support never exceeds 4"),
    }
}

/// Minimal sphere over all 2- and 3-point sub-supports that still contains
/// every support point. Used when the exact circumsphere is degenerate.
fn best_subset_sphere(support: &[Point3]) -> BoundingSphere {
    let mut best: Option<BoundingSphere> = None;
    let n = support.len();
    for i in 0..n {
        for j in i + 1..n {
            let s = sphere_from_2(support[i], support[j]);
            consider(&mut best, s, support);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if let Some(s) = sphere_from_3(support[i], support[j], support[k]) {
                    consider(&mut best, s, support);
                }
            }
        }
    }
    best.expect("degenerate support has a subset sphere")
}

fn consider(best: &mut Option<BoundingSphere>, s: BoundingSphere, pts: &[Point3]) {
    if pts.iter().all(|&p| s.contains(p, EPS))
        && best.is_none_or(|b| s.radius < b.radius) {
            *best = Some(s);
        }
}

fn sphere_from_2(a: Point3, b: Point3) -> BoundingSphere {
    let center = scale(add(a, b), 0.5);
    BoundingSphere {
        center,
        radius: distance(a, b) * 0.5,
    }
}

/// Circumcircle of a triangle, as a sphere centered in the triangle plane.
fn sphere_from_3(a: Point3, b: Point3, c: Point3) -> Option<BoundingSphere> {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let n = cross(ab, ac);
    let n2 = dot(n, n);
    if n2 < 1e-24 {
        return None;
    }
    // Center = a + (|ac|^2 (n x ab) + |ab|^2 (ac x n)) / (2 n.n)
    let term = add(
        scale(cross(n, ab), dot(ac, ac)),
        scale(cross(ac, n), dot(ab, ab)),
    );
    let offset = scale(term, -0.5 / n2);
    let center = sub(a, offset);
    Some(BoundingSphere {
        center,
        radius: distance(center, a),
    })
}

/// Circumsphere of four points, `None` when they are close to coplanar.
fn sphere_from_4(a: Point3, b: Point3, c: Point3, d: Point3) -> Option<BoundingSphere> {
    // Solve 2 (p_i - a) . x = |p_i|^2 - |a|^2 for i in {b, c, d}.
    let rows = [sub(b, a), sub(c, a), sub(d, a)];
    let rhs = [
        (dot(b, b) - dot(a, a)) * 0.5,
        (dot(c, c) - dot(a, a)) * 0.5,
        (dot(d, d) - dot(a, a)) * 0.5,
    ];
    let det = dot(rows[0], cross(rows[1], rows[2]));
    let scale_ref = norm(rows[0]) * norm(rows[1]) * norm(rows[2]);
    if det.abs() < 1e-12 * scale_ref.max(1e-30) {
        return None;
    }
    let x = dot(
        [rhs[0], rhs[1], rhs[2]],
        [
            cross(rows[1], rows[2])[0],
            cross(rows[2], rows[0])[0],
            cross(rows[0], rows[1])[0],
        ],
    ) / det;
    let y = dot(
        [rhs[0], rhs[1], rhs[2]],
        [
            cross(rows[1], rows[2])[1],
            cross(rows[2], rows[0])[1],
            cross(rows[0], rows[1])[1],
        ],
    ) / det;
    let z = dot(
        [rhs[0], rhs[1], rhs[2]],
        [
            cross(rows[1], rows[2])[2],
            cross(rows[2], rows[0])[2],
            cross(rows[0], rows[1])[2],
        ],
    ) / det;
    let center = [x, y, z];
    Some(BoundingSphere {
        center,
        radius: distance(center, a),
    })
}

/// Similarity transform taking original coordinates into the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizeTransform {
    pub center: Point3,
    pub radius: f64,
}

impl NormalizeTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            radius: 1.0,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        scale(sub(p, self.center), 1.0 / self.radius)
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        add(scale(p, self.radius), self.center)
    }
}

/// Translate and scale the mesh so its minimal enclosing sphere becomes the
/// unit sphere at the origin. Returns the transform that was applied.
pub fn normalize_to_unit_sphere(
    mesh: &TriangleMesh,
) -> Result<(TriangleMesh, NormalizeTransform), MeshkitError> {
    let sphere = welzl_sphere(&mesh.vertices)?;
    if sphere.radius < 1e-12 {
        return Err(MeshkitError::DegenerateMesh);
    }
    let transform = NormalizeTransform {
        center: sphere.center,
        radius: sphere.radius,
    };
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = transform.apply(*v);
    }
    Ok((out, transform))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn octahedron_corners() {
        let pts = vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        let s = welzl_sphere(&pts).unwrap();
        assert!(norm(s.center) < 1e-9);
        assert!((s.radius - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_point() {
        let s = welzl_sphere(&[[3.0, -2.0, 0.5]]).unwrap();
        assert_eq!(s.center, [3.0, -2.0, 0.5]);
        assert_eq!(s.radius, 0.0);
        assert!(welzl_sphere(&[]).is_err());
    }

    #[test]
    fn unit_cube_corners() {
        let mut pts = Vec::new();
        for c in 0..8 {
            pts.push([(c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64]);
        }
        let s = welzl_sphere(&pts).unwrap();
        for a in s.center {
            assert!((a - 0.5).abs() < 1e-9);
        }
        assert!((s.radius - 3.0f64.sqrt() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn duplicates_and_collinear() {
        let pts = vec![[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let s = welzl_sphere(&pts).unwrap();
        assert!((s.radius - 1.0).abs() < 1e-9);
        assert!(distance(s.center, [1.0, 0.0, 0.0]) < 1e-9);
    }

    #[test]
    fn normalize_cube() {
        let mut verts = Vec::new();
        for c in 0..8 {
            verts.push([(c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64]);
        }
        let mesh = TriangleMesh::new(verts, vec![[0, 1, 2]]);
        let (out, tf) = normalize_to_unit_sphere(&mesh).unwrap();
        let max_norm = out.vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-9);
        // Round trip through the transform.
        for (orig, new) in mesh.vertices.iter().zip(&out.vertices) {
            assert!(distance(tf.invert(*new), *orig) < 1e-12);
        }
        // Normalizing again is the identity up to 1e-9.
        let (_, tf2) = normalize_to_unit_sphere(&out).unwrap();
        assert!(norm(tf2.center) < 1e-9);
        assert!((tf2.radius - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_mesh_rejected() {
        let mesh = TriangleMesh::new(vec![[1.0, 1.0, 1.0]; 3], vec![[0, 1, 2]]);
        assert!(matches!(
            normalize_to_unit_sphere(&mesh),
            Err(MeshkitError::DegenerateMesh)
        ));
    }
}
