//! Implicit scalar-field query contract and concrete fields.
//!
//! A [`ScalarField`] maps batches of 3D points to scalar values with the sign
//! convention: negative strictly inside, positive strictly outside, zero on
//! the surface. Implementations are immutable after construction and safe to
//! query from any number of threads.

use thiserror::Error;

use crate::watertight::TsdfVolume;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("torus radii must satisfy 0 < minor < major, got major={major} minor={minor}")]
    InvalidTorusRadii { major: f64, minor: f64 },
    #[error("grid field needs at least 2 voxels per axis, got {0}x{1}x{2}")]
    GridTooSmall(u32, u32, u32),
}

/// Axis-aligned box. The default covers the normalized asset domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Aabb {
    fn default() -> Self {
        Self {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn cube(half_extent: f64) -> Self {
        Self {
            min: [-half_extent; 3],
            max: [half_extent; 3],
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Batched point -> value query. Batches of one are the single-point case.
///
/// Contract:
/// - deterministic and pure: identical batches yield identical outputs, with
///   no observable side effects;
/// - value < 0 strictly inside, > 0 strictly outside, 0 on the isosurface.
pub trait ScalarField: Sync {
    /// Declared bounding box of the interesting region. Queries outside stay
    /// legal and report positive (outside) values.
    fn bounds(&self) -> Aabb;

    /// Evaluate a batch of points. `values.len()` must equal `points.len()`.
    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]);

    /// An upper bound on the field's Lipschitz constant, when one is known.
    /// Exact distance fields return 1. Used to prove cells empty without
    /// querying them; `None` disables that pruning.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    fn value_at(&self, p: [f64; 3]) -> f64 {
        let mut out = [0.0];
        self.evaluate(std::slice::from_ref(&p), &mut out);
        out[0]
    }
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        (**self).evaluate(points, values)
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        (**self).lipschitz_bound()
    }
}

/// Exact signed distance to a sphere.
#[derive(Debug, Clone)]
pub struct SphereField {
    center: [f64; 3],
    radius: f64,
}

impl SphereField {
    pub fn new(center: [f64; 3], radius: f64) -> Result<Self, FieldError> {
        if radius <= 0.0 {
            return Err(FieldError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn unit(radius: f64) -> Result<Self, FieldError> {
        Self::new([0.0; 3], radius)
    }
}

pub fn sphere_field(center: [f64; 3], radius: f64) -> Result<SphereField, FieldError> {
    SphereField::new(center, radius)
}

impl ScalarField for SphereField {
    fn bounds(&self) -> Aabb {
        Aabb::default()
    }

    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        for (p, v) in points.iter().zip(values.iter_mut()) {
            let dx = p[0] - self.center[0];
            let dy = p[1] - self.center[1];
            let dz = p[2] - self.center[2];
            *v = (dx * dx + dy * dy + dz * dz).sqrt() - self.radius;
        }
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Exact signed distance to a torus with axis z.
#[derive(Debug, Clone)]
pub struct TorusField {
    major: f64,
    minor: f64,
}

impl TorusField {
    pub fn new(major_radius: f64, minor_radius: f64) -> Result<Self, FieldError> {
        if !(minor_radius > 0.0 && minor_radius < major_radius) {
            return Err(FieldError::InvalidTorusRadii {
                major: major_radius,
                minor: minor_radius,
            });
        }
        Ok(Self {
            major: major_radius,
            minor: minor_radius,
        })
    }
}

pub fn torus_field(major_radius: f64, minor_radius: f64) -> Result<TorusField, FieldError> {
    TorusField::new(major_radius, minor_radius)
}

impl ScalarField for TorusField {
    fn bounds(&self) -> Aabb {
        Aabb::default()
    }

    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        for (p, v) in points.iter().zip(values.iter_mut()) {
            let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - self.major;
            *v = (q * q + p[2] * p[2]).sqrt() - self.minor;
        }
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Pointwise min of two fields: the union of their interiors.
pub struct CsgUnion<A, B> {
    a: A,
    b: B,
}

/// Pointwise max of two fields: the intersection of their interiors.
pub struct CsgIntersection<A, B> {
    a: A,
    b: B,
}

pub fn csg_union<A: ScalarField, B: ScalarField>(a: A, b: B) -> CsgUnion<A, B> {
    CsgUnion { a, b }
}

pub fn csg_intersection<A: ScalarField, B: ScalarField>(a: A, b: B) -> CsgIntersection<A, B> {
    CsgIntersection { a, b }
}

fn merged_bounds(a: Aabb, b: Aabb) -> Aabb {
    let mut out = a;
    for i in 0..3 {
        out.min[i] = out.min[i].min(b.min[i]);
        out.max[i] = out.max[i].max(b.max[i]);
    }
    out
}

impl<A: ScalarField, B: ScalarField> ScalarField for CsgUnion<A, B> {
    fn bounds(&self) -> Aabb {
        merged_bounds(self.a.bounds(), self.b.bounds())
    }

    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        let mut other = vec![0.0; points.len()];
        self.a.evaluate(points, values);
        self.b.evaluate(points, &mut other);
        for (v, o) in values.iter_mut().zip(other) {
            *v = v.min(o);
        }
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.a.lipschitz_bound()?.max(self.b.lipschitz_bound()?))
    }
}

impl<A: ScalarField, B: ScalarField> ScalarField for CsgIntersection<A, B> {
    fn bounds(&self) -> Aabb {
        merged_bounds(self.a.bounds(), self.b.bounds())
    }

    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        let mut other = vec![0.0; points.len()];
        self.a.evaluate(points, values);
        self.b.evaluate(points, &mut other);
        for (v, o) in values.iter_mut().zip(other) {
            *v = v.max(o);
        }
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.a.lipschitz_bound()?.max(self.b.lipschitz_bound()?))
    }
}

/// Dense scalar grid with trilinear interpolation between sample points.
///
/// Samples live at voxel centers. Queries outside the volume bounds return
/// the truncation value (positive, outside by convention); inside the bounds
/// but beyond the outermost sample layer, coordinates clamp to the sample
/// lattice, so the field stays continuous.
#[derive(Debug, Clone)]
pub struct GridField {
    resolution: [u32; 3],
    origin: [f64; 3],
    voxel_size: f64,
    truncation: f64,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(
        resolution: [u32; 3],
        origin: [f64; 3],
        voxel_size: f64,
        truncation: f64,
        values: Vec<f64>,
    ) -> Result<Self, FieldError> {
        let [nx, ny, nz] = resolution;
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(FieldError::GridTooSmall(nx, ny, nz));
        }
        assert_eq!(values.len(), (nx as usize) * (ny as usize) * (nz as usize));
        Ok(Self {
            resolution,
            origin,
            voxel_size,
            truncation,
            values,
        })
    }

    /// Bridge a fused TSDF volume into the scalar-field interface.
    pub fn from_volume(volume: &TsdfVolume) -> Result<Self, FieldError> {
        Self::new(
            volume.resolution(),
            volume.origin(),
            volume.voxel_size(),
            volume.truncation(),
            volume.values().iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn resolution(&self) -> [u32; 3] {
        self.resolution
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// World position of the sample point (voxel center) at integer index.
    pub fn sample_position(&self, idx: [u32; 3]) -> [f64; 3] {
        [
            self.origin[0] + (idx[0] as f64 + 0.5) * self.voxel_size,
            self.origin[1] + (idx[1] as f64 + 0.5) * self.voxel_size,
            self.origin[2] + (idx[2] as f64 + 0.5) * self.voxel_size,
        ]
    }

    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        let [nx, ny, _] = self.resolution;
        self.values[(z * ny as usize + y) * nx as usize + x]
    }
}

impl ScalarField for GridField {
    fn bounds(&self) -> Aabb {
        let ext = [
            self.resolution[0] as f64 * self.voxel_size,
            self.resolution[1] as f64 * self.voxel_size,
            self.resolution[2] as f64 * self.voxel_size,
        ];
        Aabb::new(
            self.origin,
            [
                self.origin[0] + ext[0],
                self.origin[1] + ext[1],
                self.origin[2] + ext[2],
            ],
        )
    }

    fn evaluate(&self, points: &[[f64; 3]], values: &mut [f64]) {
        let bounds = self.bounds();
        for (p, out) in points.iter().zip(values.iter_mut()) {
            if !bounds.contains(*p) {
                *out = self.truncation;
                continue;
            }
            // Continuous coordinates in sample-lattice space.
            let mut c = [0.0f64; 3];
            let mut i0 = [0usize; 3];
            let mut frac = [0.0f64; 3];
            for a in 0..3 {
                c[a] = (p[a] - self.origin[a]) / self.voxel_size - 0.5;
                let max_idx = self.resolution[a] as f64 - 1.0;
                let clamped = c[a].clamp(0.0, max_idx);
                let base = clamped.floor().min(max_idx - 1.0).max(0.0);
                i0[a] = base as usize;
                frac[a] = clamped - base;
            }
            let (x, y, z) = (i0[0], i0[1], i0[2]);
            let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
            let c00 = self.at(x, y, z) * (1.0 - fx) + self.at(x + 1, y, z) * fx;
            let c10 = self.at(x, y + 1, z) * (1.0 - fx) + self.at(x + 1, y + 1, z) * fx;
            let c01 = self.at(x, y, z + 1) * (1.0 - fx) + self.at(x + 1, y, z + 1) * fx;
            let c11 = self.at(x, y + 1, z + 1) * (1.0 - fx) + self.at(x + 1, y + 1, z + 1) * fx;
            let c0 = c00 * (1.0 - fy) + c10 * fy;
            let c1 = c01 * (1.0 - fy) + c11 * fy;
            *out = c0 * (1.0 - fz) + c1 * fz;
        }
    }
}

/// Convenience alias matching the operation vocabulary.
pub fn grid_field_from_volume(volume: &TsdfVolume) -> Result<GridField, FieldError> {
    GridField::from_volume(volume)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_examples() {
        let f = sphere_field([0.0; 3], 1.0).unwrap();
        assert_eq!(f.value_at([0.0, 0.0, 0.0]), -1.0);
        assert_eq!(f.value_at([1.0, 0.0, 0.0]), 0.0);
        let f = sphere_field([0.0; 3], 0.8).unwrap();
        let expect = 3.0f64.sqrt() - 0.8;
        assert!((f.value_at([1.0, 1.0, 1.0]) - expect).abs() < 1e-15);
        assert_eq!(
            sphere_field([0.0; 3], 0.0).unwrap_err(),
            FieldError::NonPositiveRadius(0.0)
        );
        assert!(sphere_field([0.0; 3], -1.0).is_err());
    }

    #[test]
    fn torus_examples() {
        let f = torus_field(0.6, 0.25).unwrap();
        assert!((f.value_at([0.6, 0.0, 0.0]) + 0.25).abs() < 1e-15);
        assert!((f.value_at([0.85, 0.0, 0.0])).abs() < 1e-15);
        assert!((f.value_at([0.0, 0.0, 0.0]) - 0.35).abs() < 1e-15);
        assert!(torus_field(0.25, 0.6).is_err());
        assert!(torus_field(0.6, 0.0).is_err());
    }

    #[test]
    fn csg_examples() {
        let a = sphere_field([-0.3, 0.0, 0.0], 0.5).unwrap();
        let b = sphere_field([0.3, 0.0, 0.0], 0.5).unwrap();
        let u = csg_union(a.clone(), b.clone());
        assert!((u.value_at([0.0, 0.0, 0.0]) + 0.2).abs() < 1e-15);
        // Inside sphere a, far from b: union takes a's value.
        let pa = [-0.3, 0.0, 0.0];
        assert_eq!(u.value_at(pa), a.value_at(pa));
        // Intersection of a field with itself is the field.
        let i = csg_intersection(a.clone(), a.clone());
        for p in [[0.1, 0.2, 0.3], [-0.4, 0.0, 0.1], [0.9, 0.9, 0.9]] {
            assert_eq!(i.value_at(p), a.value_at(p));
        }
    }

    #[test]
    fn grid_constant_and_outside() {
        let g = GridField::new([2, 2, 2], [-1.0; 3], 1.0, 0.5, vec![-1.0; 8]).unwrap();
        assert_eq!(g.value_at([0.0, 0.0, 0.0]), -1.0);
        assert_eq!(g.value_at([-0.9, 0.3, 0.7]), -1.0);
        // Outside the volume bounds: truncation.
        assert_eq!(g.value_at([2.0, 0.0, 0.0]), 0.5);
        assert!(GridField::new([1, 2, 2], [0.0; 3], 1.0, 0.5, vec![0.0; 4]).is_err());
    }

    #[test]
    fn grid_matches_sphere_at_centers() {
        let sphere = sphere_field([0.0; 3], 0.8).unwrap();
        let n = 8u32;
        let voxel = 2.0 / n as f64;
        let mut values = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = [
                        -1.0 + (x as f64 + 0.5) * voxel,
                        -1.0 + (y as f64 + 0.5) * voxel,
                        -1.0 + (z as f64 + 0.5) * voxel,
                    ];
                    values.push(sphere.value_at(p));
                }
            }
        }
        let g = GridField::new([n; 3], [-1.0; 3], voxel, 1.0, values).unwrap();
        for idx in [[0u32, 0, 0], [3, 4, 5], [7, 7, 7], [2, 6, 1]] {
            let p = g.sample_position(idx);
            assert_eq!(g.value_at(p), sphere.value_at(p));
        }
    }

    #[test]
    fn grid_continuity_across_voxel_boundaries() {
        // Linear ramp along x is reproduced exactly, so crossing voxel
        // boundaries cannot jump.
        let n = 4u32;
        let mut values = Vec::new();
        for _z in 0..n {
            for _y in 0..n {
                for x in 0..n {
                    values.push(x as f64);
                }
            }
        }
        let g = GridField::new([n; 3], [0.0; 3], 1.0, 9.0, values).unwrap();
        let mut prev = None;
        let mut x = 0.5;
        while x < 3.5 {
            let v = g.value_at([x, 2.0, 2.0]);
            if let Some(p) = prev {
                assert!((v - p) <= 1e-3 + 1e-12, "jump at x={x}");
            }
            prev = Some(v);
            x += 1e-3;
        }
    }

    #[test]
    fn parallel_batch_matches_sequential() {
        use rayon::prelude::*;
        let f = torus_field(0.6, 0.25).unwrap();
        let pts: Vec<[f64; 3]> = (0..10_000)
            .map(|i| {
                let t = i as f64 * 0.001;
                [t.sin(), (2.0 * t).cos() * 0.7, (t * 0.37).sin() * 0.9]
            })
            .collect();
        let mut seq = vec![0.0; pts.len()];
        f.evaluate(&pts, &mut seq);
        let mut par = vec![0.0; pts.len()];
        par.par_chunks_mut(128)
            .zip(pts.par_chunks(128))
            .for_each(|(out, chunk)| f.evaluate(chunk, out));
        assert_eq!(
            seq.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            par.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn analytic_distance_matches_ray_root() {
        // |value(p)| equals the Euclidean distance to the zero set. Walk the
        // steepest-descent direction to find the nearest root by bisection.
        let fields: Vec<(&str, Box<dyn ScalarField>)> = vec![
            ("sphere", Box::new(sphere_field([0.1, -0.2, 0.05], 0.6).unwrap())),
            ("torus", Box::new(torus_field(0.6, 0.25).unwrap())),
        ];
        let mut rng = 0x12345u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for (name, f) in &fields {
            for _ in 0..50 {
                let p = [next(), next(), next()];
                let v = f.value_at(p);
                if v.abs() < 1e-3 {
                    continue;
                }
                // Gradient by central differences.
                let h = 1e-6;
                let mut g = [0.0; 3];
                for a in 0..3 {
                    let mut pp = p;
                    let mut pm = p;
                    pp[a] += h;
                    pm[a] -= h;
                    g[a] = (f.value_at(pp) - f.value_at(pm)) / (2.0 * h);
                }
                let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if gn < 1e-9 {
                    continue;
                }
                let dir = [-g[0] / gn * v.signum(), -g[1] / gn * v.signum(), -g[2] / gn * v.signum()];
                // Bracket the root along dir.
                let mut lo = 0.0f64;
                let mut hi = v.abs() * 2.0 + 1e-3;
                let at = |t: f64| {
                    f.value_at([p[0] + dir[0] * t, p[1] + dir[1] * t, p[2] + dir[2] * t])
                };
                if at(lo).signum() == at(hi).signum() {
                    continue;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid).signum() == at(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let dist = 0.5 * (lo + hi);
                assert!(
                    (dist - v.abs()).abs() < 1e-6,
                    "{name}: |value|={} but nearest root at {}",
                    v.abs(),
                    dist
                );
            }
        }
    }
}
