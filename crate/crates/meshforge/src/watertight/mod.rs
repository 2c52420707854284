//! Watertight envelope conversion.
//!
//! An arbitrary mesh (open, self-intersecting, badly oriented) is turned
//! into a closed manifold envelope: orthographic depth maps are rendered
//! from directions spread over the sphere, each map is morphologically
//! closed to fill pinholes, the maps are fused into a truncated
//! signed-distance volume with an outward half-voxel bias, and the zero set
//! is re-extracted with the sparse marcher. Interior structure is discarded
//! by construction; only the exterior envelope survives.

mod volume;

pub use volume::{TsdfVolume, VolumeError, VOLUME_MAGIC, VOLUME_VERSION};

use rayon::prelude::*;
use thiserror::Error;

use crate::field::GridField;
use crate::isosurface::{extract, ExtractionConfig, IsosurfaceError};
use crate::mesh::{cross, dot, normalize, TriangleMesh};

/// Half extent of the render/fusion domain; leaves margin around the unit
/// bounding sphere so the envelope never touches the domain boundary.
pub const DOMAIN_HALF_EXTENT: f64 = 1.05;

#[derive(Debug, Error)]
pub enum WatertightError {
    #[error("need at least 4 views, got {0}")]
    TooFewViews(usize),
    #[error("closing window must be odd and >= 1, got {0}")]
    BadWindow(u32),
    #[error("depth resolution must be >= 64, got {0}")]
    BadDepthResolution(u32),
    #[error("volume resolution must be a power of two >= 32, got {0}")]
    BadVolumeResolution(u32),
    #[error("truncation must be positive, got {0}")]
    BadTruncation(f64),
    #[error("mesh exceeds the normalized domain (max coordinate {0:.4}); normalize it first")]
    NotNormalized(f64),
    #[error(transparent)]
    Extraction(#[from] IsosurfaceError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
}

/// Orthographic depth map of the mesh seen along `forward`.
///
/// Depth is distance from the near plane (tangent to the domain sphere) along
/// the view direction; pixels that see no geometry hold `+infinity`.
#[derive(Debug, Clone)]
pub struct DepthView {
    pub forward: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
    pub resolution: u32,
    pub pixel_size: f64,
    pub depth: Vec<f32>,
}

impl DepthView {
    pub fn depth_at(&self, ix: u32, iy: u32) -> f32 {
        self.depth[(iy * self.resolution + ix) as usize]
    }
}

/// Deterministic, near-uniform view directions.
///
/// 12 gives the icosahedron vertices and 42 the once-subdivided icosahedron;
/// other counts fall back to a Fibonacci sphere lattice.
pub fn view_directions(count: usize) -> Vec<[f64; 3]> {
    let mut dirs = match count {
        12 => icosphere_vertices(0),
        42 => icosphere_vertices(1),
        162 => icosphere_vertices(2),
        n => fibonacci_sphere(n),
    };
    dirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dirs
}

fn icosphere_vertices(subdivisions: u32) -> Vec<[f64; 3]> {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoints.entry(key).or_insert_with(|| {
                    let m = normalize([
                        (verts[a][0] + verts[b][0]) / 2.0,
                        (verts[a][1] + verts[b][1]) / 2.0,
                        (verts[a][2] + verts[b][2]) / 2.0,
                    ]);
                    verts.push(m);
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    verts
}

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let theta = golden * i as f64;
            [r * theta.cos(), y, r * theta.sin()]
        })
        .collect()
}

fn orthonormal_frame(direction: [f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let forward = normalize(direction);
    let hint = if forward[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let right = normalize(cross(hint, forward));
    let up = cross(forward, right);
    (forward, right, up)
}

/// Render an orthographic depth map of `mesh` looking along `direction`.
///
/// Rasterization is double-sided: winding is ignored so broken orientation
/// cannot hide geometry. An empty mesh renders to an all-infinity image.
pub fn render_depth(
    mesh: &TriangleMesh,
    direction: [f64; 3],
    resolution: u32,
) -> Result<DepthView, WatertightError> {
    if resolution < 64 {
        return Err(WatertightError::BadDepthResolution(resolution));
    }
    let (forward, right, up) = orthonormal_frame(direction);
    let half = DOMAIN_HALF_EXTENT;
    let pixel_size = 2.0 * half / resolution as f64;
    let mut depth = vec![f32::INFINITY; (resolution * resolution) as usize];

    // Project vertices into the view frame.
    let projected: Vec<[f64; 3]> = mesh
        .vertices
        .iter()
        .map(|&p| [dot(p, right), dot(p, up), dot(p, forward) + half])
        .collect();

    for t in &mesh.triangles {
        let a = projected[t[0] as usize];
        let b = projected[t[1] as usize];
        let c = projected[t[2] as usize];
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if area.abs() < 1e-14 {
            continue;
        }
        let min_u = a[0].min(b[0]).min(c[0]);
        let max_u = a[0].max(b[0]).max(c[0]);
        let min_v = a[1].min(b[1]).min(c[1]);
        let max_v = a[1].max(b[1]).max(c[1]);
        let to_px = |w: f64| ((w + half) / pixel_size - 0.5).round() as i64;
        let ix0 = to_px(min_u).max(0);
        let ix1 = to_px(max_u).min(resolution as i64 - 1);
        let iy0 = to_px(min_v).max(0);
        let iy1 = to_px(max_v).min(resolution as i64 - 1);
        for iy in iy0..=iy1 {
            let v = -half + (iy as f64 + 0.5) * pixel_size;
            for ix in ix0..=ix1 {
                let u = -half + (ix as f64 + 0.5) * pixel_size;
                let w0 = (b[0] - a[0]) * (v - a[1]) - (b[1] - a[1]) * (u - a[0]);
                let w1 = (c[0] - b[0]) * (v - b[1]) - (c[1] - b[1]) * (u - b[0]);
                let w2 = (a[0] - c[0]) * (v - c[1]) - (a[1] - c[1]) * (u - c[0]);
                let inside = if area > 0.0 {
                    w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0
                } else {
                    w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0
                };
                if !inside {
                    continue;
                }
                // Barycentric depth interpolation.
                let l1 = w2 / area;
                let l2 = w0 / area;
                let l0 = 1.0 - l1 - l2;
                let d = (l0 * a[2] + l1 * b[2] + l2 * c[2]) as f32;
                let px = &mut depth[(iy as u32 * resolution + ix as u32) as usize];
                if d < *px {
                    *px = d;
                }
            }
        }
    }

    Ok(DepthView {
        forward,
        right,
        up,
        resolution,
        pixel_size,
        depth,
    })
}

/// Grayscale morphological closing of a depth map.
///
/// Foreground (finite, near) is dilated then eroded with a square
/// `window x window` element: on depth values that is a min filter followed
/// by a max filter, with infinity as background. Fills background gaps
/// narrower than the window; a window of 1 is the identity.
pub fn close_depth(view: &DepthView, window: u32) -> Result<DepthView, WatertightError> {
    if window.is_multiple_of(2) || window == 0 {
        return Err(WatertightError::BadWindow(window));
    }
    if window == 1 {
        return Ok(view.clone());
    }
    let r = (window / 2) as i64;
    let n = view.resolution as i64;
    let run = |src: &[f32], maximum: bool| -> Vec<f32> {
        // Separable square window: horizontal pass then vertical pass.
        let mut tmp = vec![0.0f32; src.len()];
        for y in 0..n {
            for x in 0..n {
                let mut best = src[(y * n + x) as usize];
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= n {
                        continue;
                    }
                    let v = src[(y * n + xx) as usize];
                    best = if maximum { best.max(v) } else { best.min(v) };
                }
                tmp[(y * n + x) as usize] = best;
            }
        }
        let mut out = vec![0.0f32; src.len()];
        for y in 0..n {
            for x in 0..n {
                let mut best = tmp[(y * n + x) as usize];
                for dy in -r..=r {
                    let yy = y + dy;
                    if yy < 0 || yy >= n {
                        continue;
                    }
                    let v = tmp[(yy * n + x) as usize];
                    best = if maximum { best.max(v) } else { best.min(v) };
                }
                out[(y * n + x) as usize] = best;
            }
        }
        out
    };
    let dilated = run(&view.depth, false);
    let closed = run(&dilated, true);
    Ok(DepthView {
        depth: closed,
        ..view.clone()
    })
}

/// Fuse depth views into a TSDF volume over the render domain.
///
/// Per voxel and view, the signed distance along the view ray is
/// `depth(pixel) - depth(voxel)`, clamped to the truncation band. A view
/// observes a voxel unless the voxel lies more than one truncation behind
/// that view's surface (such views carry no information there). Voxels
/// observed by no view are deep interior and clamp to `-truncation`.
/// Finally the half-voxel bias is subtracted, pushing the recovered surface
/// outward by half a voxel.
pub fn fuse(
    views: &[DepthView],
    resolution: u32,
    truncation: f64,
) -> Result<TsdfVolume, WatertightError> {
    if views.len() < 4 {
        return Err(WatertightError::TooFewViews(views.len()));
    }
    if !resolution.is_power_of_two() || resolution < 32 {
        return Err(WatertightError::BadVolumeResolution(resolution));
    }
    if !(truncation.is_finite() && truncation > 0.0) {
        return Err(WatertightError::BadTruncation(truncation));
    }
    let half = DOMAIN_HALF_EXTENT;
    let voxel_size = 2.0 * half / resolution as f64;
    let origin = [-half; 3];
    let bias = 0.5 * voxel_size;
    let n = resolution as usize;

    let mut values = vec![0.0f32; n * n * n];
    let mut weights = vec![0.0f32; n * n * n];
    let slab = n * n;
    values
        .par_chunks_mut(slab)
        .zip(weights.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(z, (vals, wts))| {
            for y in 0..n {
                for x in 0..n {
                    let p = [
                        origin[0] + (x as f64 + 0.5) * voxel_size,
                        origin[1] + (y as f64 + 0.5) * voxel_size,
                        origin[2] + (z as f64 + 0.5) * voxel_size,
                    ];
                    let mut sum = 0.0f64;
                    let mut count = 0u32;
                    let mut occluded = false;
                    for view in views {
                        let u = dot(p, view.right);
                        let v = dot(p, view.up);
                        let d_vox = dot(p, view.forward) + half;
                        let res = view.resolution as i64;
                        let ix = (((u + half) / view.pixel_size) as i64).clamp(0, res - 1);
                        let iy = (((v + half) / view.pixel_size) as i64).clamp(0, res - 1);
                        let d_surf = view.depth[(iy * res + ix) as usize] as f64;
                        let sd = d_surf - d_vox; // +inf when the ray misses
                        if sd < -truncation {
                            occluded = true;
                            continue;
                        }
                        sum += sd.min(truncation);
                        count += 1;
                    }
                    let idx = y * n + x;
                    let fused = if count > 0 {
                        sum / count as f64
                    } else if occluded {
                        -truncation
                    } else {
                        truncation
                    };
                    vals[idx] = (fused - bias).clamp(-truncation, truncation) as f32;
                    wts[idx] = if count > 0 {
                        count as f32
                    } else if occluded {
                        views.len() as f32
                    } else {
                        0.0
                    };
                }
            }
        });

    Ok(TsdfVolume::from_parts(
        [resolution; 3],
        origin,
        voxel_size,
        truncation,
        values,
        weights,
    ))
}

/// Parameters for [`make_watertight`].
#[derive(Debug, Clone)]
pub struct WatertightConfig {
    pub views: usize,
    pub depth_resolution: u32,
    pub volume_resolution: u32,
    pub closing_window: u32,
    /// Truncation distance in voxels.
    pub truncation_voxels: f64,
}

impl Default for WatertightConfig {
    fn default() -> Self {
        Self {
            views: 42,
            depth_resolution: 512,
            volume_resolution: 256,
            closing_window: 3,
            truncation_voxels: 3.0,
        }
    }
}

/// Full pipeline: render depth views, close them, fuse into a TSDF and
/// re-extract. Input must be normalized (inside the unit bounding sphere);
/// the output is a closed 2-manifold envelope of the input's exterior.
pub fn make_watertight(
    mesh: &TriangleMesh,
    cfg: &WatertightConfig,
) -> Result<TriangleMesh, WatertightError> {
    let (mesh, volume) = watertight_volume(mesh, cfg)?;
    drop(volume);
    Ok(mesh)
}

/// Like [`make_watertight`] but also returns the fused volume.
pub fn watertight_volume(
    mesh: &TriangleMesh,
    cfg: &WatertightConfig,
) -> Result<(TriangleMesh, TsdfVolume), WatertightError> {
    if let Some((lo, hi)) = mesh.bbox() {
        let reach = lo
            .iter()
            .chain(hi.iter())
            .fold(0.0f64, |m, &c| m.max(c.abs()));
        if reach > DOMAIN_HALF_EXTENT {
            return Err(WatertightError::NotNormalized(reach));
        }
    }
    let dirs = view_directions(cfg.views);
    if dirs.len() < 4 {
        return Err(WatertightError::TooFewViews(dirs.len()));
    }
    let views: Vec<DepthView> = dirs
        .par_iter()
        .map(|&d| {
            let v = render_depth(mesh, d, cfg.depth_resolution)?;
            close_depth(&v, cfg.closing_window)
        })
        .collect::<Result<_, _>>()?;
    let voxel_size = 2.0 * DOMAIN_HALF_EXTENT / cfg.volume_resolution as f64;
    let volume = fuse(&views, cfg.volume_resolution, cfg.truncation_voxels * voxel_size)?;
    let field = GridField::from_volume(&volume)?;
    let mut ex_cfg = ExtractionConfig::new(cfg.volume_resolution);
    ex_cfg.bounds = crate::field::Aabb::cube(DOMAIN_HALF_EXTENT);
    let (out, _stats) = extract(&field, &ex_cfg)?;
    Ok((out, volume))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::distance;

    fn sphere_mesh(r: f64, resolution: u32) -> TriangleMesh {
        let f = crate::field::sphere_field([0.0; 3], r).unwrap();
        let (m, _) = extract(&f, &ExtractionConfig::new(resolution)).unwrap();
        m
    }

    #[test]
    fn directions_unit_and_distinct() {
        for count in [12usize, 42, 162, 37] {
            let dirs = view_directions(count);
            assert_eq!(dirs.len(), count);
            for d in &dirs {
                assert!((crate::mesh::norm(*d) - 1.0).abs() < 1e-12);
            }
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    assert!(distance(dirs[i], dirs[j]) > 1e-6);
                }
            }
        }
    }

    #[test]
    fn render_sphere_center_depth() {
        let m = sphere_mesh(1.0, 64);
        for dir in [[1.0, 0.0, 0.0], [0.0, 0.57, -0.81], [-0.3, 0.4, 0.86]] {
            let view = render_depth(&m, dir, 128).unwrap();
            let c = view.resolution / 2;
            let d = view.depth_at(c, c) as f64;
            // Near plane at 1.05, unit sphere front at depth 0.05 (mesh
            // approximation keeps it within a cell of that).
            assert!(
                (d - 0.05).abs() < 0.05,
                "dir {dir:?}: center depth {d}"
            );
        }
    }

    #[test]
    fn render_empty_mesh_all_infinite() {
        let view = render_depth(&TriangleMesh::default(), [0.0, 0.0, 1.0], 64).unwrap();
        assert!(view.depth.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn render_backface_still_hits() {
        // One triangle wound away from the camera.
        let m = TriangleMesh::new(
            vec![[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.0, 0.5, 0.0]],
            vec![[0, 2, 1]],
        );
        let view = render_depth(&m, [0.0, 0.0, 1.0], 128).unwrap();
        let c = view.resolution / 2;
        assert!(view.depth_at(c, c).is_finite());
    }

    #[test]
    fn closing_window_one_is_identity() {
        let m = sphere_mesh(0.8, 32);
        let view = render_depth(&m, [0.0, 1.0, 0.0], 64).unwrap();
        let closed = close_depth(&view, 1).unwrap();
        assert_eq!(view.depth, closed.depth);
        assert!(close_depth(&view, 2).is_err());
        assert!(close_depth(&view, 0).is_err());
    }

    #[test]
    fn closing_fills_single_pixel_hole() {
        let mut view = DepthView {
            forward: [0.0, 0.0, 1.0],
            right: [1.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            resolution: 64,
            pixel_size: 2.1 / 64.0,
            depth: vec![5.0; 64 * 64],
        };
        view.depth[(32 * 64 + 32) as usize] = f32::INFINITY;
        let closed = close_depth(&view, 3).unwrap();
        assert_eq!(closed.depth_at(32, 32), 5.0);
    }

    #[test]
    fn closing_cannot_bridge_wide_gaps() {
        let mut view = DepthView {
            forward: [0.0, 0.0, 1.0],
            right: [1.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            resolution: 64,
            pixel_size: 2.1 / 64.0,
            depth: vec![5.0; 64 * 64],
        };
        // 5-pixel-wide infinite gap.
        for y in 0..64u32 {
            for x in 20..25u32 {
                view.depth[(y * 64 + x) as usize] = f32::INFINITY;
            }
        }
        let closed = close_depth(&view, 3).unwrap();
        assert!(closed.depth_at(22, 32).is_infinite());
    }

    #[test]
    fn fuse_clamps_interior_and_exterior() {
        let m = sphere_mesh(0.8, 64);
        let dirs = view_directions(42);
        let views: Vec<DepthView> = dirs
            .iter()
            .map(|&d| render_depth(&m, d, 128).unwrap())
            .collect();
        let res = 64u32;
        let voxel = 2.1 / res as f64;
        let trunc = 3.0 * voxel;
        let vol = fuse(&views, res, trunc).unwrap();
        // Origin voxel: deep inside.
        let mid = res / 2;
        assert_eq!(vol.value_at(mid, mid, mid), -(trunc as f32));
        // Voxel at (1.0, 0, 0): outside by 0.2 >> truncation.
        let ix = ((1.0 + 1.05) / voxel - 0.5).round() as u32;
        let v = vol.value_at(ix, mid, mid) as f64;
        assert!(
            (v - (trunc - 0.5 * voxel)).abs() < 1e-6,
            "exterior voxel fused to {v}, expected clamp {}",
            trunc - 0.5 * voxel
        );
        assert!(fuse(&views[..3], res, trunc).is_err());
    }

    #[test]
    fn fuse_bitwise_deterministic_across_thread_counts() {
        let m = sphere_mesh(0.8, 32);
        let dirs = view_directions(12);
        let views: Vec<DepthView> = dirs
            .iter()
            .map(|&d| render_depth(&m, d, 64).unwrap())
            .collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fuse(&views, 32, 3.0 * 2.1 / 32.0).unwrap())
        };
        let a = run(1);
        let b = run(8);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.values()), bits(b.values()));
        assert_eq!(bits(a.weights()), bits(b.weights()));
    }

    #[test]
    fn fuse_zero_crossing_near_biased_radius() {
        let m = sphere_mesh(0.8, 128);
        let dirs = view_directions(42);
        let views: Vec<DepthView> = dirs
            .iter()
            .map(|&d| render_depth(&m, d, 256).unwrap())
            .collect();
        let res = 128u32;
        let voxel = 2.1 / res as f64;
        let vol = fuse(&views, res, 3.0 * voxel).unwrap();
        // Walk +x from the center until the sign flips.
        let mid = res / 2;
        let mut crossing = None;
        for x in mid..res - 1 {
            let v0 = vol.value_at(x, mid, mid);
            let v1 = vol.value_at(x + 1, mid, mid);
            if v0 < 0.0 && v1 >= 0.0 {
                let t = v0 as f64 / (v0 as f64 - v1 as f64);
                let p0 = vol.voxel_center(x, mid, mid)[0];
                crossing = Some(p0 + t * voxel);
                break;
            }
        }
        let x = crossing.expect("no zero crossing along +x");
        // Surface pushed outward by half a voxel, within half a voxel.
        assert!(
            (x - (0.8 + 0.5 * voxel)).abs() <= 0.5 * voxel + 1e-9,
            "crossing at {x}, expected 0.8 + voxel/2 = {}",
            0.8 + 0.5 * voxel
        );
    }
}
