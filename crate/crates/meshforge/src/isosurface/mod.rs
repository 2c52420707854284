//! Sparse coarse-to-fine isosurface extraction.
//!
//! Extraction starts from a dense coarse grid, keeps only cells near the
//! zero set, and doubles the resolution level by level; only children of
//! active cells are ever queried. At the final level the active set is
//! dilated and polygonized with the contour-tracing cell marcher. Every field
//! query goes through a per-vertex cache, so the reported query count is the
//! true field workload.

mod march;

pub use march::{march_cell, march_topology, CellTopology, LoopVertex};

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::field::{Aabb, ScalarField};
use crate::mesh::TriangleMesh;

#[derive(Debug, Error, PartialEq)]
pub enum IsosurfaceError {
    #[error("final resolution must be a power of two >= 32, got {0}")]
    BadFinalResolution(u32),
    #[error("coarse resolution must be a power of two <= final/4, got {coarse} for final {final_res}")]
    BadCoarseResolution { coarse: u32, final_res: u32 },
    #[error("resolution {0} too large (max 2^20)")]
    ResolutionTooLarge(u32),
    #[error("activity margin must be positive, got {0}")]
    BadMargin(f64),
    #[error("bounds must have positive extent")]
    BadBounds,
}

/// Parameters for [`extract`].
#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    /// Final grid resolution `D` (cells per axis), power of two, at least 32.
    pub final_resolution: u32,
    /// Coarse starting resolution, power of two, at most `D / 4`. The coarse
    /// level is evaluated densely so no component larger than one coarse cell
    /// can be missed.
    pub coarse_resolution: u32,
    /// Multiplier on the cell diagonal for the "close to the isosurface"
    /// test. With a 1-Lipschitz field, 1.0 provably keeps every cell whose
    /// descendants can contain a crossing.
    pub activity_margin: f64,
    /// Dilation radius (in cells, 26-connectivity) applied to the active set
    /// at the final level before marching.
    pub expansion_radius: u32,
    /// Extraction domain.
    pub bounds: Aabb,
}

impl ExtractionConfig {
    pub fn new(final_resolution: u32) -> Self {
        Self {
            final_resolution,
            coarse_resolution: 32.min(final_resolution / 4).max(1),
            activity_margin: 1.0,
            expansion_radius: 1,
            bounds: Aabb::default(),
        }
    }

    pub fn validate(&self) -> Result<(), IsosurfaceError> {
        let d = self.final_resolution;
        if !d.is_power_of_two() || d < 32 {
            return Err(IsosurfaceError::BadFinalResolution(d));
        }
        if d > 1 << 20 {
            return Err(IsosurfaceError::ResolutionTooLarge(d));
        }
        let c = self.coarse_resolution;
        if !c.is_power_of_two() || c > d / 4 {
            return Err(IsosurfaceError::BadCoarseResolution {
                coarse: c,
                final_res: d,
            });
        }
        if !(self.activity_margin.is_finite() && self.activity_margin > 0.0) {
            return Err(IsosurfaceError::BadMargin(self.activity_margin));
        }
        let ext = self.bounds.extent();
        if !(ext[0] > 0.0 && ext[1] > 0.0 && ext[2] > 0.0) {
            return Err(IsosurfaceError::BadBounds);
        }
        Ok(())
    }
}

/// Sign summary of the sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDiagnosis {
    /// Both signs observed: a surface was present.
    Mixed,
    /// Every sample positive: field entirely outside over the bounds.
    AllPositive,
    /// Every sample negative: field entirely inside over the bounds.
    AllNegative,
}

/// Query accounting for one extraction run.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionStats {
    pub queries_total: u64,
    pub dense_equivalent: u64,
    pub per_level_active: Vec<u64>,
    pub wall_time_s: f64,
    pub diagnosis: FieldDiagnosis,
}

impl ExtractionStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn reduction_factor(&self) -> f64 {
        self.dense_equivalent as f64 / self.queries_total.max(1) as f64
    }
}

/// Sparse set of integer cell coordinates at one resolution level.
#[derive(Debug, Clone)]
pub struct ActiveCellSet {
    resolution: u32,
    cells: Vec<[u32; 3]>,
}

impl ActiveCellSet {
    pub fn new(resolution: u32, mut cells: Vec<[u32; 3]>) -> Self {
        for c in &cells {
            debug_assert!(c.iter().all(|&x| x < resolution));
        }
        cells.sort_unstable();
        cells.dedup();
        Self { resolution, cells }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cells(&self) -> &[[u32; 3]] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Morphological dilation of the cell set by `radius` in 26-connectivity,
/// clipped to the grid. Radius 0 returns the set unchanged.
pub fn expand_active(set: &ActiveCellSet, radius: u32) -> ActiveCellSet {
    if radius == 0 {
        return set.clone();
    }
    let r = radius as i64;
    let res = set.resolution as i64;
    let mut out: HashSet<[u32; 3]> = HashSet::with_capacity(set.cells.len() * 4);
    for c in &set.cells {
        for dx in -r..=r {
            let x = c[0] as i64 + dx;
            if x < 0 || x >= res {
                continue;
            }
            for dy in -r..=r {
                let y = c[1] as i64 + dy;
                if y < 0 || y >= res {
                    continue;
                }
                for dz in -r..=r {
                    let z = c[2] as i64 + dz;
                    if z < 0 || z >= res {
                        continue;
                    }
                    out.insert([x as u32, y as u32, z as u32]);
                }
            }
        }
    }
    ActiveCellSet::new(set.resolution, out.into_iter().collect())
}

/// Cached, counted access to field values on the extraction lattice.
///
/// Keys are vertex coordinates at the finest level, so a vertex shared
/// between levels is evaluated exactly once.
pub struct FieldSampler<'a> {
    field: &'a dyn ScalarField,
    bounds: Aabb,
    final_resolution: u32,
    cache: HashMap<u64, f64>,
    queries: u64,
    seen_negative: bool,
    seen_positive: bool,
}

impl<'a> FieldSampler<'a> {
    pub fn new(field: &'a dyn ScalarField, bounds: Aabb, final_resolution: u32) -> Self {
        Self {
            field,
            bounds,
            final_resolution,
            cache: HashMap::new(),
            queries: 0,
            seen_negative: false,
            seen_positive: false,
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    fn key(&self, level_res: u32, v: [u32; 3]) -> u64 {
        let stride = (self.final_resolution / level_res) as u64;
        let n = self.final_resolution as u64 + 1;
        ((v[0] as u64 * stride) * n + v[1] as u64 * stride) * n + v[2] as u64 * stride
    }

    fn vertex_position(&self, level_res: u32, v: [u32; 3]) -> [f64; 3] {
        let ext = self.bounds.extent();
        let r = level_res as f64;
        [
            self.bounds.min[0] + v[0] as f64 / r * ext[0],
            self.bounds.min[1] + v[1] as f64 / r * ext[1],
            self.bounds.min[2] + v[2] as f64 / r * ext[2],
        ]
    }

    fn cell_size(&self, level_res: u32) -> [f64; 3] {
        let ext = self.bounds.extent();
        let r = level_res as f64;
        [ext[0] / r, ext[1] / r, ext[2] / r]
    }

    fn cell_diagonal(&self, level_res: u32) -> f64 {
        let s = self.cell_size(level_res);
        (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
    }

    fn cached(&self, level_res: u32, v: [u32; 3]) -> Option<f64> {
        self.cache.get(&self.key(level_res, v)).copied()
    }

    /// Evaluate (through the cache) all corner vertices of `cells`.
    fn ensure_cells(&mut self, level_res: u32, cells: &[[u32; 3]]) {
        let mut missing: Vec<(u64, [f64; 3])> = Vec::new();
        for c in cells {
            for off in march::CORNER_OFFSET {
                let v = [
                    c[0] + off[0] as u32,
                    c[1] + off[1] as u32,
                    c[2] + off[2] as u32,
                ];
                let key = self.key(level_res, v);
                if let Entry::Vacant(e) = self.cache.entry(key) {
                    e.insert(f64::NAN);
                    missing.push((key, self.vertex_position(level_res, v)));
                }
            }
        }
        if missing.is_empty() {
            return;
        }
        let field = self.field;
        let mut values = vec![0.0f64; missing.len()];
        let points: Vec<[f64; 3]> = missing.iter().map(|m| m.1).collect();
        values
            .par_chunks_mut(4096)
            .zip(points.par_chunks(4096))
            .for_each(|(out, pts)| field.evaluate(pts, out));
        for ((key, _), value) in missing.iter().zip(&values) {
            self.cache.insert(*key, *value);
            if *value < 0.0 {
                self.seen_negative = true;
            } else if *value > 0.0 {
                self.seen_positive = true;
            }
        }
        self.queries += values.len() as u64;
    }

    /// Corner values of one cell; corners must have been ensured.
    fn corner_values(&self, level_res: u32, cell: [u32; 3]) -> [f64; 8] {
        let mut w = [0.0f64; 8];
        for (i, off) in march::CORNER_OFFSET.iter().enumerate() {
            let v = [
                cell[0] + off[0] as u32,
                cell[1] + off[1] as u32,
                cell[2] + off[2] as u32,
            ];
            w[i] = self.cache[&self.key(level_res, v)];
            debug_assert!(!w[i].is_nan());
        }
        w
    }

    fn diagnosis(&self) -> FieldDiagnosis {
        match (self.seen_negative, self.seen_positive) {
            (true, true) => FieldDiagnosis::Mixed,
            (false, _) => FieldDiagnosis::AllPositive,
            (true, false) => FieldDiagnosis::AllNegative,
        }
    }
}

/// Activity test: a cell stays active when its corner signs differ or some
/// corner value is within `margin` of zero.
fn is_active(w: &[f64; 8], margin: f64) -> bool {
    let mut any_neg = false;
    let mut any_pos = false;
    let mut min_abs = f64::INFINITY;
    for &v in w {
        if v < 0.0 {
            any_neg = true;
        } else {
            any_pos = true;
        }
        min_abs = min_abs.min(v.abs());
    }
    (any_neg && any_pos) || min_abs <= margin
}

fn classify(
    sampler: &mut FieldSampler,
    level_res: u32,
    cells: &[[u32; 3]],
    tau: f64,
) -> ActiveCellSet {
    sampler.ensure_cells(level_res, cells);
    let margin = tau * sampler.cell_diagonal(level_res);
    let active: Vec<[u32; 3]> = cells
        .iter()
        .copied()
        .filter(|&c| is_active(&sampler.corner_values(level_res, c), margin))
        .collect();
    ActiveCellSet::new(level_res, active)
}

/// Emit the 8 children of every cell of `coarse` that is close to the
/// isosurface (sign change among its corners, or a corner value within
/// `tau x cell diagonal`). Corner values are fetched once per grid vertex
/// through the sampler's cache.
pub fn subdivide_active(
    coarse: &ActiveCellSet,
    sampler: &mut FieldSampler,
    tau: f64,
) -> ActiveCellSet {
    let active = classify(sampler, coarse.resolution, &coarse.cells, tau);
    let children = children_of(&active.cells);
    ActiveCellSet::new(coarse.resolution * 2, children)
}

fn children_of(cells: &[[u32; 3]]) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(cells.len() * 8);
    for c in cells {
        for off in march::CORNER_OFFSET {
            out.push([
                2 * c[0] + off[0] as u32,
                2 * c[1] + off[1] as u32,
                2 * c[2] + off[2] as u32,
            ]);
        }
    }
    out
}

/// Children of the active set, pruned with the field's Lipschitz bound when
/// it has one: a child is dropped only when the parent's corner values prove
/// it would fail its own activity test, so the surviving recursion is
/// unchanged and dropped children are simply never queried.
fn screened_children(
    sampler: &FieldSampler,
    active: &ActiveCellSet,
    tau: f64,
    lipschitz: Option<f64>,
) -> Vec<[u32; 3]> {
    let child_res = active.resolution * 2;
    let lip = match lipschitz {
        Some(l) if l > 0.0 => l,
        _ => return children_of(&active.cells),
    };
    let child_margin = tau * sampler.cell_diagonal(child_res);
    let child_size = sampler.cell_size(child_res);
    let mut out = Vec::with_capacity(active.cells.len() * 4);
    for c in &active.cells {
        let w = sampler.corner_values(active.resolution, *c);
        let corner_pos: Vec<[f64; 3]> = march::CORNER_OFFSET
            .iter()
            .map(|off| {
                sampler.vertex_position(
                    active.resolution,
                    [
                        c[0] + off[0] as u32,
                        c[1] + off[1] as u32,
                        c[2] + off[2] as u32,
                    ],
                )
            })
            .collect();
        for off in march::CORNER_OFFSET {
            let child = [
                2 * c[0] + off[0] as u32,
                2 * c[1] + off[1] as u32,
                2 * c[2] + off[2] as u32,
            ];
            let lo = [
                sampler.bounds.min[0] + child[0] as f64 * child_size[0],
                sampler.bounds.min[1] + child[1] as f64 * child_size[1],
                sampler.bounds.min[2] + child[2] as f64 * child_size[2],
            ];
            let hi = [lo[0] + child_size[0], lo[1] + child_size[1], lo[2] + child_size[2]];
            // Largest provable lower bound on |field| anywhere in the child.
            let mut best = f64::NEG_INFINITY;
            for (i, p) in corner_pos.iter().enumerate() {
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = (p[a] - lo[a]).abs().max((p[a] - hi[a]).abs());
                    d2 += d * d;
                }
                best = best.max(w[i].abs() - lip * d2.sqrt());
            }
            if best <= child_margin {
                out.push(child);
            }
        }
    }
    out
}

/// Extract the isosurface of `field` as a watertight triangle mesh.
///
/// A field with no sign change over the bounds yields an empty mesh; the
/// stats diagnosis reports which sign was observed.
pub fn extract(
    field: &dyn ScalarField,
    cfg: &ExtractionConfig,
) -> Result<(TriangleMesh, ExtractionStats), IsosurfaceError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut sampler = FieldSampler::new(field, cfg.bounds, cfg.final_resolution);
    let lipschitz = field.lipschitz_bound();

    // Dense coarse level.
    let d0 = cfg.coarse_resolution;
    let mut all = Vec::with_capacity((d0 as usize).pow(3));
    for x in 0..d0 {
        for y in 0..d0 {
            for z in 0..d0 {
                all.push([x, y, z]);
            }
        }
    }
    let mut active = classify(&mut sampler, d0, &all, cfg.activity_margin);
    let mut per_level = vec![active.len() as u64];

    let mut res = d0;
    while res < cfg.final_resolution && !active.is_empty() {
        let candidates = screened_children(&sampler, &active, cfg.activity_margin, lipschitz);
        res *= 2;
        active = classify(&mut sampler, res, &candidates, cfg.activity_margin);
        per_level.push(active.len() as u64);
    }

    let mesh = if active.is_empty() {
        TriangleMesh::default()
    } else {
        let march_set = expand_active(&active, cfg.expansion_radius);
        march_cells(&mut sampler, &march_set, lipschitz)
    };

    let stats = ExtractionStats {
        queries_total: sampler.queries(),
        dense_equivalent: (cfg.final_resolution as u64 + 1).pow(3),
        per_level_active: per_level,
        wall_time_s: start.elapsed().as_secs_f64(),
        diagnosis: sampler.diagnosis(),
    };
    Ok((mesh, stats))
}

/// Dense marching cubes over every cell at `resolution`: the equivalence
/// oracle for [`extract`]. Same cell marcher, same vertex welding.
pub fn extract_dense(
    field: &dyn ScalarField,
    resolution: u32,
    bounds: Aabb,
) -> Result<(TriangleMesh, ExtractionStats), IsosurfaceError> {
    if !resolution.is_power_of_two() || resolution > 1 << 20 {
        return Err(IsosurfaceError::BadFinalResolution(resolution));
    }
    let start = Instant::now();
    let mut sampler = FieldSampler::new(field, bounds, resolution);
    let mut all = Vec::with_capacity((resolution as usize).pow(3));
    for x in 0..resolution {
        for y in 0..resolution {
            for z in 0..resolution {
                all.push([x, y, z]);
            }
        }
    }
    sampler.ensure_cells(resolution, &all);
    let set = ActiveCellSet::new(resolution, all);
    let mesh = march_cells(&mut sampler, &set, None);
    let stats = ExtractionStats {
        queries_total: sampler.queries(),
        dense_equivalent: (resolution as u64 + 1).pow(3),
        per_level_active: vec![set.len() as u64],
        wall_time_s: start.elapsed().as_secs_f64(),
        diagnosis: sampler.diagnosis(),
    };
    Ok((mesh, stats))
}

/// March every cell of `set` (at the final level), welding crossing vertices
/// by their global grid edge so shared vertices are bit-identical across
/// cells. Cells whose corners are not yet evaluated are first screened with
/// the Lipschitz bound; provably sign-uniform cells are skipped unqueried.
fn march_cells(
    sampler: &mut FieldSampler,
    set: &ActiveCellSet,
    lipschitz: Option<f64>,
) -> TriangleMesh {
    let res = set.resolution;
    debug_assert_eq!(res, sampler.final_resolution);
    let size = sampler.cell_size(res);
    let nudge = 1e-12 * size[0].min(size[1]).min(size[2]);

    // Decide which cells actually need corner values.
    let mut to_eval: Vec<[u32; 3]> = Vec::new();
    let mut skip: HashSet<[u32; 3]> = HashSet::new();
    for &c in set.cells() {
        let missing = march::CORNER_OFFSET.iter().any(|off| {
            sampler
                .cached(res, [c[0] + off[0] as u32, c[1] + off[1] as u32, c[2] + off[2] as u32])
                .is_none()
        });
        if !missing {
            continue;
        }
        if let Some(lip) = lipschitz {
            if provably_sign_uniform(sampler, res, c, lip) {
                skip.insert(c);
                continue;
            }
        }
        to_eval.push(c);
    }
    sampler.ensure_cells(res, &to_eval);

    let mut weld: HashMap<u64, u32> = HashMap::new();
    let mut mesh = TriangleMesh::default();
    let n = res as u64 + 1;
    for &c in set.cells() {
        if skip.contains(&c) {
            continue;
        }
        let w = sampler.corner_values(res, c);
        let topo = march_topology(&w, nudge);
        if topo.loops.is_empty() {
            continue;
        }
        let origin = sampler.vertex_position(res, c);
        for lp in &topo.loops {
            let mut idx = Vec::with_capacity(lp.len());
            for v in lp {
                let (base, axis) = march::EDGE_BASE_AXIS[v.edge];
                let key = (((c[0] + base[0] as u32) as u64 * n
                    + (c[1] + base[1] as u32) as u64)
                    * n
                    + (c[2] + base[2] as u32) as u64)
                    * 4
                    + axis as u64;
                let vid = *weld.entry(key).or_insert_with(|| {
                    mesh.vertices.push(march::world_crossing(origin, size, v));
                    (mesh.vertices.len() - 1) as u32
                });
                idx.push(vid);
            }
            if idx.len() == 3 {
                mesh.triangles.push([idx[0], idx[1], idx[2]]);
            } else {
                let mut m = [0.0f64; 3];
                for &i in &idx {
                    let p = mesh.vertices[i as usize];
                    m[0] += p[0];
                    m[1] += p[1];
                    m[2] += p[2];
                }
                let k = idx.len() as f64;
                mesh.vertices.push([m[0] / k, m[1] / k, m[2] / k]);
                let mid = (mesh.vertices.len() - 1) as u32;
                for i in 0..idx.len() {
                    let j = (i + 1) % idx.len();
                    mesh.triangles.push([mid, idx[i], idx[j]]);
                }
            }
        }
    }
    mesh
}

/// True when cached samples around `cell` prove the field cannot change sign
/// inside it (so marching it would emit nothing).
fn provably_sign_uniform(
    sampler: &FieldSampler,
    res: u32,
    cell: [u32; 3],
    lip: f64,
) -> bool {
    let size = sampler.cell_size(res);
    let lo = sampler.vertex_position(res, cell);
    let hi = [lo[0] + size[0], lo[1] + size[1], lo[2] + size[2]];
    let check = |level_res: u32, v: [u32; 3]| -> bool {
        if let Some(val) = sampler.cached(level_res, v) {
            if !val.is_nan() {
                let p = sampler.vertex_position(level_res, v);
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = (p[a] - lo[a]).abs().max((p[a] - hi[a]).abs());
                    d2 += d * d;
                }
                if val.abs() - lip * d2.sqrt() > 0.0 {
                    return true;
                }
            }
        }
        false
    };
    // Own corners first, then the parent cell's corners.
    for off in march::CORNER_OFFSET {
        let v = [
            cell[0] + off[0] as u32,
            cell[1] + off[1] as u32,
            cell[2] + off[2] as u32,
        ];
        if check(res, v) {
            return true;
        }
    }
    if res >= 2 {
        let parent = [cell[0] / 2, cell[1] / 2, cell[2] / 2];
        for off in march::CORNER_OFFSET {
            let v = [
                parent[0] + off[0] as u32,
                parent[1] + off[1] as u32,
                parent[2] + off[2] as u32,
            ];
            if check(res / 2, v) {
                return true;
            }
        }
    }
    false
}

/// Combinatorial watertightness audit.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WatertightReport {
    pub is_closed: bool,
    pub is_manifold: bool,
    pub boundary_edge_count: usize,
    pub non_manifold_edge_count: usize,
    pub euler_characteristic: i64,
}

/// Exact edge-incidence audit: counts boundary edges (one incident triangle),
/// non-manifold edges (more than two, or two with matching direction), and
/// the Euler characteristic V - E + F over referenced vertices.
pub fn verify_watertight(mesh: &TriangleMesh) -> WatertightReport {
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
    let mut referenced: HashSet<u32> = HashSet::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let a = t[k];
            let b = t[(k + 1) % 3];
            referenced.insert(a);
            let key = (a.min(b), a.max(b));
            let e = edges.entry(key).or_insert((0, 0));
            if a < b {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut boundary = 0usize;
    let mut non_manifold = 0usize;
    for (fwd, bwd) in edges.values() {
        let total = fwd + bwd;
        if total == 1 {
            boundary += 1;
        } else if total > 2 || *fwd != 1 || *bwd != 1 {
            // Two triangles on an edge must traverse it in opposite
            // directions for a consistently oriented manifold.
            non_manifold += 1;
        }
    }
    let v = referenced.len() as i64;
    let e = edges.len() as i64;
    let f = mesh.triangles.len() as i64;
    WatertightReport {
        is_closed: !mesh.triangles.is_empty() && boundary == 0 && non_manifold == 0,
        is_manifold: non_manifold == 0,
        boundary_edge_count: boundary,
        non_manifold_edge_count: non_manifold,
        euler_characteristic: v - e + f,
    }
}
