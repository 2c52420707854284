//! Rule-based mesh <-> token codec.
//!
//! Vertices are quantized to an integer lattice of side `R = B * O`, each
//! coordinate split into a block index (coarse cell of a `B^3` grid) and an
//! offset inside the block (`O^3` positions). Faces sharing a vertex are
//! aggregated into fan patches: a patch opens with a dedicated patch-start
//! block token for its center vertex, then lists the ring vertices in fan
//! order; consecutive ring vertices close one triangle each. The token
//! vocabulary is three disjoint integer ranges (regular blocks, patch-start
//! blocks, shared offsets) and the codec has no learned parameters.

mod stream;

pub use stream::{read_tokens, write_tokens, TOKEN_MAGIC, TOKEN_VERSION};

use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::mesh::TriangleMesh;
use crate::meshkit::NormalizeTransform;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("invalid codec config: B={blocks} O={block_size} (need B,O >= 1, B*O <= 65536, vocabulary <= u32)")]
    BadConfig { blocks: u32, block_size: u32 },
    #[error("vertex {index} at ({x}, {y}, {z}) is outside [-1, 1]; run normalize_to_unit_sphere first")]
    VertexOutOfBounds { index: usize, x: f64, y: f64, z: f64 },
    #[error("coordinate {0} out of range for resolution {1}")]
    CoordinateOutOfRange(u32, u32),
    #[error("block token {block} or offset token {offset} out of range")]
    IndexOutOfRange { block: u64, offset: u64 },
    #[error("token {token} at position {position} is outside every vocabulary range")]
    TokenOutOfRange { position: usize, token: u32 },
    #[error("grammar violation at token {position}: {message}")]
    Grammar { position: usize, message: String },
    #[error("unexpected end of sequence at token {position}: {message}")]
    UnexpectedEnd { position: usize, message: String },
    #[error("token stream error: {0}")]
    Stream(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CodecError {
    fn from(e: std::io::Error) -> Self {
        CodecError::Io(e.to_string())
    }
}

/// Quantization and vocabulary geometry: `B` blocks per axis, each of side
/// `O`, for a lattice resolution `R = B * O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodecConfig {
    blocks: u32,
    block_size: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            blocks: 16,
            block_size: 8,
        }
    }
}

impl CodecConfig {
    pub fn new(blocks: u32, block_size: u32) -> Result<Self, CodecError> {
        let bad = || CodecError::BadConfig {
            blocks,
            block_size,
        };
        if blocks == 0 || block_size == 0 {
            return Err(bad());
        }
        let r = (blocks as u64) * (block_size as u64);
        if r > 1 << 16 {
            return Err(bad());
        }
        let vocab = 2 * (blocks as u64).pow(3) + (block_size as u64).pow(3);
        if vocab > u32::MAX as u64 {
            return Err(bad());
        }
        Ok(Self { blocks, block_size })
    }

    pub fn blocks(&self) -> u32 {
        self.blocks
    }

    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    /// Lattice resolution `R = B * O`.
    pub fn resolution(&self) -> u32 {
        self.blocks * self.block_size
    }

    fn block_count(&self) -> u32 {
        self.blocks.pow(3)
    }

    fn offset_count(&self) -> u32 {
        self.block_size.pow(3)
    }

    /// First patch-start block token.
    pub fn patch_start_base(&self) -> u32 {
        self.block_count()
    }

    /// First offset token.
    pub fn offset_base(&self) -> u32 {
        2 * self.block_count()
    }

    pub fn vocabulary_size(&self) -> u32 {
        2 * self.block_count() + self.offset_count()
    }
}

/// Integer-lattice mesh: duplicate-free vertices in `[0, R)^3` plus
/// non-degenerate triangles, with the normalization provenance when known.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMesh {
    pub config: CodecConfig,
    pub vertices: Vec<[u16; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub transform: Option<NormalizeTransform>,
}

/// What quantization merged or dropped.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct QuantizeReport {
    pub merged_vertices: usize,
    pub dropped_triangles: usize,
}

/// Map normalized float coordinates onto the integer lattice:
/// `floor((c + 1) / 2 * R)` clamped to `[0, R - 1]`, duplicates merged,
/// degenerate triangles dropped.
pub fn quantize(
    mesh: &TriangleMesh,
    config: CodecConfig,
    transform: Option<NormalizeTransform>,
) -> Result<(QuantizedMesh, QuantizeReport), CodecError> {
    let r = config.resolution() as f64;
    let max_coord = config.resolution() - 1;
    let mut map: HashMap<[u16; 3], u32> = HashMap::new();
    let mut vertices: Vec<[u16; 3]> = Vec::new();
    let mut remap: Vec<u32> = Vec::with_capacity(mesh.vertices.len());
    let mut report = QuantizeReport::default();
    for (index, v) in mesh.vertices.iter().enumerate() {
        if v.iter().any(|c| c.abs() > 1.0 + 1e-9) {
            return Err(CodecError::VertexOutOfBounds {
                index,
                x: v[0],
                y: v[1],
                z: v[2],
            });
        }
        let mut q = [0u16; 3];
        for a in 0..3 {
            let cell = ((v[a] + 1.0) / 2.0 * r).floor();
            q[a] = (cell.max(0.0) as u32).min(max_coord) as u16;
        }
        let next = vertices.len() as u32;
        let idx = *map.entry(q).or_insert_with(|| {
            vertices.push(q);
            next
        });
        if idx != next {
            report.merged_vertices += 1;
        }
        remap.push(idx);
    }
    let mut triangles = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let m = [
            remap[t[0] as usize],
            remap[t[1] as usize],
            remap[t[2] as usize],
        ];
        if m[0] == m[1] || m[1] == m[2] || m[0] == m[2] {
            report.dropped_triangles += 1;
        } else {
            triangles.push(m);
        }
    }
    Ok((
        QuantizedMesh {
            config,
            vertices,
            triangles,
            transform,
        },
        report,
    ))
}

/// Back to float coordinates at lattice cell centers.
pub fn dequantize(qm: &QuantizedMesh) -> TriangleMesh {
    let r = qm.config.resolution() as f64;
    let vertices = qm
        .vertices
        .iter()
        .map(|q| {
            [
                (q[0] as f64 + 0.5) * 2.0 / r - 1.0,
                (q[1] as f64 + 0.5) * 2.0 / r - 1.0,
                (q[2] as f64 + 0.5) * 2.0 / r - 1.0,
            ]
        })
        .collect();
    TriangleMesh::new(vertices, qm.triangles.clone())
}

/// Block/offset decomposition of one lattice vertex: integer division by the
/// block side gives the block cell, the remainder gives the offset inside it.
pub fn block_index(v: [u16; 3], config: &CodecConfig) -> Result<(u32, u32), CodecError> {
    let o = config.block_size;
    let b_axis = config.blocks;
    let r = config.resolution();
    for &c in &v {
        if c as u32 >= r {
            return Err(CodecError::CoordinateOutOfRange(c as u32, r));
        }
    }
    let (x, y, z) = (v[0] as u32, v[1] as u32, v[2] as u32);
    let b = (x / o) * b_axis * b_axis + (y / o) * b_axis + z / o;
    let off = (x % o) * o * o + (y % o) * o + z % o;
    Ok((b, off))
}

/// Exact inverse of [`block_index`].
pub fn block_index_inverse(
    b: u32,
    o: u32,
    config: &CodecConfig,
) -> Result<[u16; 3], CodecError> {
    if b >= config.block_count() || o >= config.offset_count() {
        return Err(CodecError::IndexOutOfRange {
            block: b as u64,
            offset: o as u64,
        });
    }
    let ob = config.blocks;
    let os = config.block_size;
    let bx = b / (ob * ob);
    let by = (b / ob) % ob;
    let bz = b % ob;
    let ox = o / (os * os);
    let oy = (o / os) % os;
    let oz = o % os;
    Ok([
        (bx * os + ox) as u16,
        (by * os + oy) as u16,
        (bz * os + oz) as u16,
    ])
}

/// Flat token stream: a concatenation of patches
/// `(patch_start_block, offset, (block, offset) x >= 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub config: CodecConfig,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TokenStats {
    pub token_count: usize,
    pub patch_count: usize,
    pub triangle_count: usize,
    pub mean_patch_size: f64,
    /// Naive baseline: nine tokens per triangle.
    pub naive_token_count: usize,
    pub compression_ratio: f64,
}

/// Greedy fan-patch encoder.
///
/// Repeatedly selects the vertex with the most not-yet-covered incident
/// triangles (ties to the smallest `(b, o)`), walks its uncovered triangles
/// in edge-adjacent fan order starting from the smallest ring vertex,
/// splitting at gaps; a closed fan repeats its first ring vertex. Ring
/// traversal follows the winding of the patch triangles, so decoding
/// reproduces the original orientation. Patches are emitted in ascending
/// `(center block, center offset)` order.
pub fn encode(qm: &QuantizedMesh) -> Result<TokenSequence, CodecError> {
    let config = qm.config;
    let n_verts = qm.vertices.len();
    let mut keys: Vec<(u32, u32)> = Vec::with_capacity(n_verts);
    for v in &qm.vertices {
        keys.push(block_index(*v, &config)?);
    }

    // Incidence lists and uncovered counts.
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); n_verts];
    for (t, tri) in qm.triangles.iter().enumerate() {
        for &v in tri {
            incident[v as usize].push(t as u32);
        }
    }
    let mut uncovered: Vec<u32> = incident.iter().map(|l| l.len() as u32).collect();
    let mut covered = vec![false; qm.triangles.len()];
    let mut remaining = qm.triangles.len();

    // Max-heap on (count, smallest key wins ties).
    type HeapEntry = (u32, std::cmp::Reverse<(u32, u32)>, u32);
    let mut heap: BinaryHeap<HeapEntry> = (0..n_verts as u32)
        .filter(|&v| uncovered[v as usize] > 0)
        .map(|v| (uncovered[v as usize], std::cmp::Reverse(keys[v as usize]), v))
        .collect();

    // (center key, ring keys, token payload) per patch for canonical sorting.
    let mut patches: Vec<((u32, u32), Vec<u32>)> = Vec::new();

    while remaining > 0 {
        let center = loop {
            let (count, _, v) = heap.pop().expect("triangles remain but heap is empty");
            if count == uncovered[v as usize] && count > 0 {
                break v;
            }
        };

        // Directed ring edges u -> v from triangles (center, u, v).
        let mut ring: HashMap<u32, RingNode> = HashMap::new();
        let mut edges = 0usize;
        for &t in &incident[center as usize] {
            if covered[t as usize] {
                continue;
            }
            let tri = qm.triangles[t as usize];
            let pos = tri.iter().position(|&v| v == center).unwrap();
            let u = tri[(pos + 1) % 3];
            let v = tri[(pos + 2) % 3];
            ring.entry(u).or_default().out.push((keys[v as usize], v, t));
            ring.entry(v).or_default();
            ring.entry(u).or_default();
            ring.get_mut(&v).unwrap().in_unused += 1;
            edges += 1;
        }
        for node in ring.values_mut() {
            node.out.sort_unstable();
        }

        while edges > 0 {
            // Chain heads first, then cycle entry points, smallest key first.
            let start = ring
                .iter()
                .filter(|(_, n)| n.cursor < n.out.len())
                .map(|(&v, n)| (n.in_unused > 0, keys[v as usize], v))
                .min()
                .map(|(_, _, v)| v)
                .expect("edges remain but no start vertex");

            let mut seq: Vec<u32> = vec![start];
            let mut tris_in_patch: Vec<u32> = Vec::new();
            let mut cur = start;
            loop {
                let node = ring.get_mut(&cur).unwrap();
                if node.cursor >= node.out.len() {
                    break;
                }
                let (_, v, t) = node.out[node.cursor];
                node.cursor += 1;
                edges -= 1;
                ring.get_mut(&v).unwrap().in_unused -= 1;
                seq.push(v);
                tris_in_patch.push(t);
                cur = v;
                if cur == start {
                    break;
                }
            }
            debug_assert!(seq.len() >= 2, "patch with a single ring vertex");

            for &t in &tris_in_patch {
                covered[t as usize] = true;
                remaining -= 1;
                for &v in &qm.triangles[t as usize] {
                    uncovered[v as usize] -= 1;
                    let c = uncovered[v as usize];
                    if c > 0 {
                        heap.push((c, std::cmp::Reverse(keys[v as usize]), v));
                    }
                }
            }

            let ck = keys[center as usize];
            let mut payload = Vec::with_capacity(2 + 2 * seq.len());
            payload.push(config.patch_start_base() + ck.0);
            payload.push(config.offset_base() + ck.1);
            for &v in &seq {
                let k = keys[v as usize];
                payload.push(k.0);
                payload.push(config.offset_base() + k.1);
            }
            patches.push((ck, payload));
        }
    }

    patches.sort();
    let tokens = patches.into_iter().flat_map(|(_, p)| p).collect();
    Ok(TokenSequence { config, tokens })
}

#[derive(Default)]
struct RingNode {
    /// Outgoing fan edges, sorted by (target key, triangle id).
    out: Vec<((u32, u32), u32, u32)>,
    cursor: usize,
    in_unused: usize,
}

enum Classified {
    Block(u32),
    PatchStart(u32),
    Offset(u32),
}

fn classify(token: u32, config: &CodecConfig, position: usize) -> Result<Classified, CodecError> {
    let b3 = config.block_count();
    let off_base = config.offset_base();
    if token < b3 {
        Ok(Classified::Block(token))
    } else if token < off_base {
        Ok(Classified::PatchStart(token - b3))
    } else if token < off_base + config.offset_count() {
        Ok(Classified::Offset(token - off_base))
    } else {
        Err(CodecError::TokenOutOfRange { position, token })
    }
}

/// One left-to-right grammar pass, invoking `emit(center, ring)` per patch.
fn scan_patches(
    ts: &TokenSequence,
    mut emit: impl FnMut(usize, [u16; 3], &[[u16; 3]]) -> Result<(), CodecError>,
) -> Result<usize, CodecError> {
    let cfg = &ts.config;
    let toks = &ts.tokens;
    let mut pos = 0usize;
    let mut patch_count = 0usize;
    let take_offset = |pos: usize, what: &str| -> Result<u32, CodecError> {
        match toks.get(pos) {
            None => Err(CodecError::UnexpectedEnd {
                position: pos,
                message: format!("expected {what} offset"),
            }),
            Some(&t) => match classify(t, cfg, pos)? {
                Classified::Offset(o) => Ok(o),
                _ => Err(CodecError::Grammar {
                    position: pos,
                    message: format!("expected {what} offset, found block token {t}"),
                }),
            },
        }
    };
    while pos < toks.len() {
        let patch_start_pos = pos;
        let center_b = match classify(toks[pos], cfg, pos)? {
            Classified::PatchStart(b) => b,
            Classified::Block(_) => {
                return Err(CodecError::Grammar {
                    position: pos,
                    message: "expected patch-start block, found regular block".into(),
                })
            }
            Classified::Offset(_) => {
                return Err(CodecError::Grammar {
                    position: pos,
                    message: "offset without a preceding block".into(),
                })
            }
        };
        pos += 1;
        let center_o = take_offset(pos, "patch center")?;
        pos += 1;
        let center = block_index_inverse(center_b, center_o, cfg)?;
        let mut ring: Vec<[u16; 3]> = Vec::new();
        loop {
            match toks.get(pos) {
                None => break,
                Some(&t) => match classify(t, cfg, pos)? {
                    Classified::PatchStart(_) => break,
                    Classified::Offset(_) => {
                        return Err(CodecError::Grammar {
                            position: pos,
                            message: "offset without a preceding block".into(),
                        })
                    }
                    Classified::Block(b) => {
                        pos += 1;
                        let o = take_offset(pos, "ring vertex")?;
                        pos += 1;
                        ring.push(block_index_inverse(b, o, cfg)?);
                    }
                },
            }
        }
        if ring.len() < 2 {
            return Err(CodecError::Grammar {
                position: pos.min(toks.len().saturating_sub(1)),
                message: format!(
                    "patch starting at token {patch_start_pos} has {} ring vertices, need at least 2",
                    ring.len()
                ),
            });
        }
        emit(patch_start_pos, center, &ring)?;
        patch_count += 1;
    }
    Ok(patch_count)
}

/// Decode a token sequence back into a quantized mesh. Every grammar
/// violation is reported with the offending token position.
pub fn decode(ts: &TokenSequence) -> Result<QuantizedMesh, CodecError> {
    let mut map: HashMap<[u16; 3], u32> = HashMap::new();
    let mut vertices: Vec<[u16; 3]> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut intern = |q: [u16; 3]| -> u32 {
        *map.entry(q).or_insert_with(|| {
            vertices.push(q);
            (vertices.len() - 1) as u32
        })
    };
    scan_patches(ts, |patch_pos, center, ring| {
        let c = intern(center);
        let ring_ids: Vec<u32> = ring.iter().map(|&q| intern(q)).collect();
        for i in 0..ring_ids.len() - 1 {
            let (u, v) = (ring_ids[i], ring_ids[i + 1]);
            if u == c || v == c || u == v {
                return Err(CodecError::Grammar {
                    position: patch_pos,
                    message: "patch contains a degenerate triangle".into(),
                });
            }
            triangles.push([c, u, v]);
        }
        Ok(())
    })?;
    Ok(QuantizedMesh {
        config: ts.config,
        vertices,
        triangles,
        transform: None,
    })
}

/// Exact stream statistics: token and patch counts, mean triangles per
/// patch, and the compression ratio against nine tokens per triangle.
pub fn token_stats(ts: &TokenSequence) -> Result<TokenStats, CodecError> {
    let mut triangle_count = 0usize;
    let patch_count = scan_patches(ts, |_, _, ring| {
        triangle_count += ring.len() - 1;
        Ok(())
    })?;
    let naive = 9 * triangle_count;
    Ok(TokenStats {
        token_count: ts.tokens.len(),
        patch_count,
        triangle_count,
        mean_patch_size: if patch_count == 0 {
            0.0
        } else {
            triangle_count as f64 / patch_count as f64
        },
        naive_token_count: naive,
        compression_ratio: if naive == 0 {
            0.0
        } else {
            ts.tokens.len() as f64 / naive as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(b: u32, o: u32) -> CodecConfig {
        CodecConfig::new(b, o).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::new(16, 8).is_ok());
        assert!(CodecConfig::new(0, 8).is_err());
        assert!(CodecConfig::new(16, 0).is_err());
        assert!(CodecConfig::new(65536, 1).is_err()); // vocabulary overflow
        assert!(CodecConfig::new(256, 256).is_ok()); // R = 65536
        assert!(CodecConfig::new(256, 257).is_err());
    }

    #[test]
    fn block_index_examples() {
        let c = cfg(16, 8);
        assert_eq!(block_index([0, 0, 0], &c).unwrap(), (0, 0));
        assert_eq!(block_index([127, 127, 127], &c).unwrap(), (4095, 511));
        assert_eq!(block_index([10, 3, 5], &c).unwrap(), (256, 157));
        assert!(block_index([128, 0, 0], &c).is_err());
    }

    #[test]
    fn block_index_inverse_examples() {
        let c = cfg(16, 8);
        assert_eq!(block_index_inverse(0, 0, &c).unwrap(), [0, 0, 0]);
        assert_eq!(block_index_inverse(256, 157, &c).unwrap(), [10, 3, 5]);
        assert!(block_index_inverse(4096, 0, &c).is_err());
        assert!(block_index_inverse(0, 512, &c).is_err());
    }

    #[test]
    fn quantize_examples() {
        let c = cfg(16, 8); // R = 128
        let mesh = TriangleMesh::new(
            vec![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let (qm, report) = quantize(&mesh, c, None).unwrap();
        assert_eq!(qm.vertices[0], [0, 0, 0]);
        assert_eq!(qm.vertices[1], [127, 127, 127]);
        assert_eq!(report.merged_vertices, 0);
        assert_eq!(report.dropped_triangles, 0);

        // Two vertices 1e-9 apart merge; their triangle collapses.
        let mesh = TriangleMesh::new(
            vec![[0.5, 0.5, 0.5], [0.5 + 1e-9, 0.5, 0.5], [0.9, 0.9, 0.9]],
            vec![[0, 1, 2]],
        );
        let (qm, report) = quantize(&mesh, c, None).unwrap();
        assert_eq!(qm.vertices.len(), 2);
        assert_eq!(report.merged_vertices, 1);
        assert_eq!(report.dropped_triangles, 1);
        assert!(qm.triangles.is_empty());

        let mesh = TriangleMesh::new(vec![[1.5, 0.0, 0.0]], vec![]);
        assert!(matches!(
            quantize(&mesh, c, None),
            Err(CodecError::VertexOutOfBounds { index: 0, .. })
        ));
    }

    fn qm_from_lattice(
        vertices: Vec<[u16; 3]>,
        triangles: Vec<[u32; 3]>,
        config: CodecConfig,
    ) -> QuantizedMesh {
        QuantizedMesh {
            config,
            vertices,
            triangles,
            transform: None,
        }
    }

    #[test]
    fn single_triangle_is_six_tokens() {
        // One patch: patch-start block + center offset + 2 (block, offset)
        // ring pairs, 6 tokens against the 9-token naive baseline.
        let c = cfg(16, 8);
        let qm = qm_from_lattice(
            vec![[0, 0, 0], [10, 3, 5], [20, 20, 20]],
            vec![[0, 1, 2]],
            c,
        );
        let ts = encode(&qm).unwrap();
        assert_eq!(ts.tokens.len(), 6);
        let stats = token_stats(&ts).unwrap();
        assert_eq!(stats.patch_count, 1);
        assert_eq!(stats.triangle_count, 1);
        assert_eq!(stats.naive_token_count, 9);
        assert!((stats.compression_ratio - 6.0 / 9.0).abs() < 1e-12);
        let back = decode(&ts).unwrap();
        assert_eq!(back.triangles.len(), 1);
    }

    #[test]
    fn closed_fan_of_six() {
        let c = cfg(16, 8);
        // Center at (64,64,64), hexagon ring around it; triangles (c, i, i+1).
        let mut vertices = vec![[64u16, 64, 64]];
        for k in 0..6u16 {
            vertices.push([70 + k, 64 + k * 3 % 7, 60]);
        }
        let triangles: Vec<[u32; 3]> = (0..6u32).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        let qm = qm_from_lattice(vertices, triangles, c);
        let ts = encode(&qm).unwrap();
        assert_eq!(ts.tokens.len(), 16, "2 + 2*7 tokens for a closed 6-fan");
        let stats = token_stats(&ts).unwrap();
        assert_eq!(stats.patch_count, 1);
        assert_eq!(stats.triangle_count, 6);
        assert!((stats.compression_ratio - 16.0 / 54.0).abs() < 1e-12);
        let back = decode(&ts).unwrap();
        assert_eq!(back.triangles.len(), 6);
        // Winding survives: every decoded triangle appears in the source up
        // to rotation.
        let canon = |t: [u32; 3], vs: &[[u16; 3]]| {
            let p = [vs[t[0] as usize], vs[t[1] as usize], vs[t[2] as usize]];
            let mut best = 0;
            for i in 1..3 {
                if p[i] < p[best] {
                    best = i;
                }
            }
            [p[best], p[(best + 1) % 3], p[(best + 2) % 3]]
        };
        let mut orig: Vec<_> = qm
            .triangles
            .iter()
            .map(|&t| canon(t, &qm.vertices))
            .collect();
        let mut got: Vec<_> = back
            .triangles
            .iter()
            .map(|&t| canon(t, &back.vertices))
            .collect();
        orig.sort();
        got.sort();
        assert_eq!(orig, got);
    }

    #[test]
    fn encode_decode_idempotent() {
        let c = cfg(8, 4);
        let qm = qm_from_lattice(
            vec![[0, 0, 0], [5, 1, 2], [9, 9, 9], [3, 30, 7], [31, 2, 19]],
            vec![[0, 1, 2], [0, 2, 3], [1, 4, 2]],
            c,
        );
        let ts = encode(&qm).unwrap();
        let back = decode(&ts).unwrap();
        let ts2 = encode(&back).unwrap();
        assert_eq!(ts.tokens, ts2.tokens);
    }

    #[test]
    fn empty_mesh_empty_sequence() {
        let c = cfg(16, 8);
        let qm = qm_from_lattice(vec![], vec![], c);
        let ts = encode(&qm).unwrap();
        assert!(ts.tokens.is_empty());
        let back = decode(&ts).unwrap();
        assert!(back.triangles.is_empty());
        let stats = token_stats(&ts).unwrap();
        assert_eq!(stats.token_count, 0);
        assert_eq!(stats.patch_count, 0);
        assert_eq!(stats.compression_ratio, 0.0);
    }

    #[test]
    fn truncated_sequence_errors_at_final_position() {
        let c = cfg(16, 8);
        let qm = qm_from_lattice(
            vec![[0, 0, 0], [10, 3, 5], [20, 20, 20]],
            vec![[0, 1, 2]],
            c,
        );
        let mut ts = encode(&qm).unwrap();
        ts.tokens.pop();
        let err = decode(&ts).unwrap_err();
        match err {
            CodecError::UnexpectedEnd { position, .. } => assert_eq!(position, 5),
            CodecError::Grammar { position, .. } => assert_eq!(position, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn grammar_violations_name_positions() {
        let c = cfg(16, 8);
        // Offset token first.
        let ts = TokenSequence {
            config: c,
            tokens: vec![c.offset_base()],
        };
        match decode(&ts).unwrap_err() {
            CodecError::Grammar { position: 0, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
        // Token outside every range.
        let ts = TokenSequence {
            config: c,
            tokens: vec![c.vocabulary_size()],
        };
        match decode(&ts).unwrap_err() {
            CodecError::TokenOutOfRange {
                position: 0,
                token,
            } => assert_eq!(token, c.vocabulary_size()),
            other => panic!("unexpected {other:?}"),
        }
        // Patch with a single ring vertex.
        let ts = TokenSequence {
            config: c,
            tokens: vec![
                c.patch_start_base(),
                c.offset_base(),
                1,
                c.offset_base() + 1,
            ],
        };
        assert!(matches!(
            decode(&ts).unwrap_err(),
            CodecError::Grammar { .. }
        ));
    }

    #[test]
    fn token_ranges_and_patch_cover() {
        let c = cfg(16, 8);
        let qm = qm_from_lattice(
            vec![[0, 0, 0], [10, 3, 5], [20, 20, 20], [100, 90, 80]],
            vec![[0, 1, 2], [1, 3, 2]],
            c,
        );
        let ts = encode(&qm).unwrap();
        for &t in &ts.tokens {
            assert!(t < c.vocabulary_size());
        }
        // Patch cover: decoded triangle count equals input count.
        let stats = token_stats(&ts).unwrap();
        assert_eq!(stats.triangle_count, qm.triangles.len());
    }
}
