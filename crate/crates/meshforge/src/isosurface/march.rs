//! Single-cell polygonization.
//!
//! Instead of baked case tables, each cell's surface is built by contour
//! tracing on the cell boundary: every face contributes oriented segments
//! between its edge crossings, ambiguous faces (four crossings) are resolved
//! with the bilinear asymptotic decider, and the segments chain into closed
//! loops that are fanned into triangles. Because every face decision depends
//! only on that face's four corner values, the two cells sharing a face
//! always produce the same segments, so the global mesh is crack-free and
//! every interior edge is shared by exactly two opposingly oriented
//! triangles. Loops of four or more vertices are fanned around an interior
//! centroid vertex, which keeps non-convex loops manifold.

/// Corner `c` sits at unit offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
pub const CORNER_OFFSET: [[u8; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Edge endpoints, lower corner first. The canonical (lower, upper) order is
/// shared by every cell touching the grid edge, so interpolation is
/// bit-identical across cells.
pub const EDGE_CORNERS: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7), // x
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7), // y
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7), // z
];

/// For welding: (unit offset of the edge's lower corner, axis).
pub const EDGE_BASE_AXIS: [([u8; 3], u8); 12] = [
    ([0, 0, 0], 0),
    ([0, 1, 0], 0),
    ([0, 0, 1], 0),
    ([0, 1, 1], 0),
    ([0, 0, 0], 1),
    ([1, 0, 0], 1),
    ([0, 0, 1], 1),
    ([1, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([0, 1, 0], 2),
    ([1, 1, 0], 2),
];

struct Face {
    /// Corner indices in cyclic order around the face.
    corners: [usize; 4],
    /// `edges[i]` joins `corners[i]` and `corners[(i + 1) % 4]`.
    edges: [usize; 4],
    /// Outward normal of the face (unit cube).
    normal: [f64; 3],
}

const FACES: [Face; 6] = [
    Face {
        corners: [0, 2, 6, 4],
        edges: [4, 10, 6, 8],
        normal: [-1.0, 0.0, 0.0],
    },
    Face {
        corners: [1, 3, 7, 5],
        edges: [5, 11, 7, 9],
        normal: [1.0, 0.0, 0.0],
    },
    Face {
        corners: [0, 1, 5, 4],
        edges: [0, 9, 2, 8],
        normal: [0.0, -1.0, 0.0],
    },
    Face {
        corners: [2, 3, 7, 6],
        edges: [1, 11, 3, 10],
        normal: [0.0, 1.0, 0.0],
    },
    Face {
        corners: [0, 1, 3, 2],
        edges: [0, 5, 1, 4],
        normal: [0.0, 0.0, -1.0],
    },
    Face {
        corners: [4, 5, 7, 6],
        edges: [2, 7, 3, 6],
        normal: [0.0, 0.0, 1.0],
    },
];

/// One vertex of a traced loop: the cell edge it sits on and the
/// interpolation parameter from the edge's lower corner.
#[derive(Debug, Clone, Copy)]
pub struct LoopVertex {
    pub edge: usize,
    pub t: f64,
}

/// Closed, outward-oriented contour loops for one cell.
#[derive(Debug, Default)]
pub struct CellTopology {
    pub loops: Vec<Vec<LoopVertex>>,
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit_corner(c: usize) -> [f64; 3] {
    let o = CORNER_OFFSET[c];
    [o[0] as f64, o[1] as f64, o[2] as f64]
}

/// Crossing position on edge `e` in unit-cube coordinates.
fn unit_crossing(e: usize, t: f64) -> [f64; 3] {
    let (a, b) = EDGE_CORNERS[e];
    let pa = unit_corner(a);
    let pb = unit_corner(b);
    [
        pa[0] + t * (pb[0] - pa[0]),
        pa[1] + t * (pb[1] - pa[1]),
        pa[2] + t * (pb[2] - pa[2]),
    ]
}

/// Trace the cell's contour loops from its eight corner values.
///
/// Corner values equal to zero are nudged to `+nudge` before any sign test,
/// which removes degenerate on-corner cases. Loops come out oriented so a
/// triangle fan
/// following the loop order has its normal on the positive (outside) side.
pub fn march_topology(corner_values: &[f64; 8], nudge: f64) -> CellTopology {
    let mut w = *corner_values;
    for v in w.iter_mut() {
        if *v == 0.0 {
            *v = nudge;
        }
    }

    // Early out: uniform sign.
    let any_neg = w.iter().any(|v| *v < 0.0);
    let any_pos = w.iter().any(|v| *v > 0.0);
    if !(any_neg && any_pos) {
        return CellTopology::default();
    }

    // Interpolation parameter per crossing edge, in canonical edge order.
    let mut t = [0.0f64; 12];
    let mut crossing = [false; 12];
    for e in 0..12 {
        let (a, b) = EDGE_CORNERS[e];
        if (w[a] < 0.0) != (w[b] < 0.0) {
            crossing[e] = true;
            t[e] = w[a] / (w[a] - w[b]);
        }
    }

    // Directed segment per face: next[from_edge] = to_edge.
    let mut next: [Option<usize>; 12] = [None; 12];
    for face in &FACES {
        let vals = [
            w[face.corners[0]],
            w[face.corners[1]],
            w[face.corners[2]],
            w[face.corners[3]],
        ];
        let mut cut = [false; 4];
        let mut n_cut = 0;
        for i in 0..4 {
            if crossing[face.edges[i]] {
                cut[i] = true;
                n_cut += 1;
            }
        }
        // Segments as (cyclic edge index, cyclic edge index, reference corner index).
        let mut segs: [(usize, usize, usize); 2] = [(0, 0, 0); 2];
        let n_segs = match n_cut {
            0 => 0,
            2 => {
                let mut it = (0..4).filter(|&i| cut[i]);
                let i = it.next().unwrap();
                let j = it.next().unwrap();
                let r = (0..4).find(|&k| vals[k] < 0.0).unwrap();
                segs[0] = (i, j, r);
                1
            }
            4 => {
                // Alternating signs. The bilinear saddle decides which
                // diagonal pair of corners is connected across the face;
                // the two segments then isolate the other pair.
                let num = vals[0] * vals[2] - vals[1] * vals[3];
                let den = vals[0] + vals[2] - vals[1] - vals[3];
                let saddle_positive = num * den > 0.0;
                let isolate_odd = saddle_positive == (vals[0] > 0.0);
                if isolate_odd {
                    // Around corners 1 and 3.
                    segs[0] = (0, 1, 1);
                    segs[1] = (2, 3, 3);
                } else {
                    // Around corners 0 and 2.
                    segs[0] = (3, 0, 0);
                    segs[1] = (1, 2, 2);
                }
                2
            }
            _ => unreachable!("odd crossing count on a face"),
        };

        for &(ci, cj, cr) in &segs[..n_segs] {
            let e_from = face.edges[ci];
            let e_to = face.edges[cj];
            let q1 = unit_crossing(e_from, t[e_from]);
            let q2 = unit_crossing(e_to, t[e_to]);
            let dir = [q2[0] - q1[0], q2[1] - q1[1], q2[2] - q1[2]];
            let left = cross3(face.normal, dir);
            let mid = [
                0.5 * (q1[0] + q2[0]),
                0.5 * (q1[1] + q2[1]),
                0.5 * (q1[2] + q2[2]),
            ];
            let rp = unit_corner(face.corners[cr]);
            let side = dot3(left, [rp[0] - mid[0], rp[1] - mid[1], rp[2] - mid[2]]);
            let ref_negative = vals[cr] < 0.0;
            // Orient so the negative region lies to the right, seen from
            // outside the cell; traced loops then wind counter-clockwise
            // seen from the positive side.
            let (from, to) = if (side > 0.0) == ref_negative {
                (e_to, e_from)
            } else {
                (e_from, e_to)
            };
            debug_assert!(next[from].is_none(), "duplicate outgoing segment");
            next[from] = Some(to);
        }
    }

    // Chain segments into loops, starting each loop at its smallest edge id.
    let mut topology = CellTopology::default();
    let mut visited = [false; 12];
    for start in 0..12 {
        if next[start].is_none() || visited[start] {
            continue;
        }
        let mut lp = Vec::with_capacity(6);
        let mut cur = start;
        loop {
            debug_assert!(!visited[cur]);
            visited[cur] = true;
            lp.push(LoopVertex { edge: cur, t: t[cur] });
            cur = next[cur].expect("open contour chain");
            if cur == start {
                break;
            }
        }
        debug_assert!(lp.len() >= 3);
        topology.loops.push(lp);
    }
    debug_assert!((0..12).all(|e| !crossing[e] || visited[e]));
    topology
}

/// World-space position of a loop vertex for a cell at `origin` with
/// per-axis `size`.
pub fn world_crossing(origin: [f64; 3], size: [f64; 3], v: &LoopVertex) -> [f64; 3] {
    let u = unit_crossing(v.edge, v.t);
    [
        origin[0] + u[0] * size[0],
        origin[1] + u[1] * size[1],
        origin[2] + u[2] * size[2],
    ]
}

/// Triangulate one cell: loops of three vertices become one triangle, longer
/// loops are fanned around their centroid. Returns world-space triangles.
pub fn march_cell(
    corner_values: [f64; 8],
    cell_origin: [f64; 3],
    cell_size: f64,
) -> Vec<[[f64; 3]; 3]> {
    let size = [cell_size; 3];
    let nudge = 1e-12 * cell_size;
    let topo = march_topology(&corner_values, nudge);
    let mut tris = Vec::new();
    for lp in &topo.loops {
        let pts: Vec<[f64; 3]> = lp
            .iter()
            .map(|v| world_crossing(cell_origin, size, v))
            .collect();
        if pts.len() == 3 {
            tris.push([pts[0], pts[1], pts[2]]);
        } else {
            let n = pts.len() as f64;
            let mut m = [0.0f64; 3];
            for p in &pts {
                m[0] += p[0];
                m[1] += p[1];
                m[2] += p[2];
            }
            let m = [m[0] / n, m[1] / n, m[2] / n];
            for i in 0..pts.len() {
                let j = (i + 1) % pts.len();
                tris.push([m, pts[i], pts[j]]);
            }
        }
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_normal(t: &[[f64; 3]; 3]) -> [f64; 3] {
        let u = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
        let v = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
        cross3(u, v)
    }

    #[test]
    fn uniform_sign_cells_are_empty() {
        assert!(march_cell([-1.0; 8], [0.0; 3], 1.0).is_empty());
        assert!(march_cell([2.0; 8], [0.0; 3], 1.0).is_empty());
    }

    #[test]
    fn single_negative_corner_cuts_one_triangle() {
        for c in 0..8 {
            let mut w = [1.0f64; 8];
            w[c] = -1.0;
            let tris = march_cell(w, [0.0; 3], 1.0);
            assert_eq!(tris.len(), 1, "corner {c}");
            // Normal must point away from the negative corner.
            let n = tri_normal(&tris[0]);
            let corner = unit_corner(c);
            let center = [0.5, 0.5, 0.5];
            let away = [
                center[0] - corner[0],
                center[1] - corner[1],
                center[2] - corner[2],
            ];
            assert!(dot3(n, away) > 0.0, "corner {c} wound inward");
        }
    }

    #[test]
    fn single_positive_corner_cuts_one_triangle_inverted() {
        let mut w = [-1.0f64; 8];
        w[6] = 1.0;
        let tris = march_cell(w, [0.0; 3], 1.0);
        assert_eq!(tris.len(), 1);
        let n = tri_normal(&tris[0]);
        let toward = [
            unit_corner(6)[0] - 0.5,
            unit_corner(6)[1] - 0.5,
            unit_corner(6)[2] - 0.5,
        ];
        // Positive side is the cut-off corner now.
        assert!(dot3(n, toward) > 0.0);
    }

    #[test]
    fn slab_case_two_quads_fan() {
        // Bottom four corners negative: one quad loop, fanned around a centroid.
        let w = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
        let tris = march_cell(w, [0.0; 3], 1.0);
        assert_eq!(tris.len(), 4);
        for t in &tris {
            let n = tri_normal(t);
            assert!(n[2] > 0.0, "slab normal must point up (positive side)");
        }
    }

    #[test]
    fn every_sign_pattern_yields_closed_loops() {
        // Random magnitudes for all 256 sign configurations; tracing must
        // consume every crossing edge into closed loops (asserted inside) and
        // loops must have at least three vertices.
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) + 0.01
        };
        for pattern in 0u32..256 {
            for _rep in 0..4 {
                let mut w = [0.0f64; 8];
                for (c, v) in w.iter_mut().enumerate() {
                    let mag = rnd();
                    *v = if pattern >> c & 1 == 1 { -mag } else { mag };
                }
                let topo = march_topology(&w, 1e-12);
                for lp in &topo.loops {
                    assert!(lp.len() >= 3);
                }
                let n_crossings = (0..12)
                    .filter(|&e| {
                        let (a, b) = EDGE_CORNERS[e];
                        (w[a] < 0.0) != (w[b] < 0.0)
                    })
                    .count();
                let n_loop_vertices: usize = topo.loops.iter().map(|l| l.len()).sum();
                assert_eq!(n_crossings, n_loop_vertices, "pattern {pattern}");
            }
        }
    }

    #[test]
    fn exact_zero_corners_are_nudged() {
        let mut w = [1.0f64; 8];
        w[0] = 0.0;
        // Nudged positive: no crossing at all.
        assert!(march_cell(w, [0.0; 3], 1.0).is_empty());
        let mut w = [-1.0f64; 8];
        w[0] = 0.0;
        // Corner 0 becomes the only positive corner.
        assert_eq!(march_cell(w, [0.0; 3], 1.0).len(), 1);
    }
}
