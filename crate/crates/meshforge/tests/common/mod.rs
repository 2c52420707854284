//! Shared helpers for integration suites.

use meshforge::mesh::{add, cross, distance, dot, scale, sub};

/// O(n^4) reference minimal enclosing sphere: try every support subset of
/// size <= 4 and keep the smallest candidate containing all points.
pub fn brute_force_min_sphere(points: &[[f64; 3]]) -> ([f64; 3], f64) {
    let contains = |c: [f64; 3], r: f64| points.iter().all(|&p| distance(c, p) <= r + 1e-9);
    let mut best: Option<([f64; 3], f64)> = None;
    let mut consider = |c: [f64; 3], r: f64| {
        if contains(c, r) && best.is_none_or(|(_, br)| r < br) {
            best = Some((c, r));
        }
    };
    let n = points.len();
    if n == 1 {
        return (points[0], 0.0);
    }
    for i in 0..n {
        for j in i + 1..n {
            let c = scale(add(points[i], points[j]), 0.5);
            consider(c, distance(c, points[i]));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if let Some((c, r)) = circumcircle(points[i], points[j], points[k]) {
                    consider(c, r);
                }
                for l in k + 1..n {
                    if let Some((c, r)) = circumsphere(points[i], points[j], points[k], points[l])
                    {
                        consider(c, r);
                    }
                }
            }
        }
    }
    best.expect("brute force found a sphere")
}

fn circumcircle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<([f64; 3], f64)> {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let n = cross(ab, ac);
    let n2 = dot(n, n);
    if n2 < 1e-20 {
        return None;
    }
    let term = add(
        scale(cross(n, ab), dot(ac, ac)),
        scale(cross(ac, n), dot(ab, ab)),
    );
    let center = sub(a, scale(term, -0.5 / n2));
    Some((center, distance(center, a)))
}

fn circumsphere(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> Option<([f64; 3], f64)> {
    let rows = [sub(b, a), sub(c, a), sub(d, a)];
    let rhs = [
        (dot(b, b) - dot(a, a)) * 0.5,
        (dot(c, c) - dot(a, a)) * 0.5,
        (dot(d, d) - dot(a, a)) * 0.5,
    ];
    let det = dot(rows[0], cross(rows[1], rows[2]));
    if det.abs() < 1e-10 {
        return None;
    }
    let cx = cross(rows[1], rows[2]);
    let cy = cross(rows[2], rows[0]);
    let cz = cross(rows[0], rows[1]);
    let center = [
        (rhs[0] * cx[0] + rhs[1] * cy[0] + rhs[2] * cz[0]) / det,
        (rhs[0] * cx[1] + rhs[1] * cy[1] + rhs[2] * cz[1]) / det,
        (rhs[0] * cx[2] + rhs[1] * cy[2] + rhs[2] * cz[2]) / det,
    ];
    Some((center, distance(center, a)))
}
