use meshforge::field::sphere_field;
use meshforge::isosurface::{extract, ExtractionConfig};

fn main() {
    let f = sphere_field([0.0; 3], 0.8).unwrap();
    for d in [256u32, 512] {
        let t0 = std::time::Instant::now();
        let (mesh, stats) = extract(&f, &ExtractionConfig::new(d)).unwrap();
        println!(
            "D={d}: queries={} dense={} reduction={:.1}x tris={} time={:.2}s levels={:?}",
            stats.queries_total,
            stats.dense_equivalent,
            stats.reduction_factor(),
            mesh.triangles.len(),
            t0.elapsed().as_secs_f64(),
            stats.per_level_active,
        );
    }
}
