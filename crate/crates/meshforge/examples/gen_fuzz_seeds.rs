//! Regenerate the fuzz corpus seed files under fuzz/corpus/.

use meshforge::codec::{encode, quantize, write_tokens, CodecConfig};
use meshforge::field::{sphere_field, Aabb};
use meshforge::isosurface::extract_dense;
use meshforge::meshkit::{normalize_to_unit_sphere, write_obj, write_ply, PointCloud};
use meshforge::watertight::TsdfVolume;

fn main() {
    let root = std::path::Path::new("fuzz/corpus");

    // OBJ seeds: a tetrahedron with all face syntax forms, and a tiny sphere.
    let obj_dir = root.join("obj_parse");
    std::fs::create_dir_all(&obj_dir).unwrap();
    std::fs::write(
        obj_dir.join("tetra.obj"),
        "# seed\nusemtl red\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvt 0 0\nvn 0 0 1\n\
f 1 3 2\nf 1/1 2/1 4/1\nf 1//1 4//1 3//1\nf 2/1/1 3/1/1 4/1/1\n",
    )
    .unwrap();
    std::fs::write(
        obj_dir.join("quad_negative.obj"),
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\no thing\ng grp\ns off\n",
    )
    .unwrap();
    let f = sphere_field([0.0; 3], 0.7).unwrap();
    let (mesh, _) = extract_dense(&f, 8, Aabb::default()).unwrap();
    std::fs::write(obj_dir.join("sphere8.obj"), write_obj(&mesh)).unwrap();

    // PLY seeds: plain, with normals, with labels.
    let ply_dir = root.join("ply_parse");
    std::fs::create_dir_all(&ply_dir).unwrap();
    let points = vec![[0.0f32, 0.5, -1.0], [0.25, -0.75, 0.125]];
    std::fs::write(
        ply_dir.join("plain.ply"),
        write_ply(&PointCloud {
            points: points.clone(),
            normals: None,
            inside: None,
        }),
    )
    .unwrap();
    std::fs::write(
        ply_dir.join("labeled.ply"),
        write_ply(&PointCloud {
            points: points.clone(),
            normals: Some(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]),
            inside: Some(vec![true, false]),
        }),
    )
    .unwrap();

    // Token stream seeds: encoded tetrahedron and sphere.
    let tok_dir = root.join("tokens_decode");
    std::fs::create_dir_all(&tok_dir).unwrap();
    for (name, mesh) in [
        (
            "tetra.p3tk",
            meshforge::TriangleMesh::new(
                vec![
                    [0.0, 0.0, 0.0],
                    [0.9, 0.0, 0.0],
                    [0.0, 0.9, 0.0],
                    [0.0, 0.0, 0.9],
                ],
                vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
            ),
        ),
        ("sphere8.p3tk", mesh.clone()),
    ] {
        let (normalized, _) = normalize_to_unit_sphere(&mesh).unwrap();
        let (qm, _) = quantize(&normalized, CodecConfig::default(), None).unwrap();
        let ts = encode(&qm).unwrap();
        let mut buf = Vec::new();
        write_tokens(&ts, &mut buf).unwrap();
        std::fs::write(tok_dir.join(name), buf).unwrap();
    }

    // Volume seed: small fused sphere.
    let vol_dir = root.join("volume_parse");
    std::fs::create_dir_all(&vol_dir).unwrap();
    let volume = TsdfVolume::new([4, 4, 4], [-1.05; 3], 0.525, 0.1);
    volume.save(&vol_dir.join("empty4.p3vl")).unwrap();
    let (mesh64, _) = extract_dense(&f, 8, Aabb::default()).unwrap();
    let cfg = meshforge::watertight::WatertightConfig {
        views: 12,
        depth_resolution: 64,
        volume_resolution: 32,
        ..Default::default()
    };
    let (_, fused) = meshforge::watertight::watertight_volume(&mesh64, &cfg).unwrap();
    fused.save(&vol_dir.join("sphere32.p3vl")).unwrap();
    println!("seeds written");
}
