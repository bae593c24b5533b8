use super::*;
use crate::geometry::primitives::{icosphere, unit_cube};
use crate::geometry::sample_mesh_uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CUBE_OBJ: &str = "# cube
o cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
vn 0 0 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

#[test]
fn golden_cube() {
    let m = mesh_from_obj(CUBE_OBJ, "cube.obj").unwrap();
    assert_eq!((m.mesh.vertices().len(), m.mesh.faces().len(), m.dropped_faces), (8, 12, 0));
    assert!((m.mesh.total_area() - 6.0).abs() < 1e-12);
}

#[test]
fn quad_obj_doubles_faces() {
    let quads = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nf 1 2 3 4\nf 1/1/1 2/2/2 6/3/3 5/4/4\n";
    let m = mesh_from_obj(quads, "q").unwrap();
    assert_eq!(m.mesh.faces().len(), 4);
}

#[test]
fn degenerate_faces_are_counted() {
    let text = "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n";
    let m = mesh_from_obj(text, "d").unwrap();
    assert_eq!((m.mesh.faces().len(), m.dropped_faces), (1, 1));
}

fn random_mesh(seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<[f64; 3]> = (0..50).map(|_| [rng.random(), rng.random(), rng.random::<f64>() * 1e-3]).collect();
    let f: Vec<[usize; 3]> = (0..80).map(|_| [rng.random_range(0..50), rng.random_range(0..50), rng.random_range(0..50)]).collect();
    TriangleMesh::new(v, f).unwrap()
}

#[test]
fn mesh_round_trips_exactly_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = random_mesh(1);
    for (fmt, file) in [(MeshFormat::Obj, "m.obj"), (MeshFormat::PlyAscii, "a.ply"), (MeshFormat::PlyBinary, "b.ply")] {
        let path = dir.path().join(file);
        save_mesh(&mesh, &path, fmt).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.mesh, mesh, "{fmt:?}");
    }
    let bin = mesh_to_bytes(&mesh, MeshFormat::PlyBinary);
    let again = mesh_to_bytes(&mesh_from_ply(&bin, "b").unwrap().mesh, MeshFormat::PlyBinary);
    assert_eq!(bin, again);
}

#[test]
fn cloud_round_trip_and_empty_error() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sample_mesh_uniform(&icosphere(2), 300, 3).unwrap();
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let path = dir.path().join("c.ply");
        save_oriented_cloud(&cloud, &path, enc).unwrap();
        let back = load_oriented_cloud(&path).unwrap();
        for (a, b) in back.points.iter().zip(&cloud.points).chain(back.normals.iter().zip(&cloud.normals)) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }
    let empty = OrientedPointCloud::default();
    assert!(matches!(save_oriented_cloud(&empty, &dir.path().join("e.ply"), PlyEncoding::Ascii), Err(Error::Domain(_))));
    assert!(!dir.path().join("e.ply").exists());
}

/// Checks the PLY header grammar: magic, format, then element blocks each
/// followed by property lines, then `end_header`.
fn valid_header(bytes: &[u8]) -> bool {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return false;
    }
    let fmt = lines.next().unwrap_or("");
    if fmt != "format ascii 1.0" && fmt != "format binary_little_endian 1.0" {
        return false;
    }
    let mut in_element = false;
    for l in lines {
        let t: Vec<&str> = l.split(' ').collect();
        match t.as_slice() {
            ["end_header"] => return in_element,
            ["element", _, n] if n.parse::<usize>().is_ok() => in_element = true,
            ["property", "double" | "float" | "int" | "uchar", _] if in_element => {}
            ["property", "list", "uchar", "int", _] if in_element => {}
            ["comment", ..] => {}
            _ => return false,
        }
    }
    false
}

#[test]
fn reconstruction_sized_cloud_has_valid_header() {
    let cloud = sample_mesh_uniform(&unit_cube(), 2500, 4).unwrap();
    let bytes = cloud_to_ply(&cloud, PlyEncoding::Ascii).unwrap();
    assert!(valid_header(&bytes));
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.contains("element vertex 2500\n"));
    assert_eq!(text.lines().count(), 2500 + 10);
    assert!(valid_header(&mesh_to_bytes(&unit_cube(), MeshFormat::PlyBinary)));
}

#[test]
fn writers_are_deterministic() {
    let cloud = sample_mesh_uniform(&unit_cube(), 100, 5).unwrap();
    assert_eq!(cloud_to_ply(&cloud, PlyEncoding::Ascii).unwrap(), cloud_to_ply(&cloud, PlyEncoding::Ascii).unwrap());
}

#[test]
fn patch_export_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sample_mesh_uniform(&icosphere(2), 1000, 6).unwrap();
    let planes: Vec<TangentPlane> = cloud.points.iter().zip(&cloud.normals).map(|(&p, &v)| TangentPlane { p, v }).collect();
    let path = dir.path().join("p.obj");
    let r = export_patches(&planes, 0.02, &path).unwrap();
    assert_eq!(r, PatchExport { triangles: 1000, skipped: 0 });
    let m = load_mesh(&path).unwrap();
    assert_eq!((m.mesh.vertices().len(), m.mesh.faces().len()), (3000, 1000));
    assert!(export_patches(&planes, 0.0, &path).is_err());
}

#[test]
fn raw_image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = InputImage::new(2, 3, 1, vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0]).unwrap();
    let path = dir.path().join("i.hofi");
    save_image(&img, &path).unwrap();
    assert_eq!(load_image(&path).unwrap(), img);
    assert!(image_from_raw(&image_to_raw(&img)[..20], "t").is_err());
}

#[test]
fn missing_file_reports_path() {
    let err = load_mesh(Path::new("/nonexistent/x.obj")).unwrap_err().to_string();
    assert!(err.contains("/nonexistent/x.obj"), "{err}");
}
