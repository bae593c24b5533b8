//! Mesh, point-cloud and image files, tangent-plane patch export and
//! synthetic depth renders.

mod obj;
mod patches;
mod ply;
mod render;

pub use patches::{patch_soup, patch_triangle, plane_basis};
pub use render::{render_synthetic, view_centric, Camera, RENDER_SIZE};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{OrientedPointCloud, TriangleMesh};
pub use crate::model::write_atomic;
use crate::model::{InputImage, TangentPlane};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
    PlyBinary,
}

impl MeshFormat {
    /// `.obj` → OBJ, `.ply` → binary PLY.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::PlyBinary),
            _ => Err(Error::Unsupported(format!("mesh file extension of {}", path.display()))),
        }
    }
}

/// PLY body encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

impl PlyEncoding {
    fn inner(self) -> ply::Encoding {
        match self {
            PlyEncoding::Ascii => ply::Encoding::Ascii,
            PlyEncoding::BinaryLittleEndian => ply::Encoding::BinaryLe,
        }
    }
}

/// A loaded mesh and the number of degenerate faces dropped on load.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub dropped_faces: usize,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn build_mesh(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<LoadedMesh> {
    let (mesh, dropped_faces) = TriangleMesh::with_dropped_count(vertices, faces)?;
    if dropped_faces > 0 {
        log::warn!("dropped {dropped_faces} degenerate face(s)");
    }
    Ok(LoadedMesh { mesh, dropped_faces })
}

/// Parses OBJ text.
pub fn mesh_from_obj(text: &str, source: &str) -> Result<LoadedMesh> {
    let (v, f) = obj::parse_obj(text, source)?;
    build_mesh(v, f)
}

/// Parses PLY bytes (ASCII or binary little-endian). Polygons are
/// fan-triangulated.
pub fn mesh_from_ply(bytes: &[u8], source: &str) -> Result<LoadedMesh> {
    let doc = ply::parse_ply(bytes, source)?;
    let vertices = ply_positions(&doc, source)?;
    let mut faces = Vec::new();
    if let Some(face) = doc.element("face") {
        let lists = face.list(&["vertex_indices", "vertex_index"]).ok_or_else(|| Error::Parse {
            path: source.to_string(),
            location: "header".into(),
            message: "face element without a vertex_indices list".into(),
        })?;
        for (i, l) in lists.iter().enumerate() {
            if l.len() < 3 || l.iter().any(|&x| x < 0.0 || x.fract() != 0.0) {
                return Err(Error::Parse {
                    path: source.to_string(),
                    location: format!("face {i}"),
                    message: format!("invalid face {l:?}"),
                });
            }
            for k in 1..l.len() - 1 {
                faces.push([l[0] as usize, l[k] as usize, l[k + 1] as usize]);
            }
        }
    }
    build_mesh(vertices, faces)
}

fn ply_column<'a>(doc: &'a ply::PlyDocument, name: &str, source: &str) -> Result<&'a [f64]> {
    doc.element("vertex")
        .and_then(|v| v.scalar(name))
        .ok_or_else(|| Error::Parse {
            path: source.to_string(),
            location: "header".into(),
            message: format!("vertex element lacks property `{name}`"),
        })
}

fn ply_positions(doc: &ply::PlyDocument, source: &str) -> Result<Vec<[f64; 3]>> {
    let (x, y, z) = (ply_column(doc, "x", source)?, ply_column(doc, "y", source)?, ply_column(doc, "z", source)?);
    Ok((0..x.len()).map(|i| [x[i], y[i], z[i]]).collect())
}

pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let bytes = read(path)?;
    match MeshFormat::from_path(path)? {
        MeshFormat::Obj => {
            let text = std::str::from_utf8(&bytes).map_err(|_| Error::Parse {
                path: name(path),
                location: "file".into(),
                message: "OBJ file is not UTF-8".into(),
            })?;
            mesh_from_obj(text, &name(path))
        }
        _ => mesh_from_ply(&bytes, &name(path)),
    }
}

pub fn mesh_to_bytes(mesh: &TriangleMesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Obj => obj::write_obj(mesh.vertices(), mesh.faces()).into_bytes(),
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => {
            let enc = if format == MeshFormat::PlyAscii { ply::Encoding::Ascii } else { ply::Encoding::BinaryLe };
            let rows: Vec<Vec<f64>> = mesh.vertices().iter().map(|v| v.to_vec()).collect();
            ply::write_ply(enc, &["x", "y", "z"], &rows, Some(mesh.faces()))
        }
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    write_atomic(path, &mesh_to_bytes(mesh, format))
}

const CLOUD_COLUMNS: [&str; 6] = ["x", "y", "z", "nx", "ny", "nz"];

pub fn cloud_to_ply(cloud: &OrientedPointCloud, encoding: PlyEncoding) -> Result<Vec<u8>> {
    if cloud.is_empty() {
        return Err(Error::domain("cannot save an empty point cloud"));
    }
    let rows: Vec<Vec<f64>> = cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .map(|(p, n)| p.iter().chain(n).copied().collect())
        .collect();
    Ok(ply::write_ply(encoding.inner(), &CLOUD_COLUMNS, &rows, None))
}

/// Writes `x y z nx ny nz` vertices as doubles.
pub fn save_oriented_cloud(cloud: &OrientedPointCloud, path: &Path, encoding: PlyEncoding) -> Result<()> {
    write_atomic(path, &cloud_to_ply(cloud, encoding)?)
}

pub fn cloud_from_ply(bytes: &[u8], source: &str) -> Result<OrientedPointCloud> {
    let doc = ply::parse_ply(bytes, source)?;
    let points = ply_positions(&doc, source)?;
    let (nx, ny, nz) = (ply_column(&doc, "nx", source)?, ply_column(&doc, "ny", source)?, ply_column(&doc, "nz", source)?);
    let normals = (0..nx.len()).map(|i| [nx[i], ny[i], nz[i]]).collect();
    OrientedPointCloud::from_unnormalized(points, normals)
}

pub fn load_oriented_cloud(path: &Path) -> Result<OrientedPointCloud> {
    cloud_from_ply(&read(path)?, &name(path))
}

/// Result of [`export_patches`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchExport {
    pub triangles: usize,
    pub skipped: usize,
}

/// Writes one equilateral triangle per tangent plane as an OBJ triangle
/// soup (three fresh vertices per face).
pub fn export_patches(planes: &[TangentPlane], edge: f64, path: &Path) -> Result<PatchExport> {
    if !(edge.is_finite() && edge > 0.0) {
        return Err(Error::domain(format!("patch edge must be positive, got {edge}")));
    }
    let (tris, skipped) = patch_soup(planes, edge);
    let vertices: Vec<[f64; 3]> = tris.iter().flatten().copied().collect();
    let faces: Vec<[usize; 3]> = (0..tris.len()).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
    write_atomic(path, obj::write_obj(&vertices, &faces).as_bytes())?;
    Ok(PatchExport {
        triangles: tris.len(),
        skipped,
    })
}

const IMAGE_MAGIC: &[u8; 4] = b"HOFI";

/// Raw image: `"HOFI"`, `u32` height, width, channels, then `f64` pixels,
/// all little-endian.
pub fn image_to_raw(img: &InputImage) -> Vec<u8> {
    let mut b = IMAGE_MAGIC.to_vec();
    for d in [img.height(), img.width(), img.channels()] {
        b.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for p in img.pixels() {
        b.extend_from_slice(&p.to_le_bytes());
    }
    b
}

pub fn image_from_raw(bytes: &[u8], source: &str) -> Result<InputImage> {
    let bad = |m: &str| Error::Parse {
        path: source.to_string(),
        location: "header".into(),
        message: m.into(),
    };
    if bytes.len() < 16 || &bytes[..4] != IMAGE_MAGIC {
        return Err(bad("not a raw image"));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h.checked_mul(w).and_then(|x| x.checked_mul(c)).ok_or_else(|| bad("image too large"))?;
    if bytes.len() != 16 + 8 * n {
        return Err(bad("pixel data length does not match the header"));
    }
    let px = bytes[16..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    InputImage::new(h, w, c, px)
}

pub fn save_image(img: &InputImage, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return save_png(img, path);
    }
    write_atomic(path, &image_to_raw(img))
}

/// Loads a raw image, or a PNG when built with the `png` feature.
pub fn load_image(path: &Path) -> Result<InputImage> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return load_png(path);
    }
    image_from_raw(&read(path)?, &name(path))
}

#[cfg(feature = "png")]
fn save_png(img: &InputImage, path: &Path) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Unsupported("PNG output needs three channels".into()));
    }
    let bytes: Vec<u8> = img.pixels().iter().map(|&p| (p * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer size matches");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Unsupported(format!("PNG encoding failed: {e}")))?;
    write_atomic(path, out.get_ref())
}

#[cfg(feature = "png")]
fn load_png(path: &Path) -> Result<InputImage> {
    let img = image::load_from_memory_with_format(&read(path)?, image::ImageFormat::Png)
        .map_err(|e| Error::Parse {
            path: name(path),
            location: "file".into(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let px = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    InputImage::new(img.height() as usize, img.width() as usize, 3, px)
}

#[cfg(not(feature = "png"))]
fn save_png(_: &InputImage, path: &Path) -> Result<()> {
    Err(Error::Unsupported(format!("{}: built without PNG support", path.display())))
}

#[cfg(not(feature = "png"))]
fn load_png(path: &Path) -> Result<InputImage> {
    Err(Error::Unsupported(format!("{}: built without PNG support", path.display())))
}

#[cfg(test)]
mod tests;
