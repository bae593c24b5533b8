use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Faces with area below this are dropped when a mesh is built.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with no degenerate faces.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, dropping faces with area below [`DEGENERATE_AREA`].
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let (mesh, dropped) = Self::with_dropped_count(vertices, faces)?;
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }
        Ok(mesh)
    }

    /// Like [`TriangleMesh::new`] but also returns how many faces were dropped.
    pub fn with_dropped_count(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<(Self, usize)> {
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("mesh vertex {i}")));
        }
        let nv = vertices.len();
        if let Some((fi, f)) = faces.iter().enumerate().find(|(_, f)| f.iter().any(|&i| i >= nv)) {
            return Err(Error::contract(format!(
                "face {fi} {f:?} references a vertex beyond {nv}"
            )));
        }
        let total = faces.len();
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]) >= DEGENERATE_AREA)
            .collect();
        let dropped = total - faces.len();
        Ok((Self { vertices, faces }, dropped))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Mean of the vertex positions.
    pub fn centroid(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        let s = self.vertices.iter().fold([0.0; 3], |acc, &v| vec3::add(acc, v));
        vec3::scale(s, 1.0 / n)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Applies `v ↦ R·v + t` to every vertex.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: Vec3) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|&v| vec3::add(vec3::rotate(rotation, v), translation))
            .collect();
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }

    /// Same mesh with every face's winding reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| [f[0], f[2], f[1]]).collect(),
        }
    }
}

pub(crate) fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
}

/// Unit normal of triangle `(a, b, c)`: `(b − a) × (c − a)` normalized.
pub fn triangle_normal(a: Vec3, b: Vec3, c: Vec3) -> Result<Vec3> {
    let n = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
    if 0.5 * vec3::norm(n) < DEGENERATE_AREA {
        return Err(Error::domain(format!("degenerate triangle {a:?} {b:?} {c:?}")));
    }
    let len = vec3::norm(n);
    Ok([n[0] / len, n[1] / len, n[2] / len])
}

/// Unit normal of `face`; the file's winding order fixes the sign.
pub fn face_normal(mesh: &TriangleMesh, face: usize) -> Result<Vec3> {
    if face >= mesh.faces.len() {
        return Err(Error::contract(format!(
            "face {face} out of range ({} faces)",
            mesh.faces.len()
        )));
    }
    let [a, b, c] = mesh.triangle(face);
    triangle_normal(a, b, c)
}
