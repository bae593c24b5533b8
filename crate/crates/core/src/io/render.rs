use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::TriangleMesh;
use crate::model::InputImage;

/// Pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    /// Viewing direction (need not be unit).
    pub forward: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        Self {
            eye,
            forward: vec3::sub(target, eye),
            up,
            fov_deg: 40.0,
        }
    }

    /// Camera on a sphere of radius `distance` around `target`, at the given
    /// azimuth/elevation in degrees, with `+z` up.
    pub fn orbit(target: Vec3, distance: f64, azimuth_deg: f64, elevation_deg: f64) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let up = if el.cos().abs() < 1e-9 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
        Self::look_at(vec3::add(target, vec3::scale(dir, distance)), target, up)
    }

    /// Orthonormal `(right, up, forward)` frame.
    pub fn frame(&self) -> Result<[Vec3; 3]> {
        let f = vec3::normalized(self.forward, 1e-12).ok_or_else(|| Error::domain("camera forward vector is zero"))?;
        let r = vec3::normalized(vec3::cross(f, self.up), 1e-12)
            .ok_or_else(|| Error::domain("camera up vector is parallel to forward"))?;
        Ok([r, vec3::cross(r, f), f])
    }

    /// Rotation taking world directions into camera coordinates
    /// (`x` right, `y` up, `z` towards the viewer).
    pub fn view_rotation(&self) -> Result<[[f64; 3]; 3]> {
        let [r, u, f] = self.frame()?;
        Ok([r, u, vec3::scale(f, -1.0)])
    }
}

/// `mesh` rotated about its centroid into the camera's view-centric frame.
pub fn view_centric(mesh: &TriangleMesh, camera: &Camera) -> Result<TriangleMesh> {
    let rot = camera.view_rotation()?;
    let c = mesh.centroid();
    Ok(mesh.transformed(&rot, vec3::sub(c, vec3::rotate(&rot, c))))
}

/// Distance along the ray to the triangle, if hit in front of the origin.
fn ray_triangle(o: Vec3, d: Vec3, [a, b, c]: [Vec3; 3]) -> Option<f64> {
    let e1 = vec3::sub(b, a);
    let e2 = vec3::sub(c, a);
    let p = vec3::cross(d, e2);
    let det = vec3::dot(e1, p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = vec3::sub(o, a);
    let u = vec3::dot(s, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = vec3::cross(s, e1);
    let v = vec3::dot(d, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = vec3::dot(e2, q) * inv;
    (t > 1e-12).then_some(t)
}

pub const RENDER_SIZE: usize = 64;

/// 64×64 depth render, grey replicated to three channels. A hit at ray
/// distance `t` has value `1 / (1 + t)`; misses are 0.
pub fn render_synthetic(mesh: &TriangleMesh, camera: &Camera) -> Result<InputImage> {
    if vec3::norm(vec3::sub(camera.eye, mesh.centroid())) < 1e-12 {
        return Err(Error::domain("camera is placed at the mesh centroid"));
    }
    if !(camera.fov_deg > 0.0 && camera.fov_deg < 180.0) {
        return Err(Error::domain(format!("field of view {} out of range", camera.fov_deg)));
    }
    let [right, up, fwd] = camera.frame()?;
    let half = (camera.fov_deg.to_radians() / 2.0).tan();
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
    let n = RENDER_SIZE;
    let depth: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / n, idx % n);
            let sx = ((col as f64 + 0.5) / n as f64 * 2.0 - 1.0) * half;
            let sy = (1.0 - (row as f64 + 0.5) / n as f64 * 2.0) * half;
            let d = vec3::add(fwd, vec3::add(vec3::scale(right, sx), vec3::scale(up, sy)));
            let d = vec3::normalized(d, 0.0).expect("non-zero ray");
            let t = tris
                .iter()
                .filter_map(|&tri| ray_triangle(camera.eye, d, tri))
                .fold(f64::INFINITY, f64::min);
            if t.is_finite() {
                1.0 / (1.0 + t)
            } else {
                0.0
            }
        })
        .collect();
    let pixels = depth.iter().flat_map(|&v| [v, v, v]).collect();
    InputImage::new(n, n, 3, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::icosphere;

    fn lit(img: &InputImage) -> usize {
        img.pixels().chunks(3).filter(|p| p[0] > 0.0).count()
    }

    #[test]
    fn looking_away_is_blank() {
        let mesh = icosphere(2);
        let cam = Camera::look_at([0.0, 0.0, 4.0], [0.0, 0.0, 8.0], [0.0, 1.0, 0.0]);
        assert_eq!(lit(&render_synthetic(&mesh, &cam).unwrap()), 0);
    }

    #[test]
    fn roll_keeps_silhouette_size() {
        let mesh = icosphere(3);
        let a = Camera::look_at([0.0, 0.0, 4.0], [0.0; 3], [0.0, 1.0, 0.0]);
        let b = Camera::look_at([0.0, 0.0, 4.0], [0.0; 3], [1.0, 0.0, 0.0]);
        let (na, nb) = (lit(&render_synthetic(&mesh, &a).unwrap()), lit(&render_synthetic(&mesh, &b).unwrap()));
        assert!(na > 100);
        assert!((na as f64 - nb as f64).abs() <= 0.02 * na as f64, "{na} vs {nb}");
    }

    #[test]
    fn nearer_is_bigger_and_brighter() {
        let mesh = icosphere(2);
        let mean = |z: f64| {
            let cam = Camera::look_at([0.0, 0.0, z], [0.0; 3], [0.0, 1.0, 0.0]);
            let img = render_synthetic(&mesh, &cam).unwrap();
            img.pixels().iter().sum::<f64>() / img.pixels().len() as f64
        };
        assert!(mean(3.0) > mean(6.0));
    }

    #[test]
    fn camera_at_centroid_fails() {
        let mesh = icosphere(1);
        let cam = Camera::look_at(mesh.centroid(), [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert!(matches!(render_synthetic(&mesh, &cam), Err(Error::Domain(_))));
    }

    #[test]
    fn deterministic_and_view_centric_keeps_centroid() {
        let mesh = icosphere(1);
        let cam = Camera::orbit([0.0; 3], 3.0, 30.0, 20.0);
        assert_eq!(render_synthetic(&mesh, &cam).unwrap(), render_synthetic(&mesh, &cam).unwrap());
        let v = view_centric(&mesh, &cam).unwrap();
        assert!(vec3::norm(vec3::sub(v.centroid(), mesh.centroid())) < 1e-12);
    }
}
