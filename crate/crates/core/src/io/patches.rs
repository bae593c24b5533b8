use crate::geometry::vec3::{self, Vec3};
use crate::model::TangentPlane;

/// Unit vectors `(u, w)` spanning the plane orthogonal to unit `n`, with
/// `u × w = n`.
///
/// `u` is the coordinate axis least aligned with `n` (lowest index on
/// ties), Gram-Schmidt-orthogonalised against `n`; `w = n × u`.
pub fn plane_basis(n: Vec3) -> (Vec3, Vec3) {
    let mut axis = 0;
    for k in 1..3 {
        if n[k].abs() < n[axis].abs() {
            axis = k;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let u = vec3::normalized(vec3::sub(e, vec3::scale(n, vec3::dot(e, n))), 0.0).expect("axis is not parallel to n");
    let w = vec3::cross(n, u);
    (u, w)
}

/// Equilateral triangle with side `edge`, centroid `p`, counter-clockwise
/// around `n` (so its face normal is `+n`).
pub fn patch_triangle(p: Vec3, n: Vec3, edge: f64) -> [Vec3; 3] {
    let (u, w) = plane_basis(n);
    let r = edge / 3f64.sqrt();
    let corner = |k: usize| {
        let a = std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
        vec3::add(p, vec3::add(vec3::scale(u, r * a.cos()), vec3::scale(w, r * a.sin())))
    };
    [corner(0), corner(1), corner(2)]
}

/// One triangle per non-degenerate plane, plus the number skipped.
pub fn patch_soup(planes: &[TangentPlane], edge: f64) -> (Vec<[Vec3; 3]>, usize) {
    let mut tris = Vec::with_capacity(planes.len());
    let mut skipped = 0;
    for t in planes {
        match t.normal() {
            Ok(n) => tris.push(patch_triangle(t.p, n, edge)),
            Err(_) => skipped += 1,
        }
    }
    (tris, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::triangle_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn z_plane_at_origin() {
        let t = patch_triangle([0.0; 3], [0.0, 0.0, 1.0], 0.1);
        assert!(t.iter().all(|v| v[2] == 0.0));
        let c = vec3::scale(vec3::add(vec3::add(t[0], t[1]), t[2]), 1.0 / 3.0);
        assert!(vec3::norm(c) < 1e-12);
        for k in 0..3 {
            assert!((vec3::norm(vec3::sub(t[k], t[(k + 1) % 3])) - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn face_normals_follow_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = vec3::normalized([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], 1e-9).unwrap();
            let p = [rng.random_range(-1.0..1.0), 0.0, 2.0];
            let t = patch_triangle(p, n, 0.01);
            let f = triangle_normal(t[0], t[1], t[2]).unwrap();
            assert!(vec3::dot(f, n) > 1.0 - 1e-6);
        }
    }

    #[test]
    fn degenerate_planes_are_counted() {
        let planes = [
            TangentPlane { p: [0.0; 3], v: [0.0; 3] },
            TangentPlane { p: [0.0; 3], v: [0.0, 2.0, 0.0] },
        ];
        let (tris, skipped) = patch_soup(&planes, 0.1);
        assert_eq!((tris.len(), skipped), (1, 1));
    }
}
