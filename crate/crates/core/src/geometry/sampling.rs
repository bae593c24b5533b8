use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cloud::{OrientedPointCloud, SpherePoint};
use super::mesh::{triangle_normal, TriangleMesh};
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Deterministic generator for `(seed, stream)`.
///
/// Different streams of the same seed are independent, which lets the
/// training loop derive a fresh generator per iteration without carrying
/// state between iterations.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. uniform points on the unit sphere (normalized Gaussian draws).
pub fn sample_sphere_uniform(n: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    sample_sphere_with(n, &mut seeded_rng(seed, 0))
}

pub(crate) fn sample_sphere_with(n: usize, rng: &mut impl Rng) -> Result<Vec<SpherePoint>> {
    if n == 0 {
        return Err(Error::domain("sphere sample count must be at least 1"));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g: Vec3 = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        // A draw this close to the origin has no usable direction.
        if vec3::norm(g) < 1e-150 {
            continue;
        }
        out.push(SpherePoint::from_direction(g)?);
    }
    Ok(out)
}

/// Area-weighted uniform samples of a mesh surface.
///
/// Each sample draws a face with probability proportional to its area, then
/// barycentric `(u, v)` reflected into the triangle when `u + v > 1`. The
/// sample's normal is the unit normal of its face.
pub fn sample_mesh_uniform(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<OrientedPointCloud> {
    sample_mesh_with(mesh, n, &mut seeded_rng(seed, 0))
}

pub(crate) fn sample_mesh_with(mesh: &TriangleMesh, n: usize, rng: &mut impl Rng) -> Result<OrientedPointCloud> {
    if mesh.faces().is_empty() {
        return Err(Error::domain("mesh has no non-degenerate faces"));
    }
    if n == 0 {
        return Err(Error::domain("mesh sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut acc = 0.0;
    for f in 0..mesh.faces().len() {
        acc += mesh.face_area(f);
        cumulative.push(acc);
    }
    let normals = (0..mesh.faces().len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            triangle_normal(a, b, c)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(n);
    let mut out_normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * acc;
        let face = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
        let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.triangle(face);
        let p = vec3::add(
            a,
            vec3::add(vec3::scale(vec3::sub(b, a), u), vec3::scale(vec3::sub(c, a), v)),
        );
        points.push(p);
        out_normals.push(normals[face]);
    }
    Ok(OrientedPointCloud {
        points,
        normals: out_normals,
    })
}
