use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use super::cloud::{OrientedPointCloud, PointCloud};
use super::kdtree::NearestNeighborIndex;
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Neighborhood size used when none is given.
pub const DEFAULT_PCA_NEIGHBORS: usize = 30;

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// Returns eigenvalues in ascending order and the matching unit
/// eigenvectors.
pub fn symmetric_eigen3(m: [[f64; 3]; 3]) -> ([f64; 3], [Vec3; 3]) {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let eig = SymmetricEigen::new(mat);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| {
        let c = eig.eigenvectors.column(i);
        [c[0], c[1], c[2]]
    });
    (values, vectors)
}

/// Per-point normals from the covariance of each point's `k` nearest
/// neighbors (the point itself included): the eigenvector of the smallest
/// eigenvalue. The sign is whatever the eigen solver returns.
pub fn estimate_normals_pca(cloud: &PointCloud, k: usize) -> Result<OrientedPointCloud> {
    if k < 3 {
        return Err(Error::domain(format!("PCA neighborhood k={k} must be at least 3")));
    }
    if cloud.len() <= k {
        return Err(Error::domain(format!(
            "PCA needs more than k={k} points, got {}",
            cloud.len()
        )));
    }
    let index = NearestNeighborIndex::new(&cloud.points)?;
    let normals: Vec<Vec3> = cloud
        .points
        .par_iter()
        .map(|&p| {
            let nbrs = index.k_nearest(p, k);
            let mut mean = [0.0; 3];
            for &(i, _) in &nbrs {
                mean = vec3::add(mean, cloud.points[i]);
            }
            mean = vec3::scale(mean, 1.0 / nbrs.len() as f64);
            let mut cov = [[0.0; 3]; 3];
            for &(i, _) in &nbrs {
                let d = vec3::sub(cloud.points[i], mean);
                for r in 0..3 {
                    for c in 0..3 {
                        cov[r][c] += d[r] * d[c];
                    }
                }
            }
            let (_, vectors) = symmetric_eigen3(cov);
            vectors[0]
        })
        .collect();
    OrientedPointCloud::from_unnormalized(cloud.points.clone(), normals)
}
