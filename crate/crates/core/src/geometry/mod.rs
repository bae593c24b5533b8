//! Point sets, triangle meshes and the spatial queries used by the losses
//! and metrics.

mod cloud;
mod kdtree;
mod mesh;
mod pca;
pub mod primitives;
pub(crate) mod sampling;
pub mod vec3;

pub use cloud::{OrientedPointCloud, PointCloud, SpherePoint, UNIT_NORMAL_TOL};
pub use kdtree::NearestNeighborIndex;
pub use mesh::{face_normal, triangle_normal, TriangleMesh, DEGENERATE_AREA};
pub use pca::{estimate_normals_pca, symmetric_eigen3, DEFAULT_PCA_NEIGHBORS};
pub use sampling::{sample_mesh_uniform, sample_sphere_uniform, seeded_rng};
