//! Surface reconstruction with higher-order functions.
//!
//! A higher-order network `g` maps an input (an image, or a learned
//! per-object code) to the flat weight vector `θ` of a small mapping
//! network `f_θ`. The mapping network sends points of the unit sphere to
//! oriented tangent planes `[p v]` on the object's surface, so the surface
//! can be sampled at any resolution from a single `θ`.
//!
//! Modules:
//!
//! * [`autodiff`]: a small reverse-mode tape over dense `f64` tensors.
//! * [`geometry`]: point clouds, meshes, samplers, k-d tree, PCA normals.
//! * [`model`]: mapping network, hypernetwork head, checkpoints.
//! * [`losses`]: norm Chamfer loss, one-way cosine surface loss.
//! * [`metrics`]: squared Chamfer, F-score, cosine similarity.
//! * [`training`]: Adam and the per-iteration training loop.
//! * [`io`]: OBJ/PLY, patch soups, synthetic depth renders.

pub mod autodiff;
pub mod checks;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};

/// Number of worker threads requested through `HOFSURF_THREADS`, if set.
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var("HOFSURF_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
