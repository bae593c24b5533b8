//! Python bindings: meshes, models, training, losses and metrics.

use std::collections::HashMap;
use std::path::PathBuf;

use hofsurf::checks::{quick_checks, CheckOptions};
use hofsurf::geometry::{self, primitives, OrientedPointCloud, PointCloud, TriangleMesh};
use hofsurf::io::{self, MeshFormat, PlyEncoding};
use hofsurf::losses::{chamfer_loss_value, LossWeights};
use hofsurf::metrics::{self, EvalConfig, TauMode};
use hofsurf::model::{Checkpoint, EncoderSpec, HofInput, HofModel, MappingNetSpec};
use hofsurf::training::{ObjectInput, TrainConfig, TrainObject, Trainer};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError};
use pyo3::prelude::*;

create_exception!(hofsurf_py, HofsurfError, PyException);

type Points = Vec<[f64; 3]>;

/// `(iteration, chamfer, cosine, total, degenerate_count)`
type LogRow = (u64, f64, f64, f64, usize);

fn to_py(e: hofsurf::Error) -> PyErr {
    match e {
        hofsurf::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => HofsurfError::new_err(other.to_string()),
    }
}

fn parse_tau_mode(s: &str) -> PyResult<TauMode> {
    s.parse().map_err(to_py)
}

/// Triangle mesh.
#[pyclass(name = "Mesh", module = "hofsurf_py", from_py_object)]
#[derive(Clone)]
struct PyMesh(TriangleMesh);

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Points, faces: Vec<[usize; 3]>) -> PyResult<Self> {
        TriangleMesh::new(vertices, faces).map(Self).map_err(to_py)
    }

    /// Reads an OBJ or PLY file; degenerate faces are dropped.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_mesh(&path).map(|l| Self(l.mesh)).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (major=0.35, minor=0.15, rings=48, sides=24))]
    fn torus(major: f64, minor: f64, rings: usize, sides: usize) -> Self {
        Self(primitives::torus(major, minor, rings, sides))
    }

    #[staticmethod]
    #[pyo3(signature = (subdivisions=2))]
    fn icosphere(subdivisions: usize) -> Self {
        Self(primitives::icosphere(subdivisions))
    }

    #[staticmethod]
    fn unit_cube() -> Self {
        Self(primitives::unit_cube())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let format = MeshFormat::from_path(&path).map_err(to_py)?;
        io::save_mesh(&self.0, &path, format).map_err(to_py)
    }

    #[getter]
    fn vertices(&self) -> Points {
        self.0.vertices().to_vec()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.0.faces().to_vec()
    }

    fn area(&self) -> f64 {
        self.0.total_area()
    }

    /// Area-uniform samples with face normals: `(points, normals)`.
    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<(Points, Points)> {
        let c = geometry::sample_mesh_uniform(&self.0, n, seed).map_err(to_py)?;
        Ok((c.points, c.normals))
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, faces={})", self.0.vertices().len(), self.0.faces().len())
    }
}

/// Learned-code model: per-object code → θ → mapping network.
#[pyclass(name = "Model", module = "hofsurf_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel(HofModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (hidden=vec![128, 128], code_dim=256, num_codes=1, head_hidden=1024, seed=0))]
    fn new(hidden: Vec<usize>, code_dim: usize, num_codes: usize, head_hidden: usize, seed: u64) -> PyResult<Self> {
        let mapping = MappingNetSpec::new(hidden).map_err(to_py)?;
        let encoder = EncoderSpec::learned_code(code_dim, num_codes).with_head_hidden(head_hidden);
        HofModel::new(mapping, encoder, seed).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path).and_then(|c| c.model()).map(Self).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::from_model(&self.0, 0, None).save(&path).map_err(to_py)
    }

    /// Total trainable parameters (encoder, head and emission).
    #[getter]
    fn param_count(&self) -> usize {
        self.0.flat_params().len()
    }

    /// Length of θ, the mapping network's packed weights.
    #[getter]
    fn theta_len(&self) -> usize {
        self.0.mapping.param_count()
    }

    #[pyo3(signature = (code=0))]
    fn theta(&self, code: usize) -> PyResult<Vec<f64>> {
        let w = self.0.hof_forward(HofInput::Code(code)).map_err(to_py)?;
        Ok(w.values)
    }

    /// Maps `n` sphere samples through `f_θ`. Returns `(points, normals,
    /// degenerate_count)`; degenerate planes are left out.
    #[pyo3(signature = (n, seed=0, code=0))]
    fn reconstruct(&self, py: Python<'_>, n: usize, seed: u64, code: usize) -> PyResult<(Points, Points, usize)> {
        let planes = py
            .detach(|| self.0.reconstruct(HofInput::Code(code), n, seed))
            .map_err(to_py)?;
        let live: Vec<_> = planes.iter().filter(|p| !p.is_degenerate()).collect();
        let cloud = OrientedPointCloud::from_unnormalized(live.iter().map(|p| p.p).collect(), live.iter().map(|p| p.v).collect())
            .map_err(to_py)?;
        Ok((cloud.points, cloud.normals, planes.len() - live.len()))
    }
}

/// Trains `model` with one code per mesh. Returns the trained model and one
/// `(iteration, chamfer, cosine, total, degenerate_count)` tuple per step.
#[pyfunction]
#[pyo3(signature = (model, meshes, iterations, lr=1e-5, samples=1000, gt_samples=10000, lambda_cd=1.0, lambda_cos=0.1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    model: &PyModel,
    meshes: Vec<PyMesh>,
    iterations: u64,
    lr: f64,
    samples: usize,
    gt_samples: usize,
    lambda_cd: f64,
    lambda_cos: f64,
    seed: u64,
) -> PyResult<(PyModel, Vec<LogRow>)> {
    let model = model.0.clone();
    py.detach(move || {
        let cfg = TrainConfig {
            learning_rate: lr,
            iterations: Some(iterations),
            samples_per_iter: samples,
            gt_samples,
            loss_weights: LossWeights::new(lambda_cd, lambda_cos)?,
            seed,
            ..Default::default()
        };
        let data = meshes
            .into_iter()
            .enumerate()
            .map(|(i, m)| TrainObject::from_mesh(format!("mesh{i}"), ObjectInput::Code(i), m.0, gt_samples, seed))
            .collect::<hofsurf::Result<Vec<_>>>()?;
        let mut trainer = Trainer::new(model, cfg)?;
        let records = trainer.run(&data, |_| Ok(()))?;
        let rows = records
            .iter()
            .map(|r| (r.iteration, r.report.chamfer, r.report.cosine, r.report.total, r.report.degenerate_count))
            .collect();
        Ok((PyModel(trainer.model), rows))
    })
    .map_err(to_py)
}

/// Symmetric Chamfer loss with plain (unsquared) distances.
#[pyfunction]
fn chamfer_loss(x: Points, y: Points) -> PyResult<f64> {
    let (x, y) = (PointCloud::new(x).map_err(to_py)?, PointCloud::new(y).map_err(to_py)?);
    chamfer_loss_value(&x, &y).map_err(to_py)
}

/// One-way mean squared nearest distance from `x` to `y`.
#[pyfunction]
fn eval_chamfer(x: Points, y: Points) -> PyResult<f64> {
    let (x, y) = (PointCloud::new(x).map_err(to_py)?, PointCloud::new(y).map_err(to_py)?);
    metrics::eval_chamfer(&x, &y).map_err(to_py)
}

/// F-score in percent.
#[pyfunction]
#[pyo3(signature = (pred, gt, tau=1e-4, tau_on="squared"))]
fn fscore(pred: Points, gt: Points, tau: f64, tau_on: &str) -> PyResult<f64> {
    let (p, g) = (PointCloud::new(pred).map_err(to_py)?, PointCloud::new(gt).map_err(to_py)?);
    metrics::eval_fscore(&p, &g, tau, parse_tau_mode(tau_on)?).map_err(to_py)
}

/// All metrics of an oriented prediction against a mesh; Chamfer values are
/// raw (not multiplied by 1000).
#[pyfunction]
#[pyo3(signature = (points, normals, mesh, n_gt=10000, tau=1e-4, tau_on="squared", seed=0))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    points: Points,
    normals: Points,
    mesh: &PyMesh,
    n_gt: usize,
    tau: f64,
    tau_on: &str,
    seed: u64,
) -> PyResult<HashMap<String, f64>> {
    let cfg = EvalConfig {
        n_gt_samples: n_gt,
        tau,
        tau_mode: parse_tau_mode(tau_on)?,
        ..Default::default()
    };
    let pred = OrientedPointCloud::from_unnormalized(points, normals).map_err(to_py)?;
    let r = py.detach(|| metrics::evaluate(&pred, &mesh.0, &cfg, seed)).map_err(to_py)?;
    Ok(HashMap::from([
        ("chamfer_sym".to_string(), r.chamfer_sym),
        ("chamfer_pred_to_gt".to_string(), r.chamfer_pred_to_gt),
        ("chamfer_gt_to_pred".to_string(), r.chamfer_gt_to_pred),
        ("fscore_tau".to_string(), r.fscore_tau),
        ("fscore_2tau".to_string(), r.fscore_2tau),
        ("cosine_similarity".to_string(), r.cosine_similarity),
    ]))
}

/// Unoriented PCA normals from the `k` nearest neighbours.
#[pyfunction]
#[pyo3(signature = (points, k=30))]
fn estimate_normals_pca(points: Points, k: usize) -> PyResult<Points> {
    let cloud = PointCloud::new(points).map_err(to_py)?;
    geometry::estimate_normals_pca(&cloud, k).map(|c| c.normals).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (n, seed=0))]
fn sample_sphere(n: usize, seed: u64) -> PyResult<Points> {
    geometry::sample_sphere_uniform(n, seed)
        .map(|v| v.iter().map(|x| x.coords()).collect())
        .map_err(to_py)
}

/// Length of θ for a mapping network with these hidden widths.
#[pyfunction]
#[pyo3(signature = (hidden=vec![128, 128]))]
fn mapping_param_count(hidden: Vec<usize>) -> PyResult<usize> {
    MappingNetSpec::new(hidden).map(|s| s.param_count()).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (points, normals, path, binary=false))]
fn save_cloud(points: Points, normals: Points, path: PathBuf, binary: bool) -> PyResult<()> {
    let cloud = OrientedPointCloud::from_unnormalized(points, normals).map_err(to_py)?;
    let enc = if binary { PlyEncoding::BinaryLittleEndian } else { PlyEncoding::Ascii };
    io::save_oriented_cloud(&cloud, &path, enc).map_err(to_py)
}

#[pyfunction]
fn load_cloud(path: PathBuf) -> PyResult<(Points, Points)> {
    io::load_oriented_cloud(&path).map(|c| (c.points, c.normals)).map_err(to_py)
}

/// The quick built-in checks as `(name, passed, detail)` tuples.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(|| {
        quick_checks(&CheckOptions::default())
            .into_iter()
            .map(|r| (r.name.to_string(), r.passed, r.detail))
            .collect()
    })
}

#[pymodule]
fn hofsurf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HofsurfError", m.py().get_type::<HofsurfError>())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer_loss, m)?)?;
    m.add_function(wrap_pyfunction!(eval_chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(fscore, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_normals_pca, m)?)?;
    m.add_function(wrap_pyfunction!(sample_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(mapping_param_count, m)?)?;
    m.add_function(wrap_pyfunction!(save_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(load_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
