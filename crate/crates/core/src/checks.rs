//! Built-in verification checks, shared by the command-line `selftest` and
//! the acceptance suite.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvGeometry, Tape, Tensor, Var};
use crate::error::Result;
use crate::geometry::primitives::{icosphere, torus, unit_cube};
use crate::geometry::{
    estimate_normals_pca, sample_mesh_uniform, sample_sphere_uniform, vec3, OrientedPointCloud, PointCloud, TriangleMesh,
};
use crate::io::{cloud_to_ply, PlyEncoding};
use crate::losses::{chamfer_loss_value, cosine_loss_value, total_loss, LossWeights};
use crate::metrics::{eval_chamfer, eval_fscore, evaluate, evaluate_against, EvalConfig, EvalReport, TauMode};
use crate::model::{
    mapping_forward_tape, pack, Checkpoint, EncoderSpec, HofInput, HofModel, LayerWeights, MappingNetSpec, TangentPlane,
};
use crate::training::{log_line, ObjectInput, TrainConfig, TrainObject, TrainRecord, Trainer};

#[derive(Clone, Copy, Debug, Default)]
pub struct CheckOptions {
    /// Deliberately corrupt matmul gradients (sensitivity test).
    pub grad_fault: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn within(mut r: CheckResult, limit: f64) -> CheckResult {
    r.passed &= r.seconds < limit;
    r.detail = format!("{} (limit {limit}s)", r.detail);
    r
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den < 1e-300 {
        0.0
    } else {
        num / den
    }
}

type OpGraph = fn(&mut Tape, &[Var]) -> Result<Var>;

/// (name, input shapes, graph, inputs bounded away from zero)
fn op_graphs() -> Vec<(&'static str, Vec<Vec<usize>>, OpGraph, bool)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| {
            let m = t.matmul(v[0], v[1])?;
            let q = t.mul(m, m)?;
            t.sum(q)
        }, false),
        ("relu", vec![vec![6], vec![6]], |t, v| {
            let r = t.relu(v[0])?;
            let p = t.mul(r, v[1])?;
            t.sum(p)
        }, true),
        ("add", vec![vec![3, 2], vec![3, 2]], |t, v| {
            let a = t.add(v[0], v[1])?;
            let q = t.mul(a, a)?;
            t.sum(q)
        }, false),
        ("sub", vec![vec![3, 2], vec![3, 2]], |t, v| {
            let a = t.sub(v[0], v[1])?;
            let q = t.mul(a, a)?;
            t.sum(q)
        }, false),
        ("div", vec![vec![6], vec![6]], |t, v| {
            let a = t.div(v[0], v[1])?;
            t.sum(a)
        }, true),
        ("scale/add_scalar/mean", vec![vec![4]], |t, v| {
            let a = t.scale(v[0], -1.7)?;
            let b = t.add_scalar(a, 0.3)?;
            let c = t.mul(b, b)?;
            t.mean(c)
        }, false),
        ("sqrt", vec![vec![5]], |t, v| {
            let a = t.mul(v[0], v[0])?;
            let b = t.sqrt(a)?;
            t.sum(b)
        }, true),
        ("abs", vec![vec![5], vec![5]], |t, v| {
            let a = t.abs(v[0])?;
            let b = t.mul(a, v[1])?;
            t.sum(b)
        }, true),
        ("min", vec![vec![4, 5], vec![4]], |t, v| {
            let (m, _) = t.min_rows(v[0])?;
            let p = t.mul(m, v[1])?;
            t.sum(p)
        }, false),
        ("add_bias/sum_rows", vec![vec![4, 3], vec![3], vec![4]], |t, v| {
            let a = t.add_bias(v[0], v[1])?;
            let b = t.mul(a, a)?;
            let r = t.sum_rows(b)?;
            let p = t.mul(r, v[2])?;
            t.sum(p)
        }, false),
        ("slice/reshape/columns", vec![vec![12], vec![2, 2]], |t, v| {
            let s = t.slice(v[0], 2, 8)?;
            let m = t.reshape(s, vec![4, 2])?;
            let c = t.columns(m, 1, 1)?;
            let c2 = t.reshape(c, vec![2, 2])?;
            let p = t.matmul(c2, v[1])?;
            let q = t.mul(p, p)?;
            t.sum(q)
        }, false),
        ("gather_rows", vec![vec![4, 3], vec![5, 3]], |t, v| {
            let g = t.gather_rows(v[0], &[3, 0, 3, 1, 2])?;
            let p = t.mul(g, v[1])?;
            let q = t.mul(p, p)?;
            t.sum(q)
        }, false),
        ("concat", vec![vec![2, 3], vec![1, 3], vec![3, 3]], |t, v| {
            let c = t.concat(v[0], v[1])?;
            let p = t.mul(c, v[2])?;
            let q = t.mul(p, p)?;
            t.sum(q)
        }, false),
        ("conv2d", vec![vec![2, 5, 5], vec![3, 2, 3, 3], vec![3], vec![3, 3, 3]], |t, v| {
            let c = t.conv2d(v[0], v[1], v[2], ConvGeometry { stride: 2, padding: 1 })?;
            let p = t.mul(c, v[3])?;
            let q = t.mul(p, p)?;
            t.sum(q)
        }, false),
    ]
}

fn op_trial(shapes: &[Vec<usize>], inputs: &[Vec<f64>], graph: OpGraph, fault: Option<f64>) -> Result<f64> {
    let eval = |vals: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = shapes
            .iter()
            .zip(vals)
            .map(|(s, v)| Tensor::new(s.clone(), v.clone()).map(|t| tape.leaf(t)))
            .collect::<Result<Vec<_>>>()?;
        let out = graph(&mut tape, &vars)?;
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    tape.set_gradient_fault(fault);
    let vars = shapes
        .iter()
        .zip(inputs)
        .map(|(s, v)| Tensor::new(s.clone(), v.clone()).map(|t| tape.leaf(t)))
        .collect::<Result<Vec<_>>>()?;
    let out = graph(&mut tape, &vars)?;
    tape.backward(out)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        let mut numeric = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i][j] += h;
            let mut minus = inputs.to_vec();
            minus[i][j] -= h;
            numeric[j] = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    Ok(worst)
}

fn random_values(rng: &mut ChaCha8Rng, n: usize, away_from_zero: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if away_from_zero {
                let m = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

/// Total loss of a tiny learned-code model on `gt` for fixed sphere samples.
fn tiny_loss(model: &HofModel, xs: &Tensor, gt: &OrientedPointCloud, fault: Option<f64>, grads: bool) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    tape.set_gradient_fault(fault);
    let params: Vec<Var> = model.params().iter().map(|p| tape.leaf(p.clone())).collect();
    let theta = model.theta_on_tape(&mut tape, &params, HofInput::Code(0))?;
    let x = tape.constant(xs.clone());
    let out = mapping_forward_tape(&mut tape, &model.mapping, theta, x)?;
    let (loss, report) = total_loss(&mut tape, gt, &out, LossWeights::default())?;
    if !grads {
        return Ok((report.total, Vec::new()));
    }
    tape.backward(loss)?;
    let g = params
        .iter()
        .zip(model.params())
        .flat_map(|(&v, p)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    Ok((report.total, g))
}

fn end_to_end_trial(seed: u64, fault: Option<f64>) -> Result<f64> {
    let enc = EncoderSpec::learned_code(16, 1).with_head_hidden(4);
    let model = HofModel::new(MappingNetSpec::new(vec![8, 8])?, enc, seed)?;
    let gt = sample_mesh_uniform(&torus(0.5, 0.2, 12, 8), 40, seed)?;
    let pts: Vec<[f64; 3]> = sample_sphere_uniform(10, seed)?.iter().map(|x| x.coords()).collect();
    let xs = Tensor::from_points(&pts)?;
    let (_, analytic) = tiny_loss(&model, &xs, &gt, fault, true)?;
    let flat = model.flat_params();
    let h = 1e-6;
    let mut numeric = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut probe = flat.clone();
        probe[i] += h;
        let up = tiny_loss(&HofModel::from_flat(model.mapping.clone(), model.encoder.clone(), &probe)?, &xs, &gt, None, false)?.0;
        probe[i] -= 2.0 * h;
        let down = tiny_loss(&HofModel::from_flat(model.mapping.clone(), model.encoder.clone(), &probe)?, &xs, &gt, None, false)?.0;
        numeric[i] = (up - down) / (2.0 * h);
    }
    Ok(rel_err(&analytic, &numeric))
}

/// Finite-difference agreement of every tape op (50 trials each, < 1e-6)
/// and of the full loss on a tiny model (50 trials, < 1e-4).
pub fn gradient_fidelity(opts: &CheckOptions) -> CheckResult {
    let r = timed("gradient fidelity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst_op: (f64, &str) = (0.0, "");
        for (name, shapes, graph, away) in op_graphs() {
            for _ in 0..50 {
                let inputs: Vec<Vec<f64>> = shapes
                    .iter()
                    .map(|s| random_values(&mut rng, s.iter().product(), away))
                    .collect();
                let e = op_trial(&shapes, &inputs, graph, opts.grad_fault)?;
                if e > worst_op.0 {
                    worst_op = (e, name);
                }
            }
        }
        let mut worst_e2e: f64 = 0.0;
        for trial in 0..50 {
            worst_e2e = worst_e2e.max(end_to_end_trial(trial, opts.grad_fault)?);
        }
        Ok((
            worst_op.0 < 1e-6 && worst_e2e < 1e-4,
            format!("ops max rel err {:.2e} ({}), end-to-end max rel err {:.2e}", worst_op.0, worst_op.1, worst_e2e),
        ))
    });
    within(r, 30.0)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, lattice: bool) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            if lattice {
                [0, 1, 2].map(|_| rng.random_range(-3i32..=3) as f64)
            } else {
                [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))
            }
        })
        .collect()
}

fn ascending_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().fold(0.0, |a, x| a + x) / n
}

fn brute_min_d2(x: &[[f64; 3]], y: &[[f64; 3]]) -> Vec<f64> {
    x.iter()
        .map(|&a| y.iter().map(|&b| vec3::dist2(a, b)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Accelerated Chamfer values equal an exhaustive scan bit for bit on
/// 1000 random pairs with up to 500 points.
pub fn chamfer_oracle(_: &CheckOptions) -> CheckResult {
    let r = timed("chamfer oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut mismatches = 0;
        for trial in 0..1000 {
            let lattice = trial % 4 == 0;
            let n = rng.random_range(1..=500);
            let m = rng.random_range(1..=500);
            let x = random_cloud(&mut rng, n, lattice);
            let y = random_cloud(&mut rng, m, lattice);
            let xy = brute_min_d2(&x, &y);
            let yx = brute_min_d2(&y, &x);
            let want_eval = ascending_mean(xy.clone());
            let want_loss = ascending_mean(xy.iter().map(|d| d.sqrt()).collect())
                + ascending_mean(yx.iter().map(|d| d.sqrt()).collect());
            let (px, py) = (PointCloud::new(x)?, PointCloud::new(y)?);
            if eval_chamfer(&px, &py)? != want_eval || chamfer_loss_value(&px, &py)? != want_loss {
                mismatches += 1;
            }
        }
        Ok((mismatches == 0, format!("{mismatches} mismatches in 1000 pairs")))
    });
    within(r, 60.0)
}

fn planes_from(points: &[[f64; 3]], dirs: &[[f64; 3]]) -> Vec<TangentPlane> {
    points.iter().zip(dirs).map(|(&p, &v)| TangentPlane { p, v }).collect()
}

/// Symmetry, permutation and flip invariances, the range of the cosine
/// loss, and the weighted-sum identity on every logged training step.
pub fn loss_identities(_: &CheckOptions) -> CheckResult {
    timed("loss identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut failures = Vec::new();
        for trial in 0..100 {
            let nx = rng.random_range(1..200);
            let x = random_cloud(&mut rng, nx, trial % 5 == 0);
            let ny = rng.random_range(1..200);
            let y = random_cloud(&mut rng, ny, trial % 5 == 0);
            let a = chamfer_loss_value(&PointCloud::new(x.clone())?, &PointCloud::new(y.clone())?)?;
            if a != chamfer_loss_value(&PointCloud::new(y.clone())?, &PointCloud::new(x.clone())?)? {
                failures.push("symmetry");
            }
            let (mut xs, mut ys) = (x.clone(), y.clone());
            xs.shuffle(&mut rng);
            ys.shuffle(&mut rng);
            if a != chamfer_loss_value(&PointCloud::new(xs)?, &PointCloud::new(ys)?)? {
                failures.push("permutation");
            }
            let gt = sample_mesh_uniform(&icosphere(1), 60, trial)?;
            let dirs = random_cloud(&mut rng, x.len(), false);
            let flipped: Vec<_> = dirs.iter().map(|&d| vec3::scale(d, -1.0)).collect();
            let c = cosine_loss_value(&gt, &planes_from(&x, &dirs))?;
            if !(0.0..=1.0).contains(&c) {
                failures.push("cosine range");
            }
            if c != cosine_loss_value(&gt, &planes_from(&x, &flipped))? {
                failures.push("flip");
            }
        }
        let enc = EncoderSpec::learned_code(16, 1).with_head_hidden(8);
        let model = HofModel::new(MappingNetSpec::new(vec![16, 16])?, enc, 3)?;
        let data = vec![TrainObject::from_mesh("t", ObjectInput::Code(0), torus(0.5, 0.2, 16, 8), 200, 3)?];
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            iterations: Some(30),
            samples_per_iter: 100,
            gt_samples: 200,
            cos_warmup: 5,
            ..Default::default()
        };
        let mut trainer = Trainer::new(model, cfg.clone())?;
        let records = trainer.run(&data, |_| Ok(()))?;
        if records.iter().any(|r| r.report.total != cfg.weights_at(r.iteration).combine(r.report.chamfer, r.report.cosine)) {
            failures.push("weighted sum");
        }
        failures.dedup();
        let detail = if failures.is_empty() {
            "100 random cases + 30 logged steps exact".to_string()
        } else {
            format!("violated: {}", failures.join(", "))
        };
        Ok((failures.is_empty(), detail))
    })
}

/// Sphere sampler moments at n = 100000 and cube face fractions at 60000.
pub fn sampler_statistics(_: &CheckOptions) -> CheckResult {
    timed("sampler statistics", || {
        let xs = sample_sphere_uniform(100_000, 404)?;
        let n = xs.len() as f64;
        let mut mean = [0.0; 3];
        let mut upper = 0usize;
        for x in &xs {
            let c = x.coords();
            for k in 0..3 {
                mean[k] += c[k] / n;
            }
            upper += (c[2] > 0.0) as usize;
        }
        let hemi = upper as f64 / n;
        let cube = sample_mesh_uniform(&unit_cube(), 60_000, 405)?;
        let mut sides = [0usize; 6];
        for nrm in &cube.normals {
            let k = (0..3).max_by(|&a, &b| nrm[a].abs().total_cmp(&nrm[b].abs())).unwrap();
            sides[2 * k + (nrm[k] > 0.0) as usize] += 1;
        }
        let worst_side = sides
            .iter()
            .map(|&s| (s as f64 / 60_000.0 - 1.0 / 6.0).abs())
            .fold(0.0, f64::max);
        let worst_mean = mean.iter().map(|m| m.abs()).fold(0.0, f64::max);
        Ok((
            worst_mean < 0.02 && (hemi - 0.5).abs() < 0.01 && worst_side < 0.01,
            format!("max |axis mean| {worst_mean:.4}, upper hemisphere {hemi:.4}, max side deviation {worst_side:.4}"),
        ))
    })
}

/// PCA normals on 5000 sphere samples with k = 30.
pub fn pca_baseline(_: &CheckOptions) -> CheckResult {
    timed("PCA baseline", || {
        let pts: Vec<[f64; 3]> = sample_sphere_uniform(5000, 505)?.iter().map(|x| x.coords()).collect();
        let est = estimate_normals_pca(&PointCloud::new(pts)?, 30)?;
        let good = est
            .points
            .iter()
            .zip(&est.normals)
            .filter(|(p, n)| vec3::dot(**p, **n).abs() > 0.99)
            .count();
        let frac = good as f64 / 5000.0;
        Ok((frac >= 0.99, format!("{:.2}% of normals within |n·p| > 0.99", 100.0 * frac)))
    })
}

/// Self-evaluation, F-score monotonicity and the single-pair values.
pub fn metric_anchors(_: &CheckOptions) -> CheckResult {
    timed("metric anchors", || {
        let mesh = icosphere(3);
        let cfg = EvalConfig::default();
        let pred = sample_mesh_uniform(&mesh, cfg.n_gt_samples, 606)?;
        let r = evaluate(&pred, &mesh, &cfg, 606)?;
        let self_ok = r.chamfer_sym == 0.0 && r.fscore_tau == 100.0 && r.cosine_similarity == 1.0;
        let other = sample_mesh_uniform(&mesh, 2500, 607)?;
        let mut last = -1.0;
        let mut monotone = true;
        for k in 0..24 {
            let f = eval_fscore(&other.positions(), &pred.positions(), 1e-6 * 2f64.powi(k), TauMode::Squared)?;
            monotone &= f >= last;
            last = f;
        }
        let origin = PointCloud::new(vec![[0.0; 3]])?;
        let loss_pair = chamfer_loss_value(&origin, &PointCloud::new(vec![[1.0, 0.0, 0.0]])?)?;
        let eval_pair = eval_chamfer(&origin, &PointCloud::new(vec![[3.0, 4.0, 0.0]])?)?;
        Ok((
            self_ok && monotone && loss_pair == 2.0 && eval_pair == 25.0,
            format!(
                "self-eval chamfer {} fscore {} cosine {}; monotone {monotone}; pair loss {loss_pair}, pair CD {eval_pair}",
                r.chamfer_sym, r.fscore_tau, r.cosine_similarity
            ),
        ))
    })
}

fn small_run(iters: u64) -> Result<(Trainer, Vec<TrainObject>, TrainConfig)> {
    let enc = EncoderSpec::learned_code(16, 2).with_head_hidden(8);
    let model = HofModel::new(MappingNetSpec::new(vec![16, 16])?, enc, 7)?;
    let mesh = torus(0.5, 0.2, 16, 8);
    let data = vec![
        TrainObject::from_mesh("a", ObjectInput::Code(0), mesh.clone(), 200, 1)?,
        TrainObject::from_mesh("b", ObjectInput::Code(1), mesh, 200, 2)?,
    ];
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        iterations: Some(iters),
        samples_per_iter: 100,
        gt_samples: 200,
        seed: 11,
        ..Default::default()
    };
    Ok((Trainer::new(model, cfg.clone())?, data, cfg))
}

fn log_text(records: &[TrainRecord]) -> String {
    records.iter().map(|r| log_line(r, false) + "\n").collect()
}

fn reconstruction_ply(model: &HofModel, n: usize, seed: u64) -> Result<Vec<u8>> {
    let planes = model.reconstruct(HofInput::Code(0), n, seed)?;
    let live: Vec<_> = planes.iter().filter(|p| !p.is_degenerate()).collect();
    let cloud = OrientedPointCloud::from_unnormalized(live.iter().map(|p| p.p).collect(), live.iter().map(|p| p.v).collect())?;
    cloud_to_ply(&cloud, PlyEncoding::Ascii)
}

/// Identical logs and PLY bytes from identical seeds; checkpoint
/// save/load/resume equals an uninterrupted run.
pub fn determinism_and_persistence(_: &CheckOptions) -> CheckResult {
    timed("determinism & persistence", || {
        let (mut a, data, cfg) = small_run(12)?;
        let ra = a.run(&data, |_| Ok(()))?;
        let (mut b, _, _) = small_run(12)?;
        let rb = b.run(&data, |_| Ok(()))?;
        let logs_equal = log_text(&ra) == log_text(&rb);
        let ply_equal = reconstruction_ply(&a.model, 500, 3)? == reconstruction_ply(&b.model, 500, 3)?;

        let (mut half, _, _) = small_run(6)?;
        let first = half.run(&data, |_| Ok(()))?;
        let dir = tempfile::tempdir().map_err(|e| crate::Error::io(std::env::temp_dir(), e))?;
        let path = dir.path().join("resume.ckpt");
        half.checkpoint().save(&path)?;
        let mut resumed = Trainer::from_checkpoint(&Checkpoint::load(&path)?, cfg)?;
        let rest = resumed.run(&data, |_| Ok(()))?;
        let joined: Vec<_> = first.into_iter().chain(rest).collect();
        let resume_equal = log_text(&joined) == log_text(&ra) && resumed.model == a.model;
        Ok((
            logs_equal && ply_equal && resume_equal,
            format!("logs identical {logs_equal}, PLY identical {ply_equal}, resume identical {resume_equal}"),
        ))
    })
}

/// The default mapping network packs to 17798 values.
pub fn parameter_count(_: &CheckOptions) -> CheckResult {
    timed("parameter count", || {
        let spec = MappingNetSpec::default();
        let layers: Vec<LayerWeights> = spec
            .layers()
            .into_iter()
            .map(|(i, o)| LayerWeights {
                inputs: i,
                outputs: o,
                weight: vec![0.0; i * o],
                bias: vec![0.0; o],
            })
            .collect();
        let packed = pack(&spec, &layers)?.len();
        Ok((spec.param_count() == 17798 && packed == 17798, format!("param_count {}, packed {packed}", spec.param_count())))
    })
}

/// Every check except the torus overfit run.
pub fn quick_checks(opts: &CheckOptions) -> Vec<CheckResult> {
    vec![
        gradient_fidelity(opts),
        chamfer_oracle(opts),
        loss_identities(opts),
        sampler_statistics(opts),
        pca_baseline(opts),
        metric_anchors(opts),
        determinism_and_persistence(opts),
        parameter_count(opts),
    ]
}

/// Settings of the learned-code torus overfit.
#[derive(Clone, Debug)]
pub struct TorusRunConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub head_hidden: usize,
    pub code_dim: usize,
    pub seed: u64,
}

impl Default for TorusRunConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 5e-5,
            head_hidden: 64,
            code_dim: 64,
            seed: 0,
        }
    }
}

pub fn torus_mesh() -> TriangleMesh {
    torus(0.35, 0.15, 48, 24)
}

/// Outcome of the torus run, with the evaluations the checks need.
#[derive(Clone, Debug)]
pub struct TorusRun {
    pub records: Vec<TrainRecord>,
    pub model: HofModel,
    pub eval_1k: EvalReport,
    pub eval_10k: EvalReport,
    pub eval_default: EvalReport,
    pub seconds: f64,
}

fn reconstruct_cloud(model: &HofModel, n: usize, seed: u64) -> Result<OrientedPointCloud> {
    let planes = model.reconstruct(HofInput::Code(0), n, seed)?;
    let live: Vec<_> = planes.iter().filter(|p| !p.is_degenerate()).collect();
    OrientedPointCloud::from_unnormalized(live.iter().map(|p| p.p).collect(), live.iter().map(|p| p.v).collect())
}

pub fn torus_run(cfg: &TorusRunConfig) -> Result<TorusRun> {
    let start = Instant::now();
    let mesh = torus_mesh();
    let enc = EncoderSpec::learned_code(cfg.code_dim, 1).with_head_hidden(cfg.head_hidden);
    let model = HofModel::new(MappingNetSpec::default(), enc, cfg.seed)?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        iterations: Some(cfg.iterations),
        seed: cfg.seed,
        ..Default::default()
    };
    let data = vec![TrainObject::from_mesh("torus", ObjectInput::Code(0), mesh.clone(), train_cfg.gt_samples, cfg.seed)?];
    let mut trainer = Trainer::new(model, train_cfg)?;
    let records = trainer.run(&data, |_| Ok(()))?;
    let eval_cfg = EvalConfig::default();
    let gt = sample_mesh_uniform(&mesh, eval_cfg.n_gt_samples, cfg.seed + 1)?;
    let eval = |n: usize| evaluate_against(&reconstruct_cloud(&trainer.model, n, cfg.seed + 2)?, &gt, &eval_cfg);
    let eval_1k = eval(1000)?;
    let eval_10k = eval(10000)?;
    let eval_default = eval(eval_cfg.n_pred_samples)?;
    Ok(TorusRun {
        records,
        model: trainer.model,
        eval_1k,
        eval_10k,
        eval_default,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Reconstructions at 1000 and 10000 samples from one checkpoint: symmetric
/// Chamfer within 25% and no worse ground-truth coverage at 10000.
pub fn resolution_independence(run: &TorusRun) -> CheckResult {
    let (a, b) = (run.eval_1k.chamfer_sym, run.eval_10k.chamfer_sym);
    let spread = (a - b).abs() / a.min(b);
    let coverage = run.eval_10k.chamfer_gt_to_pred <= run.eval_1k.chamfer_gt_to_pred;
    CheckResult {
        name: "resolution independence",
        passed: spread <= 0.25 && coverage && run.seconds <= 900.0,
        detail: format!(
            "sym CD x1000: 1k {:.4}, 10k {:.4} (spread {:.0}%); gt->pred 1k {:.4}, 10k {:.4}; run {:.0}s",
            a * 1e3,
            b * 1e3,
            spread * 100.0,
            run.eval_1k.chamfer_gt_to_pred * 1e3,
            run.eval_10k.chamfer_gt_to_pred * 1e3,
            run.seconds
        ),
        seconds: 0.0,
    }
}

/// Final training Chamfer below 25% of iteration 10, eval cosine > 0.80.
pub fn convergence(run: &TorusRun) -> CheckResult {
    let at10 = run.records.iter().find(|r| r.iteration == 10).map(|r| r.report.chamfer);
    let last = run.records.last().map(|r| r.report.chamfer);
    let (passed, detail) = match (at10, last) {
        (Some(a), Some(z)) => (
            z < 0.25 * a && run.eval_default.cosine_similarity > 0.80,
            format!(
                "chamfer iter 10 {a:.4}, final {z:.4} ({:.0}%); eval cosine {:.4}",
                100.0 * z / a,
                run.eval_default.cosine_similarity
            ),
        ),
        _ => (false, "run shorter than 11 iterations".to_string()),
    };
    CheckResult {
        name: "desk-scale convergence",
        passed,
        detail,
        seconds: 0.0,
    }
}
