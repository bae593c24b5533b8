//! The `hofsurf` command line: train, reconstruct, eval, export-patches and
//! selftest.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hofsurf::checks::{self, CheckOptions, CheckResult, TorusRunConfig};
use hofsurf::geometry::{sample_sphere_uniform, seeded_rng, OrientedPointCloud, TriangleMesh};
use hofsurf::io::{self, Camera, PlyEncoding};
use hofsurf::losses::LossWeights;
use hofsurf::metrics::{self, EvalConfig, TauMode};
use hofsurf::model::{
    mapping_forward, Checkpoint, ConvTrunkSpec, EncoderMode, EncoderSpec, HofInput, HofModel, InputImage, MappingNetSpec,
    TangentPlane,
};
use hofsurf::training::{log_line, ObjectInput, TrainConfig, TrainObject, TrainRecord, Trainer, LOG_HEADER};
use rand::Rng;

#[derive(Parser, Debug)]
#[command(name = "hofsurf", version, about = "Surface reconstruction with higher-order functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to one mesh or a directory of meshes.
    Train(TrainArgs),
    /// Map sphere samples through a trained model into an oriented PLY.
    Reconstruct(ReconstructArgs),
    /// Compare a predicted cloud against a ground-truth mesh.
    Eval(EvalArgs),
    /// Turn an oriented cloud into a soup of small triangles.
    ExportPatches(ExportArgs),
    /// Run the built-in verification checks.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    LearnedCode,
    Image,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct TrainArgs {
    /// Single mesh (.obj or .ply).
    #[arg(long, group = "source")]
    pub mesh: Option<PathBuf>,
    /// Directory of meshes; subdirectories name categories.
    #[arg(long, group = "source")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "learned-code")]
    pub mode: Mode,
    /// Iteration budget; defaults to `--epochs` passes over the dataset.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_cd: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_cos: f64,
    /// Sphere samples per iteration.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Ground-truth points per object.
    #[arg(long, default_value_t = 10000)]
    pub gt_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Iterations during which the cosine term is switched off.
    #[arg(long, default_value_t = 0)]
    pub cos_warmup: u64,
    /// Resample the ground truth from the mesh every iteration.
    #[arg(long)]
    pub resample_gt: bool,
    /// Fill the `seconds` log column (makes logs non-reproducible).
    #[arg(long)]
    pub log_wall_time: bool,
    /// Mapping-network hidden widths.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = EncoderSpec::DEFAULT_HEAD_HIDDEN)]
    pub head_hidden: usize,
    /// Per-object code size in learned-code mode.
    #[arg(long, default_value_t = 256)]
    pub code_dim: usize,
    /// Write an intermediate checkpoint every N iterations.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from a checkpoint written by `train`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Image mode: save the rendered inputs here.
    #[arg(long)]
    pub save_renders: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 2500)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Input image for image-mode models (raw `.hofi`, or `.png`).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Object index for learned-code models.
    #[arg(long, default_value_t = 0)]
    pub code: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Binary little-endian PLY instead of ASCII.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true))]
pub struct EvalArgs {
    /// Predicted oriented cloud (PLY with normals).
    #[arg(long, group = "input", requires = "gt_mesh")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt_mesh: Option<PathBuf>,
    /// CSV with columns id,category,pred,gt_mesh for batch evaluation.
    #[arg(long, group = "input", conflicts_with = "gt_mesh")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tau: f64,
    /// Whether τ bounds squared or plain distances.
    #[arg(long, default_value = "squared")]
    pub tau_on: TauMode,
    #[arg(long, default_value_t = 10000)]
    pub n_gt: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "default")]
    pub category: String,
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Oriented cloud (PLY with normals).
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub edge: f64,
    /// Output OBJ.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Also run the torus overfit (several minutes).
    #[arg(long)]
    pub full: bool,
    /// Scale matmul gradients by this factor to confirm the checks can fail.
    #[arg(long, hide = true)]
    pub inject_grad_fault: Option<f64>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = hofsurf::thread_cap_from_env() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not cap threads at {n}: {e}");
        }
    }
    match run(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            1
        }
    }
}

/// Context chain joined with `: `, skipping causes already quoted by the
/// message before them.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

/// Runs one command; `Ok(false)` means it completed but reported failure.
pub fn run(command: Command) -> Result<bool> {
    match command {
        Command::Train(a) => train(&a).map(|()| true),
        Command::Reconstruct(a) => reconstruct(&a).map(|()| true),
        Command::Eval(a) => eval(&a).map(|()| true),
        Command::ExportPatches(a) => export(&a).map(|()| true),
        Command::Selftest(a) => Ok(selftest(&a)),
    }
}

fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let loaded = io::load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
    if loaded.dropped_faces > 0 {
        log::warn!("{}: dropped {} degenerate faces", path.display(), loaded.dropped_faces);
    }
    Ok(loaded.mesh)
}

fn is_mesh_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("obj" | "ply")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", dir.display()))?;
    v.sort();
    Ok(v)
}

/// `(id, category, path)` for every mesh in `dir` and its immediate
/// subdirectories, in sorted order.
pub fn dataset_files(dir: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in sorted_entries(dir)? {
        if entry.is_dir() {
            let cat = entry.file_name().unwrap_or_default().to_string_lossy().into_owned();
            for f in sorted_entries(&entry)?.into_iter().filter(|f| f.is_file() && is_mesh_file(f)) {
                let stem = f.file_stem().unwrap_or_default().to_string_lossy();
                out.push((format!("{cat}/{stem}"), cat.clone(), f));
            }
        } else if is_mesh_file(&entry) {
            let stem = entry.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push((stem, "default".to_string(), entry));
        }
    }
    if out.is_empty() {
        bail!("no .obj or .ply meshes in {}", dir.display());
    }
    Ok(out)
}

/// Orbit camera that frames `mesh`, at an azimuth drawn from `(seed, index)`.
pub fn object_camera(mesh: &TriangleMesh, seed: u64, index: usize) -> Camera {
    let c = mesh.centroid();
    let radius = mesh
        .vertices()
        .iter()
        .map(|&v| hofsurf::geometry::vec3::norm(hofsurf::geometry::vec3::sub(v, c)))
        .fold(0.0, f64::max)
        .max(1e-6);
    let azimuth = seeded_rng(seed, index as u64).random_range(0.0..360.0);
    Camera::orbit(c, 3.0 * radius, azimuth, 30.0)
}

fn build_dataset(a: &TrainArgs) -> Result<Vec<TrainObject>> {
    let files = match (&a.mesh, &a.dataset) {
        (Some(m), _) => {
            let stem = m.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            vec![(stem, "default".to_string(), m.clone())]
        }
        (None, Some(d)) => dataset_files(d)?,
        (None, None) => bail!("one of --mesh or --dataset is required"),
    };
    if let Some(dir) = &a.save_renders {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut objects = Vec::with_capacity(files.len());
    for (i, (id, _, path)) in files.into_iter().enumerate() {
        let mesh = load_mesh(&path)?;
        let (input, mesh) = match a.mode {
            Mode::LearnedCode => (ObjectInput::Code(i), mesh),
            Mode::Image => {
                let cam = object_camera(&mesh, a.seed, i);
                let img = io::render_synthetic(&mesh, &cam).with_context(|| format!("rendering {id}"))?;
                if let Some(dir) = &a.save_renders {
                    let name = format!("{:04}_{}.hofi", i, id.replace('/', "_"));
                    io::save_image(&img, &dir.join(name))?;
                }
                (ObjectInput::Image(img), io::view_centric(&mesh, &cam)?)
            }
        };
        objects.push(TrainObject::from_mesh(id, input, mesh, a.gt_samples, a.seed)?);
    }
    Ok(objects)
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        iterations: a.iters,
        samples_per_iter: a.samples,
        gt_samples: a.gt_samples,
        loss_weights: LossWeights::new(a.lambda_cd, a.lambda_cos)?,
        seed: a.seed,
        cos_warmup: a.cos_warmup,
        resample_gt: a.resample_gt,
        checkpoint_every: a.checkpoint_every,
        checkpoint_path: a.checkpoint_every.map(|_| a.out.clone()),
        dump_path: Some(a.out.with_extension("nan.json")),
        ..Default::default()
    })
}

fn write_log(path: &Path, records: &[TrainRecord], wall_time: bool) -> Result<()> {
    let mut text = format!("{LOG_HEADER}\n");
    for r in records {
        text.push_str(&log_line(r, wall_time));
        text.push('\n');
    }
    io::write_atomic(path, text.as_bytes()).with_context(|| format!("writing log {}", path.display()))
}

fn train(a: &TrainArgs) -> Result<()> {
    let data = build_dataset(a)?;
    let cfg = train_config(a)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            Trainer::from_checkpoint(&ck, cfg.clone())?
        }
        None => {
            let mapping = MappingNetSpec::new(a.hidden.clone())?;
            let encoder = match a.mode {
                Mode::LearnedCode => EncoderSpec::learned_code(a.code_dim, data.len()),
                Mode::Image => EncoderSpec::conv(ConvTrunkSpec::default()),
            }
            .with_head_hidden(a.head_hidden);
            Trainer::new(HofModel::new(mapping, encoder, a.seed)?, cfg.clone())?
        }
    };
    let weights = cfg.loss_weights;
    println!(
        "train: objects={} mode={} iterations={} lr={:e} lambda_cd={} lambda_cos={} samples={} gt_samples={} seed={} params={}",
        data.len(),
        a.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        trainer.total_iterations(data.len()),
        cfg.learning_rate,
        weights.lambda_cd,
        weights.lambda_cos,
        cfg.samples_per_iter,
        cfg.gt_samples,
        cfg.seed,
        trainer.model.flat_params().len(),
    );
    let mut records = Vec::new();
    let result = trainer.run(&data, |r| {
        if r.iteration % 100 == 0 {
            log::info!("iteration {} total {:e}", r.iteration, r.report.total);
        }
        records.push(*r);
        Ok(())
    });
    if let Some(log_path) = &a.log {
        write_log(log_path, &records, a.log_wall_time)?;
    }
    result.context("training failed")?;
    trainer
        .checkpoint()
        .save(&a.out)
        .with_context(|| format!("writing checkpoint {}", a.out.display()))?;
    match records.last() {
        Some(r) => println!(
            "final: iteration={} chamfer={:e} cosine={:e} total={:e}",
            r.iteration, r.report.chamfer, r.report.cosine, r.report.total
        ),
        None => println!("final: no iterations run"),
    }
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

fn load_input_image(path: &Path, trunk: &ConvTrunkSpec) -> Result<InputImage> {
    let img = io::load_image(path).with_context(|| format!("loading image {}", path.display()))?;
    let [h, w, c] = trunk.input_size;
    if img.channels() != c {
        bail!("image has {} channels but the model expects {c}", img.channels());
    }
    if (img.height(), img.width()) != (h, w) {
        log::warn!("resizing {}x{} image to {h}x{w}", img.height(), img.width());
        return Ok(img.resized(h, w)?);
    }
    Ok(img)
}

/// Non-degenerate planes as an oriented cloud, plus the degenerate count.
pub fn planes_to_cloud(planes: &[TangentPlane]) -> Result<(OrientedPointCloud, usize)> {
    let live: Vec<&TangentPlane> = planes.iter().filter(|p| !p.is_degenerate()).collect();
    let cloud = OrientedPointCloud::from_unnormalized(live.iter().map(|p| p.p).collect(), live.iter().map(|p| p.v).collect())?;
    Ok((cloud, planes.len() - live.len()))
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("loading checkpoint {}", a.ckpt.display()))?;
    let planes = if ck.encoder.is_some() {
        let model = ck.model().context("checkpoint does not match its model spec")?;
        match (&model.encoder.mode, &a.image) {
            (EncoderMode::Conv(trunk), Some(p)) => {
                let img = load_input_image(p, trunk)?;
                model.reconstruct(HofInput::Image(&img), a.samples, a.seed)?
            }
            (EncoderMode::Conv(_), None) => bail!("this model takes an image; pass --image"),
            (EncoderMode::LearnedCode { .. }, Some(_)) => bail!("--image given but the model uses learned codes"),
            (EncoderMode::LearnedCode { .. }, None) => model.reconstruct(HofInput::Code(a.code), a.samples, a.seed)?,
        }
    } else {
        let theta = ck.theta().context("checkpoint does not match its model spec")?;
        mapping_forward(&ck.mapping, &theta, &sample_sphere_uniform(a.samples, a.seed)?)?
    };
    let (cloud, degenerate) = planes_to_cloud(&planes)?;
    let encoding = if a.binary { PlyEncoding::BinaryLittleEndian } else { PlyEncoding::Ascii };
    io::save_oriented_cloud(&cloud, &a.out, encoding).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "reconstruct: samples={} points={} degenerate={} out={}",
        a.samples,
        cloud.len(),
        degenerate,
        a.out.display()
    );
    Ok(())
}

fn eval_one(pred: &Path, gt_mesh: &Path, cfg: &EvalConfig, seed: u64) -> Result<metrics::EvalReport> {
    let cloud = io::load_oriented_cloud(pred).with_context(|| format!("loading prediction {}", pred.display()))?;
    let mesh = load_mesh(gt_mesh)?;
    metrics::evaluate(&cloud, &mesh, cfg, seed).with_context(|| format!("evaluating {}", pred.display()))
}

fn manifest_rows(path: &Path) -> Result<Vec<[String; 4]>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        if rec.len() != 4 {
            bail!("{}: row {} has {} fields, expected id,category,pred,gt_mesh", path.display(), i + 2, rec.len());
        }
        let resolve = |s: &str| base.join(s).to_string_lossy().into_owned();
        rows.push([rec[0].to_string(), rec[1].to_string(), resolve(&rec[2]), resolve(&rec[3])]);
    }
    if rows.is_empty() {
        bail!("manifest {} has no rows", path.display());
    }
    Ok(rows)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = EvalConfig {
        n_gt_samples: a.n_gt,
        tau: a.tau,
        tau_mode: a.tau_on,
        ..Default::default()
    };
    cfg.validate()?;
    let mut rows = Vec::new();
    if let Some(m) = &a.manifest {
        for [id, cat, pred, gt] in manifest_rows(m)? {
            let r = eval_one(Path::new(&pred), Path::new(&gt), &cfg, a.seed)?;
            rows.push(metrics::ReportRow::new(id, cat, &r, &cfg));
        }
    } else {
        let pred = a.pred.as_ref().ok_or_else(|| anyhow!("--pred is required"))?;
        let gt = a.gt_mesh.as_ref().ok_or_else(|| anyhow!("--gt-mesh is required"))?;
        let r = eval_one(pred, gt, &cfg, a.seed)?;
        let id = pred.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        rows.push(metrics::ReportRow::new(id, a.category.clone(), &r, &cfg));
    }
    let summary = metrics::ReportSummary::new(rows)?;
    let mut buf = Vec::new();
    if a.json {
        metrics::write_json(&summary, &mut buf)?;
    } else if a.csv {
        metrics::write_csv(&summary, &mut buf)?;
    } else {
        buf = format_table(&summary, &cfg).into_bytes();
    }
    match &a.out {
        Some(p) => io::write_atomic(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

/// Human-readable report: Chamfer ×1000 to 3 places, F-scores to 2,
/// cosine to 3.
pub fn format_table(s: &metrics::ReportSummary, cfg: &EvalConfig) -> String {
    let mut out = format!(
        "{:<24} {:<12} {:>10} {:>8} {:>8} {:>7}\n",
        "id",
        "category",
        format!("CDx{}", cfg.report_scale),
        "F@tau",
        "F@2tau",
        "cos"
    );
    let line = |id: &str, cat: &str, cd: f64, f1: f64, f2: f64, cos: f64| {
        format!("{id:<24} {cat:<12} {cd:>10.3} {f1:>8.2} {f2:>8.2} {cos:>7.3}\n")
    };
    for r in &s.rows {
        out += &line(&r.id, &r.category, r.chamfer_sym, r.fscore_tau, r.fscore_2tau, r.cosine_similarity);
    }
    if s.rows.len() > 1 {
        for (name, m) in [("mean (instance)", &s.instance_mean), ("mean (category)", &s.category_mean)] {
            out += &line(name, "", m.chamfer_sym, m.fscore_tau, m.fscore_2tau, m.cosine_similarity);
        }
    }
    out
}

fn export(a: &ExportArgs) -> Result<()> {
    let cloud = io::load_oriented_cloud(&a.cloud).with_context(|| format!("loading {}", a.cloud.display()))?;
    let planes: Vec<TangentPlane> = cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .map(|(&p, &v)| TangentPlane { p, v })
        .collect();
    let done = io::export_patches(&planes, a.edge, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("export-patches: triangles={} skipped={} out={}", done.triangles, done.skipped, a.out.display());
    Ok(())
}

fn print_result(r: &CheckResult) {
    println!(
        "{:<4} {:<28} {:>7.1}s  {}",
        if r.passed { "PASS" } else { "FAIL" },
        r.name,
        r.seconds,
        r.detail
    );
}

fn selftest(a: &SelftestArgs) -> bool {
    let opts = CheckOptions {
        grad_fault: a.inject_grad_fault,
    };
    let mut results = checks::quick_checks(&opts);
    results.iter().for_each(print_result);
    if a.full {
        match checks::torus_run(&TorusRunConfig::default()) {
            Ok(run) => {
                for r in [checks::resolution_independence(&run), checks::convergence(&run)] {
                    print_result(&r);
                    results.push(r);
                }
            }
            Err(e) => {
                let r = CheckResult {
                    name: "torus overfit",
                    passed: false,
                    detail: e.to_string(),
                    seconds: 0.0,
                };
                print_result(&r);
                results.push(r);
            }
        }
    }
    let failing: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failing.is_empty() {
        println!("selftest: all {} checks passed", results.len());
        true
    } else {
        eprintln!("selftest: failing checks: {}", failing.join(", "));
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_chain_skips_repeated_causes() {
        let inner = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(inner).context("x.ply: gone").context("loading x.ply");
        assert_eq!(error_chain(&e), "loading x.ply: x.ply: gone");
    }

    #[test]
    fn dataset_files_are_sorted_with_categories() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        for p in ["b/z.obj", "b/a.PLY", "b/notes.txt", "top.obj"] {
            fs::write(dir.path().join(p), "").unwrap();
        }
        let ids: Vec<(String, String)> = dataset_files(dir.path())
            .unwrap()
            .into_iter()
            .map(|(id, cat, _)| (id, cat))
            .collect();
        let want = [("b/a", "b"), ("b/z", "b"), ("top", "default")];
        assert_eq!(ids, want.map(|(a, b)| (a.to_string(), b.to_string())));
        let empty = tempfile::tempdir().unwrap();
        assert!(dataset_files(empty.path()).is_err());
    }

    #[test]
    fn train_defaults() {
        let cli = Cli::try_parse_from(["hofsurf", "train", "--mesh", "m.obj", "--out", "c.ckpt"]).unwrap();
        let Command::Train(a) = cli.command else { panic!("not train") };
        let cfg = train_config(&a).unwrap();
        assert_eq!(cfg.learning_rate, 1e-5);
        assert_eq!((cfg.loss_weights.lambda_cd, cfg.loss_weights.lambda_cos), (1.0, 0.1));
        assert_eq!(cfg.samples_per_iter, 1000);
        assert_eq!(a.hidden, vec![128, 128]);
        assert_eq!(a.mode, Mode::LearnedCode);
    }

    #[test]
    fn camera_frames_the_mesh() {
        let mesh = hofsurf::geometry::primitives::torus(0.35, 0.15, 12, 8);
        let img = io::render_synthetic(&mesh, &object_camera(&mesh, 0, 0)).unwrap();
        let (h, w) = (img.height(), img.width());
        let border_hit = (0..h).any(|r| [0, w - 1].iter().any(|&c| img.get(r, c, 0) > 0.0))
            || (0..w).any(|c| [0, h - 1].iter().any(|&r| img.get(r, c, 0) > 0.0));
        let hits = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| img.get(r, c, 0) > 0.0).count();
        assert!(!border_hit);
        assert!(hits > h * w / 20);
    }
}
