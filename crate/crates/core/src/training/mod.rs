//! Optimization loop: Adam over the encoder and head parameters with fresh
//! sphere samples every iteration.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::sampling::{sample_mesh_with, sample_sphere_with};
use crate::geometry::{seeded_rng, OrientedPointCloud, SpherePoint, TriangleMesh};
use crate::losses::{total_loss, LossReport, LossWeights};
use crate::model::{mapping_forward_tape, sphere_tensor, Checkpoint, HofInput, HofModel, InputImage};

/// RNG streams at or above this value are used for ground-truth resampling.
const GT_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Total iteration budget; `None` means `epochs` passes over the dataset.
    pub iterations: Option<u64>,
    pub samples_per_iter: usize,
    pub gt_samples: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Iterations at the start during which `lambda_cos` is treated as 0.
    pub cos_warmup: u64,
    /// Draw a new ground-truth sample from the mesh every iteration.
    pub resample_gt: bool,
    pub checkpoint_every: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
    /// Where a JSON dump of the offending batch goes on a non-finite loss.
    pub dump_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 1,
            epochs: 20,
            iterations: None,
            samples_per_iter: 1000,
            gt_samples: 10000,
            loss_weights: LossWeights::default(),
            seed: 0,
            adam: AdamConfig::default(),
            cos_warmup: 0,
            resample_gt: false,
            checkpoint_every: None,
            checkpoint_path: None,
            dump_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && (0.0..1.0).contains(&self.learning_rate)) {
            return Err(Error::domain(format!("learning rate must be in [0, 1), got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.samples_per_iter == 0 || self.gt_samples == 0 {
            return Err(Error::domain("batch_size, epochs, samples_per_iter and gt_samples must be positive"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::domain("checkpoint_every must be positive"));
        }
        LossWeights::new(self.loss_weights.lambda_cd, self.loss_weights.lambda_cos)?;
        Ok(())
    }

    /// Weights in effect at `iteration`, honouring the cosine warm-up.
    pub fn weights_at(&self, iteration: u64) -> LossWeights {
        let mut w = self.loss_weights;
        if iteration < self.cos_warmup {
            w.lambda_cos = 0.0;
        }
        w
    }
}

#[derive(Clone, Debug)]
pub enum ObjectInput {
    Code(usize),
    Image(InputImage),
}

impl ObjectInput {
    pub fn as_hof_input(&self) -> HofInput<'_> {
        match self {
            ObjectInput::Code(i) => HofInput::Code(*i),
            ObjectInput::Image(img) => HofInput::Image(img),
        }
    }
}

/// One training object: what the network sees and the surface it should
/// produce.
#[derive(Clone, Debug)]
pub struct TrainObject {
    pub id: String,
    pub input: ObjectInput,
    pub gt: OrientedPointCloud,
    /// Needed only when ground truth is resampled.
    pub mesh: Option<TriangleMesh>,
}

impl TrainObject {
    /// Object whose fixed ground truth is `gt_samples` points from `mesh`.
    pub fn from_mesh(id: impl Into<String>, input: ObjectInput, mesh: TriangleMesh, gt_samples: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, GT_STREAM_BASE - 1);
        Ok(Self {
            id: id.into(),
            input,
            gt: sample_mesh_with(&mesh, gt_samples, &mut rng)?,
            mesh: Some(mesh),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub report: LossReport,
    pub seconds: f64,
}

/// Model plus optimizer state and iteration counter.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: HofModel,
    pub cfg: TrainConfig,
    pub adam: AdamState,
    pub iteration: u64,
}

#[derive(Serialize)]
struct NanDump<'a> {
    iteration: u64,
    objects: Vec<&'a str>,
    report: Option<LossReport>,
    sphere_samples: Vec<[f64; 3]>,
    non_finite_params: usize,
}

impl Trainer {
    pub fn new(model: HofModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            adam: AdamState::new(model.params()),
            model,
            cfg,
            iteration: 0,
        })
    }

    /// Resumes from a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = ck.model()?;
        let adam = match &ck.optimizer {
            Some(s) => AdamState::restore(model.params(), s)?,
            None => AdamState::new(model.params()),
        };
        Ok(Self {
            model,
            cfg,
            adam,
            iteration: ck.iteration,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.model, self.iteration, Some(self.adam.snapshot()))
    }

    pub fn iterations_per_epoch(&self, dataset_len: usize) -> u64 {
        dataset_len.div_ceil(self.cfg.batch_size) as u64
    }

    /// Iteration at which [`Trainer::run`] stops.
    pub fn total_iterations(&self, dataset_len: usize) -> u64 {
        self.cfg
            .iterations
            .unwrap_or(self.cfg.epochs as u64 * self.iterations_per_epoch(dataset_len))
    }

    /// Sphere samples used at `iteration`.
    pub fn sphere_samples(&self, iteration: u64) -> Result<Vec<SpherePoint>> {
        sample_sphere_with(self.cfg.samples_per_iter, &mut seeded_rng(self.cfg.seed, iteration))
    }

    fn batch(&self, dataset_len: usize, iteration: u64) -> Vec<usize> {
        let b = self.cfg.batch_size as u64;
        let per_epoch = self.iterations_per_epoch(dataset_len);
        let start = (iteration % per_epoch) * b;
        (start..start + b).map(|k| (k % dataset_len as u64) as usize).collect()
    }

    fn ground_truth<'a>(&self, obj: &'a TrainObject, iteration: u64, slot: usize) -> Result<std::borrow::Cow<'a, OrientedPointCloud>> {
        match (&obj.mesh, self.cfg.resample_gt) {
            (Some(mesh), true) => {
                let stream = GT_STREAM_BASE + iteration * self.cfg.batch_size as u64 + slot as u64;
                let cloud = sample_mesh_with(mesh, self.cfg.gt_samples, &mut seeded_rng(self.cfg.seed, stream))?;
                Ok(std::borrow::Cow::Owned(cloud))
            }
            (None, true) => Err(Error::contract(format!("object `{}` has no mesh to resample", obj.id))),
            _ => Ok(std::borrow::Cow::Borrowed(&obj.gt)),
        }
    }

    /// Records the batch loss at `iteration` on `tape` over `params`.
    fn record_loss(&self, tape: &mut Tape, params: &[Var], dataset: &[TrainObject], iteration: u64) -> Result<(Var, LossReport)> {
        let xs = self.sphere_samples(iteration)?;
        let weights = self.cfg.weights_at(iteration);
        let batch = self.batch(dataset.len(), iteration);
        let mut total: Option<Var> = None;
        let mut sum = LossReport {
            chamfer: 0.0,
            cosine: 0.0,
            total: 0.0,
            degenerate_count: 0,
        };
        for (slot, &k) in batch.iter().enumerate() {
            let obj = &dataset[k];
            let gt = self.ground_truth(obj, iteration, slot)?;
            let theta = self.model.theta_on_tape(tape, params, obj.input.as_hof_input())?;
            let x = tape.constant(sphere_tensor(&xs)?);
            let out = mapping_forward_tape(tape, &self.model.mapping, theta, x)?;
            let (loss, r) = total_loss(tape, &gt, &out, weights)?;
            sum.chamfer += r.chamfer;
            sum.cosine += r.cosine;
            sum.degenerate_count += r.degenerate_count;
            total = Some(match total {
                None => loss,
                Some(t) => tape.add(t, loss)?,
            });
        }
        let mut total = total.expect("batch is non-empty");
        if batch.len() > 1 {
            let inv = 1.0 / batch.len() as f64;
            total = tape.scale(total, inv)?;
            sum.chamfer *= inv;
            sum.cosine *= inv;
            sum.total = weights.combine(sum.chamfer, sum.cosine);
        } else {
            sum.total = tape.value(total).item()?;
        }
        Ok((total, sum))
    }

    /// Loss at `iteration` for the current parameters, without updating.
    pub fn loss_at(&self, dataset: &[TrainObject], iteration: u64) -> Result<LossReport> {
        if dataset.is_empty() {
            return Err(Error::domain("training dataset is empty"));
        }
        let mut tape = Tape::new();
        let params: Vec<Var> = self.model.params().iter().map(|p| tape.constant(p.clone())).collect();
        Ok(self.record_loss(&mut tape, &params, dataset, iteration)?.1)
    }

    fn dump_batch(&self, dataset: &[TrainObject], report: Option<LossReport>) -> String {
        let Some(path) = &self.cfg.dump_path else {
            return String::new();
        };
        let batch = self.batch(dataset.len(), self.iteration);
        let dump = NanDump {
            iteration: self.iteration,
            objects: batch.iter().map(|&k| dataset[k].id.as_str()).collect(),
            report,
            sphere_samples: self
                .sphere_samples(self.iteration)
                .map(|xs| xs.iter().map(|x| x.coords()).collect())
                .unwrap_or_default(),
            non_finite_params: self.model.params().iter().map(|p| p.data().iter().filter(|x| !x.is_finite()).count()).sum(),
        };
        match serde_json::to_vec_pretty(&dump).map_err(|e| e.to_string()).and_then(|b| std::fs::write(path, b).map_err(|e| e.to_string())) {
            Ok(()) => format!("; batch dumped to {}", path.display()),
            Err(e) => format!("; batch dump to {} failed: {e}", path.display()),
        }
    }

    /// One optimizer step on the batch for the current iteration.
    pub fn step(&mut self, dataset: &[TrainObject]) -> Result<TrainRecord> {
        if dataset.is_empty() {
            return Err(Error::domain("training dataset is empty"));
        }
        let start = Instant::now();
        let mut tape = Tape::new();
        let taken = self.model.take_params();
        let params: Vec<Var> = taken.into_iter().map(|p| tape.leaf(p)).collect();
        let result = self
            .record_loss(&mut tape, &params, dataset, self.iteration)
            .and_then(|(loss, report)| {
                if !report.total.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at iteration {}: {report:?}", self.iteration)));
                }
                tape.backward(loss).map(|()| report)
            });
        let mut restored: Vec<Tensor> = params.iter().map(|&v| tape.take(v)).collect();
        let report = match result {
            Ok(r) => r,
            Err(e) => {
                restored.iter_mut().for_each(Tensor::zero_grad);
                self.model.put_params(restored);
                return Err(match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("{msg}{}", self.dump_batch(dataset, None))),
                    other => other,
                });
            }
        };
        let grads: Vec<Vec<f64>> = restored
            .iter_mut()
            .map(|p| p.take_grad().unwrap_or_else(|| vec![0.0; p.len()]))
            .collect();
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        adam_step(&mut restored, &grad_refs, &mut self.adam, self.cfg.learning_rate, &self.cfg.adam)?;
        self.model.put_params(restored);
        let record = TrainRecord {
            iteration: self.iteration,
            epoch: self.iteration / self.iterations_per_epoch(dataset.len()),
            report,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.iteration += 1;
        Ok(record)
    }

    /// Steps until [`Trainer::total_iterations`], calling `on_record` after
    /// each step and writing periodic checkpoints if configured.
    pub fn run(&mut self, dataset: &[TrainObject], mut on_record: impl FnMut(&TrainRecord) -> Result<()>) -> Result<Vec<TrainRecord>> {
        if dataset.is_empty() {
            return Err(Error::domain("training dataset is empty"));
        }
        let end = self.total_iterations(dataset.len());
        let mut records = Vec::new();
        while self.iteration < end {
            let r = self.step(dataset)?;
            on_record(&r)?;
            records.push(r);
            if let (Some(every), Some(path)) = (self.cfg.checkpoint_every, &self.cfg.checkpoint_path) {
                if self.iteration.is_multiple_of(every) {
                    self.checkpoint().save(path)?;
                }
            }
        }
        Ok(records)
    }
}

/// Trains a fresh trainer over `dataset` for the configured budget.
pub fn train(model: HofModel, dataset: &[TrainObject], cfg: TrainConfig) -> Result<(Trainer, Vec<TrainRecord>)> {
    let mut t = Trainer::new(model, cfg)?;
    let records = t.run(dataset, |_| Ok(()))?;
    Ok((t, records))
}

pub const LOG_HEADER: &str = "iteration,chamfer,cosine,total,degenerate_count,seconds";

/// One CSV log line. `seconds` is left empty unless `wall_time` is set so
/// that logs of identical runs are byte-identical.
pub fn log_line(r: &TrainRecord, wall_time: bool) -> String {
    let secs = if wall_time { format!("{:.6}", r.seconds) } else { String::new() };
    format!(
        "{},{:e},{:e},{:e},{},{secs}",
        r.iteration, r.report.chamfer, r.report.cosine, r.report.total, r.report.degenerate_count
    )
}

pub fn write_log(records: &[TrainRecord], mut out: impl Write, wall_time: bool, path: &Path) -> Result<()> {
    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&log_line(r, wall_time));
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
