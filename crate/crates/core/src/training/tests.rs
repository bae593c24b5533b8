use super::*;
use crate::geometry::primitives::torus;
use crate::model::{EncoderSpec, MappingNetSpec};

fn tiny_model(seed: u64) -> HofModel {
    let enc = EncoderSpec::learned_code(16, 2).with_head_hidden(8);
    HofModel::new(MappingNetSpec::new(vec![8, 8]).unwrap(), enc, seed).unwrap()
}

fn dataset(samples: usize) -> Vec<TrainObject> {
    let mesh = torus(0.5, 0.2, 16, 8);
    vec![
        TrainObject::from_mesh("t0", ObjectInput::Code(0), mesh.clone(), samples, 1).unwrap(),
        TrainObject::from_mesh("t1", ObjectInput::Code(1), mesh, samples, 2).unwrap(),
    ]
}

fn cfg(iters: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        iterations: Some(iters),
        samples_per_iter: 50,
        gt_samples: 80,
        seed: 5,
        ..Default::default()
    }
}

fn bits(records: &[TrainRecord]) -> Vec<[u64; 3]> {
    records
        .iter()
        .map(|r| [r.report.chamfer.to_bits(), r.report.cosine.to_bits(), r.report.total.to_bits()])
        .collect()
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let data = dataset(80);
    let (a, ra) = train(tiny_model(1), &data, cfg(8)).unwrap();
    let (b, rb) = train(tiny_model(1), &data, cfg(8)).unwrap();
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(a.model, b.model);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = dataset(80);
    let m = tiny_model(2);
    let (t, _) = train(m.clone(), &data, TrainConfig { learning_rate: 0.0, ..cfg(3) }).unwrap();
    assert_eq!(t.model, m);
}

#[test]
fn record_accounting() {
    let data = &dataset(80)[..1];
    let c = TrainConfig { epochs: 1, ..cfg(10) };
    let (_, r) = train(tiny_model(3), data, c).unwrap();
    assert_eq!(r.len(), 10);
    assert_eq!(r.iter().map(|r| r.iteration).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    let by_epoch = TrainConfig { iterations: None, epochs: 3, ..cfg(0) };
    let (_, r) = train(tiny_model(3), &dataset(80), by_epoch).unwrap();
    assert_eq!(r.len(), 6);
    assert_eq!(r[5].epoch, 2);
}

#[test]
fn empty_dataset_is_domain_error() {
    assert!(matches!(train(tiny_model(4), &[], cfg(1)), Err(Error::Domain(_))));
}

#[test]
fn logged_total_is_weighted_sum() {
    let data = dataset(80);
    let c = TrainConfig { cos_warmup: 3, ..cfg(6) };
    let (_, r) = train(tiny_model(5), &data, c.clone()).unwrap();
    for rec in &r {
        let w = c.weights_at(rec.iteration);
        assert_eq!(rec.report.total, w.combine(rec.report.chamfer, rec.report.cosine));
    }
    assert_eq!(r[0].report.total, r[0].report.chamfer);
    assert_ne!(r[5].report.total, r[5].report.chamfer);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = dataset(80);
    let (full, full_records) = train(tiny_model(6), &data, cfg(6)).unwrap();
    let (half, first) = train(tiny_model(6), &data, cfg(3)).unwrap();
    let ck = Checkpoint::from_bytes(&half.checkpoint().to_bytes()).unwrap();
    let mut resumed = Trainer::from_checkpoint(&ck, cfg(6)).unwrap();
    let rest = resumed.run(&data, |_| Ok(())).unwrap();
    let joined: Vec<_> = first.into_iter().chain(rest).collect();
    assert_eq!(bits(&joined), bits(&full_records));
    assert_eq!(resumed.model, full.model);
    assert_eq!(resumed.adam, full.adam);
}

#[test]
fn reloaded_checkpoint_reproduces_loss() {
    let data = dataset(80);
    let (t, _) = train(tiny_model(7), &data, cfg(4)).unwrap();
    let back = Trainer::from_checkpoint(&Checkpoint::from_bytes(&t.checkpoint().to_bytes()).unwrap(), cfg(4)).unwrap();
    let a = t.loss_at(&data, 3).unwrap().total;
    let b = back.loss_at(&data, 3).unwrap().total;
    assert!((a - b).abs() <= 1e-12);
}

#[test]
fn batches_and_resampling_run() {
    let data = dataset(80);
    let c = TrainConfig { batch_size: 2, resample_gt: true, ..cfg(3) };
    let (_, r) = train(tiny_model(8), &data, c).unwrap();
    assert_eq!(r.len(), 3);
    assert!(r.iter().all(|r| r.report.total.is_finite()));
}

#[test]
fn non_finite_parameters_abort_with_dump() {
    let data = dataset(80);
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.json");
    let mut m = tiny_model(9);
    m.params_mut()[1].data_mut()[0] = f64::NAN;
    let mut t = Trainer::new(m, TrainConfig { dump_path: Some(dump.clone()), ..cfg(2) }).unwrap();
    let err = t.step(&data).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&dump).unwrap()).unwrap();
    assert_eq!(v["objects"][0], "t0");
    assert!(v["non_finite_params"].as_u64().unwrap() >= 1);
    assert_eq!(t.model.params().len(), 5);
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let data = dataset(40);
    let c = TrainConfig { samples_per_iter: 10, ..cfg(1) };
    let t = Trainer::new(tiny_model(10), c).unwrap();
    let mut tape = Tape::new();
    let params: Vec<Var> = t.model.params().iter().map(|p| tape.leaf(p.clone())).collect();
    let (loss, _) = t.record_loss(&mut tape, &params, &data, 0).unwrap();
    tape.backward(loss).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, &pv) in params.iter().enumerate() {
        let g = tape.value(pv).grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.model.params()[k].len()]);
        for i in 0..g.len() {
            let mut probe = t.clone();
            probe.model.params_mut()[k].data_mut()[i] += h;
            let up = probe.loss_at(&data, 0).unwrap().total;
            probe.model.params_mut()[k].data_mut()[i] -= 2.0 * h;
            let down = probe.loss_at(&data, 0).unwrap().total;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn log_lines_are_stable() {
    let r = TrainRecord {
        iteration: 3,
        epoch: 0,
        report: LossReport {
            chamfer: 0.5,
            cosine: 0.25,
            total: 0.525,
            degenerate_count: 1,
        },
        seconds: 1.5,
    };
    assert_eq!(log_line(&r, false), "3,5e-1,2.5e-1,5.25e-1,1,");
    assert_eq!(log_line(&r, true), "3,5e-1,2.5e-1,5.25e-1,1,1.500000");
}
