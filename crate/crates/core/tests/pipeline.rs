use hofsurf::geometry::primitives::torus;
use hofsurf::geometry::{sample_mesh_uniform, OrientedPointCloud};
use hofsurf::io::{load_mesh, load_oriented_cloud, save_mesh, save_oriented_cloud, MeshFormat, PlyEncoding};
use hofsurf::metrics::{evaluate, EvalConfig};
use hofsurf::model::{Checkpoint, EncoderSpec, HofInput, HofModel, MappingNetSpec};
use hofsurf::training::{ObjectInput, TrainConfig, TrainObject, Trainer};

fn small_model(codes: usize) -> HofModel {
    let enc = EncoderSpec::learned_code(16, codes).with_head_hidden(16);
    HofModel::new(MappingNetSpec::new(vec![32, 32]).unwrap(), enc, 1).unwrap()
}

fn cfg(iters: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        iterations: Some(iters),
        samples_per_iter: 300,
        gt_samples: 2000,
        ..Default::default()
    }
}

#[test]
fn mesh_file_to_evaluated_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let mesh_path = dir.path().join("torus.ply");
    save_mesh(&torus(0.35, 0.15, 24, 12), &mesh_path, MeshFormat::PlyBinary).unwrap();
    let mesh = load_mesh(&mesh_path).unwrap().mesh;

    let data = vec![TrainObject::from_mesh("t", ObjectInput::Code(0), mesh.clone(), 2000, 0).unwrap()];
    let mut trainer = Trainer::new(small_model(1), cfg(60)).unwrap();
    let records = trainer.run(&data, |_| Ok(())).unwrap();
    assert_eq!(records.len(), 60);
    assert!(records.last().unwrap().report.chamfer < 0.5 * records[0].report.chamfer);

    let ckpt = dir.path().join("m.ckpt");
    trainer.checkpoint().save(&ckpt).unwrap();
    let model = Checkpoint::load(&ckpt).unwrap().model().unwrap();
    assert_eq!(model, trainer.model);

    let planes = model.reconstruct(HofInput::Code(0), 2500, 7).unwrap();
    let live: Vec<_> = planes.iter().filter(|p| !p.is_degenerate()).collect();
    let cloud = OrientedPointCloud::from_unnormalized(live.iter().map(|p| p.p).collect(), live.iter().map(|p| p.v).collect()).unwrap();
    let ply = dir.path().join("r.ply");
    save_oriented_cloud(&cloud, &ply, PlyEncoding::BinaryLittleEndian).unwrap();
    let back = load_oriented_cloud(&ply).unwrap();
    assert_eq!(back.points, cloud.points);

    let cfg = EvalConfig::default();
    let trained = evaluate(&back, &mesh, &cfg, 0).unwrap();
    let untrained = {
        let p = small_model(1).reconstruct(HofInput::Code(0), 2500, 7).unwrap();
        let c = OrientedPointCloud::from_unnormalized(p.iter().map(|q| q.p).collect(), p.iter().map(|q| q.v).collect()).unwrap();
        evaluate(&c, &mesh, &cfg, 0).unwrap()
    };
    assert!(trained.chamfer_sym < untrained.chamfer_sym);
    assert!(trained.fscore_tau >= untrained.fscore_tau);
}

#[test]
fn two_objects_get_distinct_surfaces() {
    let small = torus(0.2, 0.05, 16, 8);
    let large = torus(0.6, 0.15, 16, 8);
    let data = vec![
        TrainObject::from_mesh("s", ObjectInput::Code(0), small.clone(), 2000, 0).unwrap(),
        TrainObject::from_mesh("l", ObjectInput::Code(1), large.clone(), 2000, 0).unwrap(),
    ];
    let mut trainer = Trainer::new(small_model(2), cfg(200)).unwrap();
    trainer.run(&data, |_| Ok(())).unwrap();
    let radius = |code: usize| {
        let planes = trainer.model.reconstruct(HofInput::Code(code), 2000, 3).unwrap();
        planes.iter().map(|p| (p.p[0] * p.p[0] + p.p[1] * p.p[1]).sqrt()).sum::<f64>() / planes.len() as f64
    };
    assert!(radius(1) > radius(0) + 0.1, "{} vs {}", radius(1), radius(0));
    let gt = sample_mesh_uniform(&large, 2000, 1).unwrap();
    assert_eq!(gt.len(), 2000);
}
