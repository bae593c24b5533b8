use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hofsurf::geometry::primitives::torus;
use hofsurf::geometry::sample_mesh_uniform;
use hofsurf::io::{save_mesh, save_oriented_cloud, MeshFormat, PlyEncoding};
use hofsurf::model::Checkpoint;

fn hofsurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hofsurf"))
        .args(args)
        .env("HOFSURF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    mesh: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mesh = dir.path().join("torus.obj");
        save_mesh(&torus(0.35, 0.15, 24, 12), &mesh, MeshFormat::Obj).unwrap();
        Self { dir, mesh }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train_small(&self, ckpt: &str, log: &str, iters: &str, extra: &[&str]) -> Output {
        let (c, l) = (self.path(ckpt), self.path(log));
        let mut args = vec![
            "train", "--mesh", s(&self.mesh), "--iters", iters, "--lr", "1e-3", "--samples", "100",
            "--gt-samples", "300", "--hidden", "16,16", "--head-hidden", "8", "--code-dim", "8",
            "--out", s(&c), "--log", s(&l),
        ];
        args.extend_from_slice(extra);
        hofsurf(&args)
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(hofsurf(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(hofsurf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hofsurf(&["train", "--out", "x.ckpt"]).status.code(), Some(2));
    assert_eq!(hofsurf(&["eval", "--pred", "x.ply"]).status.code(), Some(2));
    assert_eq!(hofsurf(&["eval", "--pred", "a", "--gt-mesh", "b", "--json", "--csv"]).status.code(), Some(2));
    assert_eq!(hofsurf(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_one() {
    let f = Fixture::new();
    let missing = f.path("missing.obj");
    let o = hofsurf(&["train", "--mesh", s(&missing), "--iters", "1", "--out", s(&f.path("c.ckpt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.obj"), "{}", stderr(&o));
    assert!(!f.path("c.ckpt").exists());
    let o = hofsurf(&["reconstruct", "--ckpt", s(&f.path("none.ckpt")), "--out", s(&f.path("x.ply"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_iterations_write_initial_checkpoint_and_header_only_log() {
    let f = Fixture::new();
    let (c, l) = (f.path("z.ckpt"), f.path("z.csv"));
    let o = hofsurf(&[
        "train", "--mesh", s(&f.mesh), "--iters", "0", "--hidden", "16,16", "--head-hidden", "8", "--out", s(&c),
        "--log", s(&l),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("lambda_cd=1 "), "{out}");
    assert!(out.contains("lambda_cos=0.1 "), "{out}");
    assert!(out.contains("lr=1e-5 "), "{out}");
    assert_eq!(fs::read_to_string(&l).unwrap(), "iteration,chamfer,cosine,total,degenerate_count,seconds\n");
    let ck = Checkpoint::load(&c).unwrap();
    assert_eq!(ck.iteration, 0);
    ck.model().unwrap();
}

#[test]
fn same_seed_gives_identical_logs() {
    let f = Fixture::new();
    assert!(f.train_small("a.ckpt", "a.csv", "5", &[]).status.success());
    assert!(f.train_small("b.ckpt", "b.csv", "5", &[]).status.success());
    let a = fs::read(f.path("a.csv")).unwrap();
    assert_eq!(a, fs::read(f.path("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);
    assert_eq!(fs::read(f.path("a.ckpt")).unwrap(), fs::read(f.path("b.ckpt")).unwrap());
    assert!(f.train_small("c.ckpt", "c.csv", "5", &["--seed", "9"]).status.success());
    assert_ne!(fs::read(f.path("a.csv")).unwrap(), fs::read(f.path("c.csv")).unwrap());
}

#[test]
fn wall_time_column_is_opt_in() {
    let f = Fixture::new();
    assert!(f.train_small("a.ckpt", "a.csv", "5", &["--log-wall-time"]).status.success());
    let log = fs::read_to_string(f.path("a.csv")).unwrap();
    let last = log.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(last.parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn reconstruct_same_checkpoint_at_two_resolutions() {
    let f = Fixture::new();
    assert!(f.train_small("m.ckpt", "m.csv", "5", &[]).status.success());
    let ck = f.path("m.ckpt");
    for n in ["1000", "10000"] {
        let out = f.path(&format!("r{n}.ply"));
        let o = hofsurf(&["reconstruct", "--ckpt", s(&ck), "--samples", n, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        let field = |k: &str| -> usize {
            text.split_whitespace()
                .find_map(|w| w.strip_prefix(k))
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(field("points=") + field("degenerate="), n.parse::<usize>().unwrap());
        let ply = fs::read_to_string(&out).unwrap();
        assert!(ply.contains(&format!("element vertex {}", field("points="))));
    }
    let again = f.path("again.ply");
    assert!(hofsurf(&["reconstruct", "--ckpt", s(&ck), "--samples", "1000", "--out", s(&again)]).status.success());
    assert_eq!(fs::read(f.path("r1000.ply")).unwrap(), fs::read(&again).unwrap());
    let bin = f.path("bin.ply");
    assert!(hofsurf(&["reconstruct", "--ckpt", s(&ck), "--samples", "50", "--binary", "--out", s(&bin)]).status.success());
    assert!(fs::read(&bin).unwrap().windows(20).any(|w| w == b"binary_little_endian"));
}

#[test]
fn mismatched_checkpoint_reports_both_counts() {
    let f = Fixture::new();
    assert!(f.train_small("m.ckpt", "m.csv", "5", &[]).status.success());
    let mut ck = Checkpoint::load(&f.path("m.ckpt")).unwrap();
    let real = ck.params.as_ref().unwrap().len();
    ck.params.as_mut().unwrap().truncate(real - 3);
    let bad = f.path("bad.ckpt");
    fs::write(&bad, ck.to_bytes()).unwrap();
    let o = hofsurf(&["reconstruct", "--ckpt", s(&bad), "--out", s(&f.path("x.ply"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains(&real.to_string()) && err.contains(&(real - 3).to_string()), "{err}");
}

fn eval_json(f: &Fixture, pred: &Path, extra: &[&str]) -> serde_json::Value {
    let mut args = vec!["eval", "--pred", s(pred), "--gt-mesh", s(&f.mesh), "--json"];
    args.extend_from_slice(extra);
    let o = hofsurf(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn eval_self_anchor_and_formats() {
    let f = Fixture::new();
    let mesh = torus(0.35, 0.15, 24, 12);
    let pred = f.path("self.ply");
    save_oriented_cloud(&sample_mesh_uniform(&mesh, 10000, 4).unwrap(), &pred, PlyEncoding::Ascii).unwrap();
    let o = hofsurf(&["eval", "--pred", s(&pred), "--gt-mesh", s(&f.mesh), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(&row[2..], ["0.000", "100.00", "100.00", "1.000"]);

    let other = f.path("other.ply");
    save_oriented_cloud(&sample_mesh_uniform(&mesh, 2500, 5).unwrap(), &other, PlyEncoding::Ascii).unwrap();
    let j = eval_json(&f, &other, &[]);
    let csv_out = hofsurf(&["eval", "--pred", s(&other), "--gt-mesh", s(&f.mesh), "--csv"]);
    let csv_text = stdout(&csv_out);
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row = &j["rows"][0];
    for (name, key) in [
        ("chamfer_sym_x1000", "chamfer_sym"),
        ("fscore_tau", "fscore_tau"),
        ("fscore_2tau", "fscore_2tau"),
        ("cosine_similarity", "cosine_similarity"),
    ] {
        let i = header.iter().position(|h| *h == name).unwrap();
        let from_csv: f64 = values[i].parse().unwrap();
        assert!((from_csv - row[key].as_f64().unwrap()).abs() < 1e-4, "{name}");
    }
    assert_eq!(values[0], row["id"].as_str().unwrap());
    assert_eq!(values[1], row["category"].as_str().unwrap());

    let mut last = -1.0;
    for tau in ["1e-6", "2e-6", "4e-6", "8e-6", "1.6e-5", "3.2e-5"] {
        let f_tau = eval_json(&f, &other, &["--tau", tau])["rows"][0]["fscore_tau"].as_f64().unwrap();
        assert!(f_tau >= last);
        last = f_tau;
    }
    let sq = eval_json(&f, &other, &["--tau", "1e-4"])["rows"][0]["fscore_tau"].as_f64().unwrap();
    let eu = eval_json(&f, &other, &["--tau", "1e-4", "--tau-on", "euclidean"])["rows"][0]["fscore_tau"]
        .as_f64()
        .unwrap();
    assert!(eu <= sq);
}

#[test]
fn eval_manifest_reports_instance_and_category_means() {
    let f = Fixture::new();
    let mesh = torus(0.35, 0.15, 24, 12);
    for (i, name) in ["a.ply", "b.ply", "c.ply"].iter().enumerate() {
        let cloud = sample_mesh_uniform(&mesh, 500 * (i + 1), i as u64).unwrap();
        save_oriented_cloud(&cloud, &f.path(name), PlyEncoding::Ascii).unwrap();
    }
    let manifest = f.path("m.csv");
    fs::write(
        &manifest,
        "id,category,pred,gt_mesh\na,ring,a.ply,torus.obj\nb,ring,b.ply,torus.obj\nc,donut,c.ply,torus.obj\n",
    )
    .unwrap();
    let o = hofsurf(&["eval", "--manifest", s(&manifest), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let cd = |i: usize| j["rows"][i]["chamfer_sym"].as_f64().unwrap();
    let inst = (cd(0) + cd(1) + cd(2)) / 3.0;
    let cat = ((cd(0) + cd(1)) / 2.0 + cd(2)) / 2.0;
    assert!((j["instance_mean"]["chamfer_sym"].as_f64().unwrap() - inst).abs() < 1e-12);
    assert!((j["category_mean"]["chamfer_sym"].as_f64().unwrap() - cat).abs() < 1e-12);
    let table = stdout(&hofsurf(&["eval", "--manifest", s(&manifest)]));
    assert!(table.contains("mean (instance)") && table.contains("mean (category)"));
}

#[test]
fn image_mode_train_and_reconstruct() {
    let f = Fixture::new();
    let renders = f.path("renders");
    let o = f.train_small("img.ckpt", "img.csv", "2", &["--mode", "image", "--save-renders", s(&renders)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mode=image"));
    let img = fs::read_dir(&renders).unwrap().next().unwrap().unwrap().path();
    let out = f.path("img.ply");
    let o = hofsurf(&["reconstruct", "--ckpt", s(&f.path("img.ckpt")), "--image", s(&img), "--samples", "200", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hofsurf(&["reconstruct", "--ckpt", s(&f.path("img.ckpt")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dataset_directory_with_categories() {
    let f = Fixture::new();
    let data = f.path("data");
    fs::create_dir_all(data.join("rings")).unwrap();
    save_mesh(&torus(0.35, 0.15, 12, 8), &data.join("rings/thin.obj"), MeshFormat::Obj).unwrap();
    save_mesh(&torus(0.3, 0.2, 12, 8), &data.join("rings/fat.ply"), MeshFormat::PlyAscii).unwrap();
    save_mesh(&torus(0.4, 0.1, 12, 8), &data.join("loose.obj"), MeshFormat::Obj).unwrap();
    let c = f.path("d.ckpt");
    let o = hofsurf(&[
        "train", "--dataset", s(&data), "--iters", "3", "--samples", "50", "--gt-samples", "100", "--hidden", "8",
        "--head-hidden", "4", "--code-dim", "4", "--out", s(&c),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("objects=3"));
    let o = hofsurf(&["reconstruct", "--ckpt", s(&c), "--code", "2", "--samples", "20", "--out", s(&f.path("x.ply"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hofsurf(&["reconstruct", "--ckpt", s(&c), "--code", "3", "--samples", "20", "--out", s(&f.path("x.ply"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let f = Fixture::new();
    assert!(f.train_small("full.ckpt", "full.csv", "6", &[]).status.success());
    assert!(f.train_small("half.ckpt", "half.csv", "3", &[]).status.success());
    let half = f.path("half.ckpt");
    assert!(f.train_small("rest.ckpt", "rest.csv", "6", &["--resume", s(&half)]).status.success());
    assert_eq!(fs::read(f.path("full.ckpt")).unwrap(), fs::read(f.path("rest.ckpt")).unwrap());
    let full = fs::read_to_string(f.path("full.csv")).unwrap();
    let joined = fs::read_to_string(f.path("half.csv")).unwrap()
        + &fs::read_to_string(f.path("rest.csv")).unwrap().lines().skip(1).map(|l| format!("{l}\n")).collect::<String>();
    assert_eq!(full, joined);
}

#[test]
fn export_patches_writes_obj() {
    let f = Fixture::new();
    let cloud = f.path("c.ply");
    save_oriented_cloud(&sample_mesh_uniform(&torus(0.35, 0.15, 24, 12), 40, 1).unwrap(), &cloud, PlyEncoding::Ascii).unwrap();
    let out = f.path("p.obj");
    let o = hofsurf(&["export-patches", "--cloud", s(&cloud), "--edge", "0.02", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("triangles=40"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 40);
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 120);
}

#[test]
fn selftest_passes_and_detects_gradient_fault() {
    let o = hofsurf(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = hofsurf(&["selftest", "--inject-grad-fault", "1.01"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gradient fidelity"));
}
