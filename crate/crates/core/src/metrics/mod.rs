//! Evaluation metrics between a predicted and a ground-truth surface.

mod report;

pub use report::{write_csv, write_json, ReportRow, ReportSummary, SummaryRow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_mesh_uniform, vec3, NearestNeighborIndex, OrientedPointCloud, PointCloud, TriangleMesh};
use crate::losses::match_nearest;

/// Whether the F-score threshold compares squared or plain distances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    #[default]
    Squared,
    Euclidean,
}

impl std::str::FromStr for TauMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(TauMode::Squared),
            "euclidean" => Ok(TauMode::Euclidean),
            _ => Err(Error::domain(format!("tau mode must be `squared` or `euclidean`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub n_pred_samples: usize,
    pub n_gt_samples: usize,
    pub tau: f64,
    pub tau_mode: TauMode,
    /// Multiplier for Chamfer values in formatted output only.
    pub report_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_pred_samples: 2500,
            n_gt_samples: 10000,
            tau: 1e-4,
            tau_mode: TauMode::Squared,
            report_scale: 1000.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pred_samples == 0 || self.n_gt_samples == 0 {
            return Err(Error::domain("sample counts must be at least 1"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.report_scale.is_finite() && self.report_scale > 0.0) {
            return Err(Error::domain("report_scale must be positive"));
        }
        Ok(())
    }
}

/// Raw (unscaled) metric values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub chamfer_sym: f64,
    pub chamfer_pred_to_gt: f64,
    pub chamfer_gt_to_pred: f64,
    pub fscore_tau: f64,
    pub fscore_2tau: f64,
    pub cosine_similarity: f64,
}

fn require(x: &[vec3::Vec3], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::domain(format!("{what} point set is empty")));
    }
    Ok(())
}

/// Squared distance from every point of `x` to its nearest point in `y`.
fn nearest_d2(x: &[vec3::Vec3], y: &[vec3::Vec3]) -> Result<Vec<f64>> {
    let index = NearestNeighborIndex::new(y)?;
    Ok(match_nearest(&index, x).into_iter().map(|(_, d)| d).collect())
}

/// Ascending-order sum divided by the count.
pub(crate) fn canonical_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().fold(0.0, |a, x| a + x) / n
}

/// `CD(X, Y) = mean_x min_y |x - y|²`.
pub fn eval_chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    require(&x.points, "first")?;
    require(&y.points, "second")?;
    Ok(canonical_mean(nearest_d2(&x.points, &y.points)?))
}

/// `(CD(X, Y) + CD(Y, X)) / 2`.
pub fn eval_chamfer_sym(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    Ok((eval_chamfer(x, y)? + eval_chamfer(y, x)?) / 2.0)
}

fn within(d2: &[f64], tau: f64, mode: TauMode) -> f64 {
    let hits = d2
        .iter()
        .filter(|&&d| match mode {
            TauMode::Squared => d <= tau,
            TauMode::Euclidean => d.sqrt() <= tau,
        })
        .count();
    hits as f64 / d2.len() as f64
}

fn fscore_from(pred_d2: &[f64], gt_d2: &[f64], tau: f64, mode: TauMode) -> f64 {
    let p = within(pred_d2, tau, mode);
    let r = within(gt_d2, tau, mode);
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    }
}

/// F-score in percent at threshold `tau`.
pub fn eval_fscore(pred: &PointCloud, gt: &PointCloud, tau: f64, mode: TauMode) -> Result<f64> {
    require(&pred.points, "predicted")?;
    require(&gt.points, "ground-truth")?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let a = nearest_d2(&pred.points, &gt.points)?;
    let b = nearest_d2(&gt.points, &pred.points)?;
    Ok(fscore_from(&a, &b, tau, mode))
}

/// `|n · m|` for unit vectors, written as `1 - min(|n-m|², |n+m|²)/2` so
/// identical or opposite normals give exactly 1.
pub fn unsigned_cosine(n: vec3::Vec3, m: vec3::Vec3) -> f64 {
    let a = vec3::dist2(n, m);
    let b = vec3::dist2(n, vec3::scale(m, -1.0));
    (1.0 - 0.5 * a.min(b)).clamp(0.0, 1.0)
}

/// Mean over ground-truth points of `|n_gt · n_pred|` for the nearest
/// predicted point.
pub fn eval_cosine_similarity(gt: &OrientedPointCloud, pred: &OrientedPointCloud) -> Result<f64> {
    require(&gt.points, "ground-truth")?;
    require(&pred.points, "predicted")?;
    let index = NearestNeighborIndex::new(&pred.points)?;
    let sims: Vec<f64> = gt
        .points
        .par_iter()
        .zip(&gt.normals)
        .map(|(&p, &n)| unsigned_cosine(n, pred.normals[index.nearest(p).0]))
        .collect();
    Ok(canonical_mean(sims))
}

/// All metrics of `pred` against `n_gt_samples` points drawn from `gt_mesh`
/// with `seed`.
pub fn evaluate(pred: &OrientedPointCloud, gt_mesh: &TriangleMesh, cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    cfg.validate()?;
    let gt = sample_mesh_uniform(gt_mesh, cfg.n_gt_samples, seed)?;
    evaluate_against(pred, &gt, cfg)
}

/// [`evaluate`] with an already sampled ground truth.
pub fn evaluate_against(pred: &OrientedPointCloud, gt: &OrientedPointCloud, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    require(&pred.points, "predicted")?;
    require(&gt.points, "ground-truth")?;
    let pred_d2 = nearest_d2(&pred.points, &gt.points)?;
    let gt_d2 = nearest_d2(&gt.points, &pred.points)?;
    let fscore_tau = fscore_from(&pred_d2, &gt_d2, cfg.tau, cfg.tau_mode);
    let fscore_2tau = fscore_from(&pred_d2, &gt_d2, 2.0 * cfg.tau, cfg.tau_mode);
    let chamfer_pred_to_gt = canonical_mean(pred_d2);
    let chamfer_gt_to_pred = canonical_mean(gt_d2);
    Ok(EvalReport {
        chamfer_sym: (chamfer_pred_to_gt + chamfer_gt_to_pred) / 2.0,
        chamfer_pred_to_gt,
        chamfer_gt_to_pred,
        fscore_tau,
        fscore_2tau,
        cosine_similarity: eval_cosine_similarity(gt, pred)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{icosphere, unit_cube};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pc(p: Vec<vec3::Vec3>) -> PointCloud {
        PointCloud::new(p).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<vec3::Vec3> {
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    }

    fn brute(x: &[vec3::Vec3], y: &[vec3::Vec3]) -> f64 {
        let d: Vec<f64> = x
            .iter()
            .map(|&a| y.iter().map(|&b| vec3::dist2(a, b)).fold(f64::INFINITY, f64::min))
            .collect();
        canonical_mean(d)
    }

    #[test]
    fn chamfer_anchors() {
        assert_eq!(eval_chamfer(&pc(vec![[0.0; 3]]), &pc(vec![[3.0, 4.0, 0.0]])).unwrap(), 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 40);
        assert_eq!(eval_chamfer(&pc(x.clone()), &pc(x)).unwrap(), 0.0);
        assert!(matches!(eval_chamfer(&pc(vec![]), &pc(vec![[0.0; 3]])), Err(Error::Domain(_))));
    }

    #[test]
    fn chamfer_equals_brute_force_and_sym_is_swap_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let x = random(&mut rng, 70);
            let y = random(&mut rng, 45);
            assert_eq!(eval_chamfer(&pc(x.clone()), &pc(y.clone())).unwrap(), brute(&x, &y));
            assert_eq!(
                eval_chamfer_sym(&pc(x.clone()), &pc(y.clone())).unwrap(),
                eval_chamfer_sym(&pc(y), &pc(x)).unwrap()
            );
        }
    }

    #[test]
    fn fscore_anchors() {
        let gt = pc(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(eval_fscore(&gt, &gt, 1e-4, TauMode::Squared).unwrap(), 100.0);
        let far = pc(vec![[5.0, 5.0, 5.0]]);
        assert_eq!(eval_fscore(&far, &gt, 1e-4, TauMode::Squared).unwrap(), 0.0);
        let half = pc(vec![[0.0; 3]]);
        let f = eval_fscore(&half, &gt, 1e-4, TauMode::Squared).unwrap();
        assert!((f - 66.67).abs() < 0.01, "{f}");
        assert!(eval_fscore(&half, &gt, 0.0, TauMode::Squared).is_err());
    }

    #[test]
    fn tau_modes_differ_as_expected() {
        let gt = pc(vec![[0.0; 3]]);
        let pred = pc(vec![[0.005, 0.0, 0.0]]);
        assert_eq!(eval_fscore(&pred, &gt, 1e-4, TauMode::Squared).unwrap(), 100.0);
        assert_eq!(eval_fscore(&pred, &gt, 1e-4, TauMode::Euclidean).unwrap(), 0.0);
        assert_eq!(eval_fscore(&pred, &gt, 1e-2, TauMode::Euclidean).unwrap(), 100.0);
    }

    #[test]
    fn fscore_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = pc(random(&mut rng, 200));
        let y = pc(random(&mut rng, 150));
        let mut last = 0.0;
        for k in 0..30 {
            let f = eval_fscore(&x, &y, 1e-4 * 1.5f64.powi(k), TauMode::Squared).unwrap();
            assert!(f >= last);
            last = f;
        }
        assert_eq!(last, 100.0);
    }

    #[test]
    fn cosine_anchors() {
        let a = sample_mesh_uniform(&unit_cube(), 500, 4).unwrap();
        assert_eq!(eval_cosine_similarity(&a, &a).unwrap(), 1.0);
        let flipped = OrientedPointCloud::new(a.points.clone(), a.normals.iter().map(|&n| vec3::scale(n, -1.0)).collect()).unwrap();
        assert_eq!(eval_cosine_similarity(&a, &flipped).unwrap(), 1.0);
        let rot = |n: vec3::Vec3| if n[0] != 0.0 { [0.0, n[0], 0.0] } else { [n[1] + n[2], 0.0, 0.0] };
        let ortho = OrientedPointCloud::new(a.points.clone(), a.normals.iter().map(|&n| rot(n)).collect()).unwrap();
        assert_eq!(eval_cosine_similarity(&a, &ortho).unwrap(), 0.0);
    }

    #[test]
    fn self_evaluation_is_exact() {
        let mesh = icosphere(2);
        let cfg = EvalConfig::default();
        let pred = sample_mesh_uniform(&mesh, cfg.n_gt_samples, 9).unwrap();
        let r = evaluate(&pred, &mesh, &cfg, 9).unwrap();
        assert_eq!(r.chamfer_sym, 0.0);
        assert_eq!(r.fscore_tau, 100.0);
        assert_eq!(r.fscore_2tau, 100.0);
        assert_eq!(r.cosine_similarity, 1.0);
    }

    #[test]
    fn normal_offset_raises_chamfer_by_delta_squared() {
        let mesh = icosphere(4);
        let cfg = EvalConfig::default();
        let gt = sample_mesh_uniform(&mesh, cfg.n_gt_samples, 10).unwrap();
        let delta = 0.004;
        let moved: Vec<_> = gt.points.iter().zip(&gt.normals).map(|(&p, &n)| vec3::add(p, vec3::scale(n, delta))).collect();
        let pred = OrientedPointCloud::new(moved, gt.normals.clone()).unwrap();
        let r = evaluate(&pred, &mesh, &cfg, 10).unwrap();
        let rise = r.chamfer_sym * cfg.report_scale;
        let want = delta * delta * cfg.report_scale;
        assert!((rise - want).abs() < 0.1 * want, "{rise} vs {want}");
        assert!(r.fscore_2tau >= r.fscore_tau);
    }

    #[test]
    fn metrics_are_rotation_invariant() {
        let mesh = icosphere(1);
        let cfg = EvalConfig { n_gt_samples: 800, ..Default::default() };
        let gt = sample_mesh_uniform(&mesh, 800, 11).unwrap();
        let pred = sample_mesh_uniform(&mesh, 300, 12).unwrap();
        let (s, c) = 1.1f64.sin_cos();
        let r = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let rot = |o: &OrientedPointCloud| {
            OrientedPointCloud::from_unnormalized(
                o.points.iter().map(|&p| vec3::rotate(&r, p)).collect(),
                o.normals.iter().map(|&n| vec3::rotate(&r, n)).collect(),
            )
            .unwrap()
        };
        let a = evaluate_against(&pred, &gt, &cfg).unwrap();
        let b = evaluate_against(&rot(&pred), &rot(&gt), &cfg).unwrap();
        assert!((a.chamfer_sym - b.chamfer_sym).abs() < 1e-9);
        assert!((a.cosine_similarity - b.cosine_similarity).abs() < 1e-9);
        assert!((a.fscore_tau - b.fscore_tau).abs() < 1e-9);
    }

    #[test]
    fn unsigned_cosine_matches_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = vec3::normalized(random(&mut rng, 1)[0], 1e-9).unwrap();
            let m = vec3::normalized(random(&mut rng, 1)[0], 1e-9).unwrap();
            assert!((unsigned_cosine(n, m) - vec3::dot(n, m).abs()).abs() < 1e-12);
        }
    }
}
