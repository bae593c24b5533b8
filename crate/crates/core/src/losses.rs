//! Training objectives recorded on a [`Tape`].

use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{vec3, NearestNeighborIndex, OrientedPointCloud, PointCloud};
use crate::model::{MappingOutput, TangentPlane, DEGENERATE_DIRECTION};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_cd: f64,
    pub lambda_cos: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cd: 1.0,
            lambda_cos: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_cd: f64, lambda_cos: f64) -> Result<Self> {
        for (name, v) in [("lambda_cd", lambda_cd), ("lambda_cos", lambda_cos)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { lambda_cd, lambda_cos })
    }

    /// `λ_CD·chamfer + λ_cos·cosine`, evaluated exactly as on the tape.
    pub fn combine(&self, chamfer: f64, cosine: f64) -> f64 {
        self.lambda_cd * chamfer + self.lambda_cos * cosine
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LossReport {
    pub chamfer: f64,
    pub cosine: f64,
    pub total: f64,
    /// Predicted planes left out of the cosine term.
    pub degenerate_count: usize,
}

/// Nearest neighbour in `index` for every query, in query order.
pub(crate) fn match_nearest(index: &NearestNeighborIndex, queries: &[vec3::Vec3]) -> Vec<(usize, f64)> {
    queries.par_iter().map(|&q| index.nearest(q)).collect()
}

fn points_of(tape: &Tape, v: Var, what: &str) -> Result<Vec<vec3::Vec3>> {
    tape.value(v)
        .rows3()
        .map_err(|_| Error::contract(format!("{what} must be an N×3 matrix")))
}

/// Mean nearest-neighbour norm distance from each row of `x` to `y`.
fn directed_norm_chamfer(tape: &mut Tape, x: Var, y: Var, xs: &[vec3::Vec3], ys: &[vec3::Vec3]) -> Result<Var> {
    let index = NearestNeighborIndex::new(ys)?;
    let matched: Vec<usize> = match_nearest(&index, xs).into_iter().map(|(i, _)| i).collect();
    let y_near = tape.gather_rows(y, &matched)?;
    let diff = tape.sub(x, y_near)?;
    let sq = tape.mul(diff, diff)?;
    let d2 = tape.sum_rows(sq)?;
    let d = tape.sqrt(d2)?;
    ascending_mean(tape, d)
}

/// Mean of a vector node, summed in ascending order of value so the result
/// does not depend on the order of the points.
pub(crate) fn ascending_mean(tape: &mut Tape, d: Var) -> Result<Var> {
    let vals = tape.value(d).data();
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let col = tape.reshape(d, vec![n, 1])?;
    let sorted = tape.gather_rows(col, &order)?;
    tape.mean(sorted)
}

/// Symmetric Chamfer loss with norm (not squared) distances:
/// `mean_x min_y |x-y| + mean_y min_x |x-y|`.
///
/// Matching is recomputed on each call and held fixed for the gradient.
pub fn chamfer_loss(tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let xs = points_of(tape, x, "chamfer operand")?;
    let ys = points_of(tape, y, "chamfer operand")?;
    let a = directed_norm_chamfer(tape, x, y, &xs, &ys)?;
    let b = directed_norm_chamfer(tape, y, x, &ys, &xs)?;
    tape.add(a, b)
}

/// One-way cosine loss `1 - mean_x |n_x · v̂_θ(x)|` from ground truth to
/// the nearest non-degenerate prediction (by squared distance).
///
/// Returns the loss node and the number of degenerate predictions skipped.
pub fn cosine_surface_loss(
    tape: &mut Tape,
    gt: &OrientedPointCloud,
    positions: Var,
    directions: Var,
) -> Result<(Var, usize)> {
    if gt.is_empty() {
        return Err(Error::domain("ground-truth cloud is empty"));
    }
    let ps = points_of(tape, positions, "predicted positions")?;
    let vs = points_of(tape, directions, "predicted directions")?;
    if ps.len() != vs.len() {
        return Err(Error::Shape {
            op: "cosine_surface_loss",
            lhs: vec![ps.len(), 3],
            rhs: vec![vs.len(), 3],
        });
    }
    let live: Vec<usize> = (0..vs.len())
        .filter(|&i| vec3::norm(vs[i]) >= DEGENERATE_DIRECTION)
        .collect();
    if live.is_empty() {
        return Err(Error::domain("every predicted normal is degenerate"));
    }
    let live_points: Vec<_> = live.iter().map(|&i| ps[i]).collect();
    let index = NearestNeighborIndex::new(&live_points)?;
    let matched: Vec<usize> = match_nearest(&index, &gt.points)
        .into_iter()
        .map(|(i, _)| live[i])
        .collect();
    let v = tape.gather_rows(directions, &matched)?;
    let n = tape.constant(Tensor::from_points(&gt.normals)?);
    let vn = tape.mul(v, n)?;
    let dot = tape.sum_rows(vn)?;
    let vv = tape.mul(v, v)?;
    let len2 = tape.sum_rows(vv)?;
    let len = tape.sqrt(len2)?;
    let cos = tape.div(dot, len)?;
    let cos = tape.abs(cos)?;
    let mean = tape.mean(cos)?;
    let neg = tape.scale(mean, -1.0)?;
    Ok((tape.add_scalar(neg, 1.0)?, vs.len() - live.len()))
}

/// `λ_CD·chamfer(p, gt) + λ_cos·cosine(gt, v)` over the mapping outputs.
pub fn total_loss(
    tape: &mut Tape,
    gt: &OrientedPointCloud,
    pred: &MappingOutput,
    weights: LossWeights,
) -> Result<(Var, LossReport)> {
    let y = tape.constant(Tensor::from_points(&gt.points)?);
    let chamfer = chamfer_loss(tape, pred.positions, y)?;
    let (cosine, degenerate_count) = cosine_surface_loss(tape, gt, pred.positions, pred.directions)?;
    let a = tape.scale(chamfer, weights.lambda_cd)?;
    let b = tape.scale(cosine, weights.lambda_cos)?;
    let total = tape.add(a, b)?;
    let report = LossReport {
        chamfer: tape.value(chamfer).item()?,
        cosine: tape.value(cosine).item()?,
        total: tape.value(total).item()?,
        degenerate_count,
    };
    Ok((total, report))
}

/// Value of [`chamfer_loss`] for two plain clouds.
pub fn chamfer_loss_value(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("chamfer loss of an empty point set"));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::from_points(&x.points)?);
    let yv = tape.constant(Tensor::from_points(&y.points)?);
    let l = chamfer_loss(&mut tape, xv, yv)?;
    tape.value(l).item()
}

/// Value of [`cosine_surface_loss`] for plain tangent planes.
pub fn cosine_loss_value(gt: &OrientedPointCloud, pred: &[TangentPlane]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::domain("no predicted planes"));
    }
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_points(&pred.iter().map(|t| t.p).collect::<Vec<_>>())?);
    let v = tape.constant(Tensor::from_points(&pred.iter().map(|t| t.v).collect::<Vec<_>>())?);
    let (l, _) = cosine_surface_loss(&mut tape, gt, p, v)?;
    tape.value(l).item()
}

/// Value of [`total_loss`] for plain tangent planes.
pub fn total_loss_value(gt: &OrientedPointCloud, pred: &[TangentPlane], weights: LossWeights) -> Result<LossReport> {
    if pred.is_empty() {
        return Err(Error::domain("no predicted planes"));
    }
    let mut tape = Tape::new();
    let rows: Vec<f64> = pred.iter().flat_map(|t| t.p.into_iter().chain(t.v)).collect();
    let out = tape.constant(Tensor::new(vec![pred.len(), 6], rows)?);
    let positions = tape.columns(out, 0, 3)?;
    let directions = tape.columns(out, 3, 3)?;
    let pred = MappingOutput {
        out,
        positions,
        directions,
    };
    Ok(total_loss(&mut tape, gt, &pred, weights)?.1)
}
