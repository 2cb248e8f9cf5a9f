//! Hybrid training objective: `shape + alpha * density + beta * lpt`.
//!
//! * shape: symmetric Chamfer distance with squared nearest-neighbour distances.
//! * density: mean |local spacing of a predicted point - local spacing at its
//!   nearest target point|, spacing being the mean distance to the k nearest
//!   neighbours within the own set.
//! * lpt: mean squared discrepancy of relative displacements between every
//!   point and its k nearest neighbours on the pre-operative point set.
//!
//! Nearest-neighbour assignments are frozen in a [`LossPlan`]; gradients
//! flow through distances only.

use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::error::{invalid, Result};
use crate::geometry::{closest_point_indices, dist2, knn, sub, Vec3};

pub const DENSITY_K: usize = 8;
pub const LPT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.3, beta: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.beta >= 0.0 {
            Ok(())
        } else {
            Err(invalid("loss weights must be non-negative"))
        }
    }
}

/// Mean distance from every point to its `k` nearest neighbours in the same set.
pub fn local_spacing(points: &[Vec3], k: usize) -> Result<Vec<f64>> {
    let nn = knn(points, points, k, true)?;
    Ok(nn
        .chunks(k)
        .zip(points)
        .map(|(row, &p)| row.iter().map(|&j| dist2(points[j], p).sqrt()).sum::<f64>() / k as f64)
        .collect())
}

/// Per-case constants of the objective.
#[derive(Debug, Clone)]
pub struct LossTargets {
    pub target: Vec<Vec3>,
    pub target_disp: Vec<Vec3>,
    target_spacing: Vec<f64>,
    lpt_neighbors: Vec<usize>,
    pub density_k: usize,
    pub lpt_k: usize,
}

impl LossTargets {
    /// `pre` are the pre-operative facial points; `target_disp` the
    /// ground-truth movement, so the target shape is `pre + target_disp`.
    pub fn new(pre: &[Vec3], target_disp: &[Vec3], density_k: usize, lpt_k: usize) -> Result<Self> {
        if pre.len() != target_disp.len() {
            return Err(invalid("pre points and target displacements must align"));
        }
        let target: Vec<Vec3> = pre
            .iter()
            .zip(target_disp)
            .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
            .collect();
        Ok(Self {
            target_spacing: local_spacing(&target, density_k)?,
            lpt_neighbors: knn(pre, pre, lpt_k, true)?,
            target,
            target_disp: target_disp.to_vec(),
            density_k,
            lpt_k,
        })
    }

    pub fn with_defaults(pre: &[Vec3], target_disp: &[Vec3]) -> Result<Self> {
        Self::new(pre, target_disp, DENSITY_K, LPT_K)
    }
}

/// Nearest-neighbour assignments taken from the current prediction.
#[derive(Debug, Clone)]
pub struct LossPlan {
    pred_to_target: Vec<usize>,
    target_to_pred: Vec<usize>,
    pred_knn: Vec<usize>,
}

impl LossPlan {
    pub fn build(pred: &[Vec3], targets: &LossTargets) -> Result<Self> {
        if pred.is_empty() || targets.target.is_empty() {
            return Err(invalid("losses need non-empty point sets"));
        }
        Ok(Self {
            pred_to_target: closest_point_indices(pred, &targets.target),
            target_to_pred: closest_point_indices(&targets.target, pred),
            pred_knn: knn(pred, pred, targets.density_k, true)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms<T> {
    pub shape: T,
    pub density: T,
    pub lpt: T,
    pub total: T,
}

impl LossTerms<Var> {
    pub fn values(&self, tape: &Tape) -> LossTerms<f64> {
        let v = |x: Var| tape.value(x).data()[0];
        LossTerms {
            shape: v(self.shape),
            density: v(self.density),
            lpt: v(self.lpt),
            total: v(self.total),
        }
    }
}

fn rows_tensor(rows: impl Iterator<Item = Vec3>) -> Tensor {
    let rows: Vec<Vec3> = rows.collect();
    Tensor::from_rows(&rows)
}

pub fn record_shape(tape: &mut Tape, pred: Var, targets: &LossTargets, plan: &LossPlan) -> Result<Var> {
    let n = tape.value(pred).rows() as f64;
    let m = targets.target.len() as f64;
    let matched = tape.constant(rows_tensor(plan.pred_to_target.iter().map(|&j| targets.target[j])));
    let d1 = tape.scale_add(1.0, pred, -1.0, matched)?;
    let s1 = tape.square(d1);
    let s1 = tape.sum(s1);
    let back = tape.gather(pred, &plan.target_to_pred)?;
    let tgt = tape.constant(Tensor::from_rows(&targets.target));
    let d2 = tape.scale_add(1.0, back, -1.0, tgt)?;
    let s2 = tape.square(d2);
    let s2 = tape.sum(s2);
    let t1 = tape.affine(s1, 1.0 / n, 0.0);
    tape.scale_add(1.0, t1, 1.0 / m, s2)
}

pub fn record_density(tape: &mut Tape, pred: Var, targets: &LossTargets, plan: &LossPlan) -> Result<Var> {
    let n = tape.value(pred).rows();
    let k = targets.density_k;
    let centre_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let centres = tape.gather(pred, &centre_idx)?;
    let nbrs = tape.gather(pred, &plan.pred_knn)?;
    let diff = tape.scale_add(1.0, centres, -1.0, nbrs)?;
    let dist = tape.row_norm(diff)?;
    let all: Vec<usize> = (0..n * k).collect();
    let spacing = tape.weighted_gather(dist, &all, &vec![1.0 / k as f64; n * k], k)?;
    let reference: Vec<f64> = plan.pred_to_target.iter().map(|&j| targets.target_spacing[j]).collect();
    let reference = tape.constant(Tensor::matrix(n, 1, reference));
    let gap = tape.scale_add(1.0, spacing, -1.0, reference)?;
    let gap = tape.abs(gap);
    Ok(tape.mean(gap))
}

pub fn record_lpt(tape: &mut Tape, pred_disp: Var, targets: &LossTargets) -> Result<Var> {
    let n = tape.value(pred_disp).rows();
    if n != targets.target_disp.len() {
        return Err(invalid("predicted and target displacements must align"));
    }
    let k = targets.lpt_k;
    let centre_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let rel_target = rows_tensor(
        centre_idx
            .iter()
            .zip(&targets.lpt_neighbors)
            .map(|(&i, &j)| sub(targets.target_disp[i], targets.target_disp[j])),
    );
    let vi = tape.gather(pred_disp, &centre_idx)?;
    let vj = tape.gather(pred_disp, &targets.lpt_neighbors)?;
    let rel_pred = tape.scale_add(1.0, vi, -1.0, vj)?;
    let rel_target = tape.constant(rel_target);
    let d = tape.scale_add(1.0, rel_target, -1.0, rel_pred)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    Ok(tape.affine(s, 1.0 / (n * k) as f64, 0.0))
}

/// Record all three terms and their weighted sum.
pub fn record_hybrid(
    tape: &mut Tape,
    pred_points: Var,
    pred_disp: Var,
    targets: &LossTargets,
    plan: &LossPlan,
    weights: LossWeights,
) -> Result<LossTerms<Var>> {
    let shape = record_shape(tape, pred_points, targets, plan)?;
    let density = record_density(tape, pred_points, targets, plan)?;
    let lpt = record_lpt(tape, pred_disp, targets)?;
    let partial = tape.scale_add(1.0, shape, weights.alpha, density)?;
    let total = tape.scale_add(1.0, partial, weights.beta, lpt)?;
    Ok(LossTerms {
        shape,
        density,
        lpt,
        total,
    })
}

fn nonempty(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        Err(invalid("losses need non-empty point sets"))
    } else {
        Ok(())
    }
}

/// Symmetric Chamfer distance (squared) between two point sets.
pub fn shape_loss(pred: &[Vec3], target: &[Vec3]) -> Result<f64> {
    nonempty(pred, target)?;
    let targets = LossTargets {
        target: target.to_vec(),
        target_disp: vec![],
        target_spacing: vec![],
        lpt_neighbors: vec![],
        density_k: 0,
        lpt_k: 0,
    };
    let plan = LossPlan {
        pred_to_target: closest_point_indices(pred, target),
        target_to_pred: closest_point_indices(target, pred),
        pred_knn: vec![],
    };
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_rows(pred));
    let l = record_shape(&mut tape, p, &targets, &plan)?;
    tape.value(l).item()
}

pub fn density_loss(pred: &[Vec3], target: &[Vec3], k: usize) -> Result<f64> {
    nonempty(pred, target)?;
    if k == 0 || k >= pred.len() || k >= target.len() {
        return Err(invalid(format!("density k = {k} must be below both set sizes")));
    }
    let targets = LossTargets {
        target_spacing: local_spacing(target, k)?,
        target: target.to_vec(),
        target_disp: vec![],
        lpt_neighbors: vec![],
        density_k: k,
        lpt_k: 0,
    };
    let plan = LossPlan {
        pred_to_target: closest_point_indices(pred, target),
        target_to_pred: vec![],
        pred_knn: knn(pred, pred, k, true)?,
    };
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_rows(pred));
    let l = record_density(&mut tape, p, &targets, &plan)?;
    tape.value(l).item()
}

/// `neighbors` holds `k` indices per point (row-major), built on the pre-facial points.
pub fn lpt_loss(pred_disp: &[Vec3], target_disp: &[Vec3], neighbors: &[usize], k: usize) -> Result<f64> {
    let n = pred_disp.len();
    if n == 0 || n != target_disp.len() || k == 0 || neighbors.len() != n * k || neighbors.iter().any(|&j| j >= n) {
        return Err(invalid("lpt loss needs aligned fields and k in-range neighbours per point"));
    }
    let targets = LossTargets {
        target: vec![],
        target_disp: target_disp.to_vec(),
        target_spacing: vec![],
        lpt_neighbors: neighbors.to_vec(),
        density_k: 0,
        lpt_k: k,
    };
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_rows(pred_disp));
    let l = record_lpt(&mut tape, p, &targets)?;
    tape.value(l).item()
}

/// Hybrid objective for a prediction `pre + pred_disp` against `pre + target_disp`.
pub fn hybrid_loss(pre: &[Vec3], pred_disp: &[Vec3], target_disp: &[Vec3], weights: LossWeights) -> Result<LossTerms<f64>> {
    weights.validate()?;
    if pre.len() != pred_disp.len() {
        return Err(invalid("pre points and predicted displacements must align"));
    }
    let targets = LossTargets::with_defaults(pre, target_disp)?;
    let pred: Vec<Vec3> = pre
        .iter()
        .zip(pred_disp)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
        .collect();
    let plan = LossPlan::build(&pred, &targets)?;
    let mut tape = Tape::new();
    let pp = tape.constant(Tensor::from_rows(&pred));
    let pd = tape.constant(Tensor::from_rows(pred_disp));
    let terms = record_hybrid(&mut tape, pp, pd, &targets, &plan, weights)?;
    Ok(terms.values(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn zero_at_identity() {
        let p = cloud(1, 20);
        assert_eq!(shape_loss(&p, &p).unwrap(), 0.0);
        assert_eq!(density_loss(&p, &p, 8).unwrap(), 0.0);
        let d = cloud(2, 20);
        let nb = knn(&p, &p, 8, true).unwrap();
        assert_eq!(lpt_loss(&d, &d, &nb, 8).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_of_two_points() {
        let d = 0.37;
        let l = shape_loss(&[[0.0; 3]], &[[d, 0.0, 0.0]]).unwrap();
        assert!((l - 2.0 * d * d).abs() < 1e-15);
    }

    #[test]
    fn lpt_ignores_global_translation() {
        let p = cloud(3, 16);
        let d = cloud(4, 16);
        let shifted: Vec<Vec3> = d.iter().map(|v| [v[0] + 0.3, v[1] - 0.2, v[2] + 1.0]).collect();
        let nb = knn(&p, &p, 8, true).unwrap();
        assert!(lpt_loss(&shifted, &d, &nb, 8).unwrap() < 1e-28);
    }

    #[test]
    fn hybrid_is_weighted_sum() {
        let pre = cloud(5, 24);
        let pd = cloud(6, 24).iter().map(|v| [v[0] * 0.1, v[1] * 0.1, v[2] * 0.1]).collect::<Vec<_>>();
        let td = cloud(7, 24).iter().map(|v| [v[0] * 0.1, v[1] * 0.1, v[2] * 0.1]).collect::<Vec<_>>();
        let t = hybrid_loss(&pre, &pd, &td, LossWeights::default()).unwrap();
        assert!((t.total - (t.shape + 0.3 * t.density + 5.0 * t.lpt)).abs() < 1e-12);
        let z = hybrid_loss(&pre, &td, &td, LossWeights::default()).unwrap();
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn errors() {
        assert!(shape_loss(&[], &[[0.0; 3]]).is_err());
        assert!(density_loss(&cloud(1, 5), &cloud(2, 9), 5).is_err());
        assert!(LossWeights { alpha: -1.0, beta: 0.0 }.validate().is_err());
    }
}
