use super::config::EncoderConfig;
use super::params::ParamVars;
use crate::diff::{Tape, Tensor, Var};
use crate::error::{invalid, Result};
use crate::geometry::neighbors::pad_groups;
use crate::geometry::{ball_query, farthest_point_sample, sub, IdwPlan, Vec3};

/// One set-abstraction stage: sampled centres and their padded groups.
#[derive(Debug, Clone)]
struct SaStage {
    /// `centres * group` indices into the previous level.
    group: Vec<usize>,
    group_size: usize,
    /// Neighbour coordinates relative to their centre, `(centres * group) x 3`.
    rel: Tensor,
}

/// Everything about an encoder pass that depends only on the input
/// coordinates: sampling, grouping and interpolation weights.
#[derive(Debug, Clone)]
pub struct EncoderPlan {
    n_points: usize,
    xyz: Tensor,
    sa: Vec<SaStage>,
    /// Interpolation from level `4 - f` to level `3 - f`.
    fp: Vec<IdwPlan>,
}

impl EncoderPlan {
    /// Build the plan for normalised `points`; FPS at every level starts at index 0.
    pub fn build(points: &[Vec3], cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        if points.len() != cfg.n_points {
            return Err(invalid(format!(
                "encoder configured for {} points, got {}",
                cfg.n_points,
                points.len()
            )));
        }
        let mut levels: Vec<Vec<Vec3>> = vec![points.to_vec()];
        let mut sa = Vec::with_capacity(4);
        for s in 0..4 {
            let prev = &levels[s];
            let centres_idx = farthest_point_sample(prev, cfg.sa_points[s], 0)?;
            let centres: Vec<Vec3> = centres_idx.iter().map(|&i| prev[i]).collect();
            let k = cfg.sa_max_neighbors[s];
            let groups = ball_query(&centres, prev, cfg.sa_radius[s], k)?;
            let group = pad_groups(&groups, k);
            let rel: Vec<f64> = group
                .iter()
                .enumerate()
                .flat_map(|(e, &j)| sub(prev[j], centres[e / k]))
                .collect();
            sa.push(SaStage {
                rel: Tensor::matrix(group.len(), 3, rel),
                group,
                group_size: k,
            });
            levels.push(centres);
        }
        let fp = (0..4)
            .map(|f| IdwPlan::build(&levels[4 - f], &levels[3 - f], cfg.idw_k))
            .collect::<Result<_>>()?;
        Ok(Self {
            n_points: points.len(),
            xyz: Tensor::from_rows(points),
            sa,
            fp,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// Point-wise features (`N x out_width`) for the encoder whose weights are
/// stored under `prefix`.
pub fn encode_pointset(tape: &mut Tape, params: &ParamVars, prefix: &str, plan: &EncoderPlan, cfg: &EncoderConfig) -> Result<Var> {
    let xyz = tape.constant(plan.xyz.clone());
    let mut feats = xyz;
    let mut skips = vec![xyz];
    for (s, stage) in plan.sa.iter().enumerate() {
        let rel = tape.constant(stage.rel.clone());
        let grouped = tape.gather(feats, &stage.group)?;
        let mut x = tape.concat(&[rel, grouped])?;
        for l in 0..cfg.sa_mlp[s].len() {
            let (w, b) = params.layer(&format!("{prefix}.sa{s}.l{l}"))?;
            let h = tape.linear(x, w, b)?;
            x = tape.relu(h);
        }
        feats = tape.max_reduce(x, stage.group_size)?;
        skips.push(feats);
    }
    for (f, idw) in plan.fp.iter().enumerate() {
        let up = tape.weighted_gather(feats, &idw.index, &idw.weight, idw.k)?;
        let x = tape.concat(&[up, skips[3 - f]])?;
        let (w, b) = params.layer(&format!("{prefix}.fp{f}"))?;
        let h = tape.linear(x, w, b)?;
        feats = tape.relu(h);
    }
    Ok(feats)
}
