//! End-to-end finite-difference check of the hybrid loss with respect to
//! every parameter block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Preset, Variant};
use super::model::{CaseInputs, Model};
use crate::diff::gradcheck::{check_gradient_smooth, CheckResult, Probe, END_TO_END_TOL, FD_STEP};
use crate::diff::{Tape, Tensor};
use crate::error::Result;
use crate::geometry::{add, normalized, scale, Vec3};
use crate::losses::{record_hybrid, LossPlan, LossTargets, LossWeights};

fn sphere_points(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            let v = normalized([0; 3].map(|_| rng.gen_range(-1.0..1.0)));
            scale(v, radius * rng.gen_range(0.9..1.1))
        })
        .collect()
}

/// A random normalised case: facial points on a shell around a smaller bony
/// shell, small bony and target movements.
pub fn random_case(cfg: &ModelConfig, seed: u64) -> Result<(CaseInputs, LossTargets)> {
    let n = cfg.n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let facial = sphere_points(&mut rng, n, 0.9);
    let bony = sphere_points(&mut rng, n, 0.5);
    let shift = [0; 3].map(|_| rng.gen_range(-0.05..0.05));
    let bony_disp: Vec<Vec3> = bony
        .iter()
        .map(|p| add(shift, scale(*p, rng.gen_range(0.0..0.05))))
        .collect();
    let target_disp: Vec<Vec3> = (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-0.03..0.03))).collect();
    let targets = LossTargets::with_defaults(&facial, &target_disp)?;
    let inputs = CaseInputs::prepare(facial, bony, bony_disp, cfg)?;
    Ok((inputs, targets))
}

/// Relative error of the hybrid-loss gradient for each parameter block of a
/// toy model with `n_points` points. Nearest-neighbour assignments are frozen
/// at the initial prediction. `per_block` caps the probed entries per block.
pub fn end_to_end_gradcheck(n_points: usize, variant: Variant, seed: u64, per_block: usize) -> Result<Vec<CheckResult>> {
    let cfg = ModelConfig::preset(Preset::Toy, variant, n_points);
    let model = Model::init(cfg.clone(), seed)?;
    let (inputs, targets) = random_case(&cfg, seed ^ 0x5eed)?;
    let pred = model.predict(&inputs)?;
    let pred_pts: Vec<Vec3> = inputs.facial.iter().zip(&pred).map(|(p, d)| add(*p, *d)).collect();
    let plan = LossPlan::build(&pred_pts, &targets)?;
    let weights = LossWeights::default();

    let loss = |tape: &mut Tape, vars: &[crate::diff::Var]| {
        let pv = model.params.bind(vars.to_vec())?;
        let out = model.forward(tape, &pv, &inputs)?;
        Ok(record_hybrid(tape, out.points, out.disp, &targets, &plan, weights)?.total)
    };

    let mut results = Vec::new();
    for (b, name) in model.params.names().iter().enumerate() {
        let inputs: Vec<Tensor> = model
            .params
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                t.requires_grad = i == b;
                t
            })
            .collect();
        let report = check_gradient_smooth(&inputs, loss, FD_STEP, Probe::Sample(per_block, seed + b as u64))?;
        results.push(CheckResult {
            name: format!("{}:{name}", variant.name()),
            max_rel_err: report.max_rel_err,
            tol: END_TO_END_TOL,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_gradients_match_finite_differences() {
        for v in Variant::ALL {
            for r in end_to_end_gradcheck(32, v, 3, 6).unwrap() {
                assert!(r.passed(), "{} rel err {:e}", r.name, r.max_rel_err);
            }
        }
    }
}
