//! Training loop, simulation, evaluation and the three-variant ablation.

pub mod ablation;
pub mod metrics;
pub mod run;
mod simulate;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub use ablation::{run_ablation_suite, AblationConfig, AblationTable, OrderingCheck};
pub use metrics::{evaluate, CaseMetrics, MetricsReport};
pub use simulate::{simulate, Simulation};

use crate::diff::{adam_step, AdamState, Checkpoint, Tape, Tensor};
use crate::error::{invalid, Error, Result};
use crate::geometry::{normalize_pair, DisplacementField, NormTransform, PointSet, Units, Vec3};
use crate::losses::{record_hybrid, LossPlan, LossTargets, LossTerms, LossWeights};
use crate::network::{CaseInputs, Model, ModelConfig, Preset, Variant};
use crate::synth::{load_case_samples, CaseSamples, Manifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// Factor applied from epoch `decay_epoch` on. Runs shorter than
    /// that never decay.
    pub lr_decay: f64,
    pub decay_epoch: usize,
    pub weights: LossWeights,
    pub preset: Preset,
    pub variant: Variant,
    /// Points per surface fed to the model.
    pub n_points: usize,
    pub seed: u64,
    /// Held-out fold.
    pub fold: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 2,
            lr: 1e-3,
            lr_decay: 0.1,
            decay_epoch: 300,
            weights: LossWeights::default(),
            preset: Preset::Full,
            variant: Variant::Acmt,
            n_points: 4096,
            seed: 0,
            fold: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale experiment: toy widths, 512 points, 100 epochs.
    pub fn desk() -> Self {
        Self {
            epochs: 100,
            preset: Preset::Toy,
            n_points: 512,
            ..Self::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::preset(self.preset, self.variant, self.n_points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr_decay > 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rates must be positive"));
        }
        self.weights.validate()?;
        self.model_config().validate()
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }
}

/// One case in the model's normalised frame.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub name: String,
    pub inputs: CaseInputs,
    pub targets: LossTargets,
    pub norm: NormTransform,
}

/// Normalised model inputs for the first `cfg.n_points()` samples, plus the
/// frame that maps them back to millimetres.
pub fn normalize_samples(samples: &CaseSamples, cfg: &ModelConfig) -> Result<(CaseInputs, Vec<Vec3>, NormTransform)> {
    let s = samples.prefix(cfg.n_points())?;
    let post: Vec<Vec3> = s.bone.iter().zip(&s.bone_disp).map(|(p, d)| crate::geometry::add(*p, *d)).collect();
    let (facial, bony, _, norm) = normalize_pair(
        &PointSet::new(s.skin.clone(), Units::Physical)?,
        &PointSet::new(s.bone.clone(), Units::Physical)?,
        &PointSet::new(post, Units::Physical)?,
    )?;
    let bony_disp = norm.apply_displacement(&DisplacementField::new(s.bone_disp.clone(), Units::Physical)?)?;
    let skin_disp = norm.apply_displacement(&DisplacementField::new(s.skin_disp.clone(), Units::Physical)?)?;
    let inputs = CaseInputs::prepare(facial.into_coords(), bony.into_coords(), bony_disp.into_vectors(), cfg)?;
    Ok((inputs, skin_disp.into_vectors(), norm))
}

pub fn prepare_case(name: &str, samples: &CaseSamples, cfg: &ModelConfig) -> Result<PreparedCase> {
    let (inputs, target_disp, norm) = normalize_samples(samples, cfg)?;
    let targets = LossTargets::with_defaults(&inputs.facial, &target_disp)?;
    Ok(PreparedCase {
        name: name.to_string(),
        inputs,
        targets,
        norm,
    })
}

/// Load and prepare the named cases of a dataset.
pub fn load_cases(root: &Path, manifest: &Manifest, names: &[String], cfg: &ModelConfig) -> Result<Vec<PreparedCase>> {
    let loaded = crate::par_map(names, |name| {
        let samples = load_case_samples(&manifest.case_dir(root, name))?;
        prepare_case(name, &samples, cfg)
    });
    loaded.into_iter().collect()
}

/// Hybrid loss and parameter gradients of one case.
pub fn case_gradients(model: &Model, case: &PreparedCase, weights: LossWeights) -> Result<(LossTerms<f64>, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let pv = model.params.register(&mut tape);
    let out = model.forward(&mut tape, &pv, &case.inputs)?;
    let pred = tape.value(out.points).to_rows3();
    let plan = LossPlan::build(&pred, &case.targets)?;
    let terms = record_hybrid(&mut tape, out.points, out.disp, &case.targets, &plan, weights)?;
    let values = terms.values(&tape);
    let mut grads = tape.backward(terms.total)?;
    let g = pv
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((values, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub shape: f64,
    pub density: f64,
    pub lpt: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    pub curve: Vec<EpochLoss>,
}

impl TrainOutcome {
    pub fn checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        let mut ckpt = self.model.to_checkpoint(serde_json::json!({
            "train": cfg,
            "epochs_completed": self.curve.len(),
        }));
        ckpt.adam = Some(self.adam.clone());
        ckpt
    }
}

/// Optimise the hybrid loss over `cases`. `on_epoch` sees every finished epoch.
pub fn train(cfg: &TrainConfig, cases: &[PreparedCase], mut on_epoch: impl FnMut(&EpochLoss)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cases.is_empty() && cfg.epochs > 0 {
        return Err(invalid("no training cases"));
    }
    let mut model = Model::init(cfg.model_config(), cfg.seed)?;
    let mut adam = AdamState::new(model.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut sums = [0.0; 4];
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |reason: String| Error::Divergence { epoch, batch, reason };
            let results = crate::par_map(chunk, |&i| case_gradients(&model, &cases[i], cfg.weights));
            let mut total: Option<Vec<Tensor>> = None;
            for r in results {
                let (terms, grads) = r?;
                if !terms.total.is_finite() {
                    return Err(diverged(format!("loss is {}", terms.total)));
                }
                for (s, v) in sums.iter_mut().zip([terms.total, terms.shape, terms.density, terms.lpt]) {
                    *s += v;
                }
                total = Some(match total {
                    None => grads,
                    Some(mut acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                        acc
                    }
                });
            }
            let mut grads = total.expect("chunks are never empty");
            let inv = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            adam_step(model.params.tensors_mut(), &grads, &mut adam, lr).map_err(|e| diverged(e.to_string()))?;
        }
        let n = cases.len() as f64;
        let row = EpochLoss {
            epoch,
            lr,
            total: sums[0] / n,
            shape: sums[1] / n,
            density: sums[2] / n,
            lpt: sums[3] / n,
        };
        on_epoch(&row);
        curve.push(row);
    }
    Ok(TrainOutcome { model, adam, curve })
}

/// Train on every fold except `cfg.fold`.
pub fn train_on_dataset(cfg: &TrainConfig, root: &Path, on_epoch: impl FnMut(&EpochLoss)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = Manifest::load(root)?;
    let (train_names, _) = manifest.split(cfg.fold)?;
    let cases = load_cases(root, &manifest, &train_names, &cfg.model_config())?;
    train(cfg, &cases, on_epoch)
}
