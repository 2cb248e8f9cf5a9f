use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::cpsa::{cpsa_correlation, movement_features, predict_movement, transform_movement};
use super::encoder::{encode_pointset, EncoderPlan};
use super::params::{ModelParams, ParamVars};
use crate::diff::{Checkpoint, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::geometry::{closest_point_indices, Vec3};

/// Normalised inputs of one case plus the geometry-only precomputation the
/// chosen variant needs.
#[derive(Debug, Clone)]
pub struct CaseInputs {
    pub facial: Vec<Vec3>,
    pub bony: Vec<Vec3>,
    pub bony_disp: Vec<Vec3>,
    facial_plan: Option<EncoderPlan>,
    bony_plan: Option<EncoderPlan>,
    closest: Option<Vec<usize>>,
}

impl CaseInputs {
    pub fn prepare(facial: Vec<Vec3>, bony: Vec<Vec3>, bony_disp: Vec<Vec3>, cfg: &ModelConfig) -> Result<Self> {
        if bony.len() != bony_disp.len() {
            return Err(invalid(format!(
                "{} bony points but {} bony movement vectors",
                bony.len(),
                bony_disp.len()
            )));
        }
        let n = cfg.n_points();
        if facial.len() != n || bony.len() != n {
            return Err(invalid(format!(
                "model expects {n} facial and bony points, got {} and {}",
                facial.len(),
                bony.len()
            )));
        }
        let v = cfg.variant;
        let facial_plan = v
            .uses_facial_encoder()
            .then(|| EncoderPlan::build(&facial, &cfg.encoder))
            .transpose()?;
        let bony_plan = v
            .uses_bony_encoder()
            .then(|| EncoderPlan::build(&bony, &cfg.encoder))
            .transpose()?;
        let closest = (v == Variant::Closest).then(|| closest_point_indices(&facial, &bony));
        Ok(Self {
            facial,
            bony,
            bony_disp,
            facial_plan,
            bony_plan,
            closest,
        })
    }

    pub fn n_facial(&self) -> usize {
        self.facial.len()
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    /// Facial movement `V_F`, N1 x 3, normalised units.
    pub disp: Var,
    /// Predicted post-facial points `P_F + V_F`.
    pub points: Var,
    /// Normalised correspondence matrix, when the variant forms one densely.
    pub correspondence: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn forward(&self, tape: &mut Tape, pv: &ParamVars, inputs: &CaseInputs) -> Result<Prediction> {
        let n1 = inputs.facial.len();
        let pf = tape.constant(Tensor::from_rows(&inputs.facial));
        let pb = tape.constant(Tensor::from_rows(&inputs.bony));
        let vb = tape.constant(Tensor::from_rows(&inputs.bony_disp));
        let fvb = movement_features(tape, pb, vb, pv)?;
        let enc = &self.config.encoder;
        let missing = || invalid("case inputs were prepared for a different variant");
        let (fvf, correspondence) = match self.config.variant {
            Variant::Acmt => {
                let fplan = inputs.facial_plan.as_ref().ok_or_else(missing)?;
                let bplan = inputs.bony_plan.as_ref().ok_or_else(missing)?;
                let ff = encode_pointset(tape, pv, "facial", fplan, enc)?;
                let fb = encode_pointset(tape, pv, "bony", bplan, enc)?;
                let (f, r) = cpsa_correlation(tape, ff, fb, pv)?;
                (transform_movement(tape, f, fvb)?, Some(r))
            }
            Variant::NoCorr => {
                let fplan = inputs.facial_plan.as_ref().ok_or_else(missing)?;
                let ff = encode_pointset(tape, pv, "facial", fplan, enc)?;
                let (w, b) = pv.layer("theta")?;
                let f = tape.linear(ff, w, b)?;
                let n2 = inputs.bony.len() as f64;
                let r = tape.affine(f, 1.0 / n2, 0.0);
                (transform_movement(tape, f, fvb)?, Some(r))
            }
            Variant::Closest => {
                // A one-hot row of R selects a single bony feature row.
                let nn = inputs.closest.as_ref().ok_or_else(missing)?;
                (tape.gather(fvb, nn)?, None)
            }
        };
        let disp = predict_movement(tape, fvf, pv)?;
        debug_assert_eq!(tape.value(disp).rows(), n1);
        let points = tape.scale_add(1.0, pf, 1.0, disp)?;
        Ok(Prediction {
            disp,
            points,
            correspondence,
        })
    }

    /// Predicted normalised facial movement for one case.
    pub fn predict(&self, inputs: &CaseInputs) -> Result<Vec<Vec3>> {
        let mut tape = Tape::new();
        let pv = self.params.register(&mut tape);
        let pred = self.forward(&mut tape, &pv, inputs)?;
        let out = tape.value(pred.disp);
        if !out.all_finite() {
            return Err(Error::NonFinite("predicted movement".into()));
        }
        Ok(out.to_rows3())
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let header = serde_json::to_string(&Header {
            model: self.config.clone(),
            extra,
        })
        .expect("model config serialises");
        Checkpoint {
            header,
            blocks: self.params.entries().map(|(n, t)| (n.clone(), t.clone())).collect(),
            adam: None,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let header: Header = serde_json::from_str(&ckpt.header)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let params = ModelParams::from_entries(ckpt.blocks.clone());
        params
            .check_against(&header.model)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            config: header.model,
            params,
        })
    }

    /// The free-form `extra` object stored in a checkpoint header.
    pub fn checkpoint_extra(ckpt: &Checkpoint) -> Result<serde_json::Value> {
        let header: Header = serde_json::from_str(&ckpt.header)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        Ok(header.extra)
    }
}
