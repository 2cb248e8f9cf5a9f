use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderConfig, ModelConfig, Variant};
use crate::diff::{Tape, Tensor, Var};
use crate::error::{invalid, Result};

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// (name, fan_in, fan_out) of every linear layer.
fn layer_specs(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let mut layers = Vec::new();
    let encoder = |prefix: &str, e: &EncoderConfig, layers: &mut Vec<(String, usize, usize)>| {
        // level 0 features are the xyz coordinates themselves
        let mut level_width = vec![3];
        let mut width = 3;
        for (s, mlp) in e.sa_mlp.iter().enumerate() {
            let mut cin = width + 3;
            for (l, &cout) in mlp.iter().enumerate() {
                layers.push((format!("{prefix}.sa{s}.l{l}"), cin, cout));
                cin = cout;
            }
            width = cin;
            level_width.push(width);
        }
        for (f, &cout) in e.fp_widths.iter().enumerate() {
            let skip = level_width[3 - f];
            layers.push((format!("{prefix}.fp{f}"), width + skip, cout));
            width = cout;
        }
    };
    let v = cfg.variant;
    if v.uses_facial_encoder() {
        encoder("facial", &cfg.encoder, &mut layers);
    }
    if v.uses_bony_encoder() {
        encoder("bony", &cfg.encoder, &mut layers);
    }
    let feat = cfg.encoder.out_width();
    match v {
        Variant::Acmt => {
            layers.push(("theta".into(), feat, cfg.cpsa.embed_dim));
            layers.push(("phi".into(), feat, cfg.cpsa.embed_dim));
        }
        Variant::NoCorr => layers.push(("theta".into(), feat, cfg.n_points())),
        Variant::Closest => {}
    }
    layers.push(("g".into(), 6, cfg.cpsa.movement_dim));
    layers.push(("head".into(), cfg.cpsa.movement_dim, 3));
    layers
}

impl ModelParams {
    /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for (name, fan_in, fan_out) in layer_specs(cfg) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            entries.push((format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w)));
            entries.push((format!("{name}.b"), Tensor::new(vec![fan_out], b)?));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        let (names, tensors): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, tensors, index }
    }

    /// Check names and shapes against what `cfg` expects.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Self::init(cfg, 0)?;
        if expected.names != self.names {
            return Err(invalid("parameter names do not match the model configuration"));
        }
        for (n, (a, b)) in self.names.iter().zip(expected.tensors.iter().zip(&self.tensors)) {
            if a.shape() != b.shape() {
                return Err(invalid(format!(
                    "parameter {n}: shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.names.iter().zip(&self.tensors)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Record every tensor on `tape` as a gradient-tracked leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        ParamVars {
            vars,
            index: self.index.clone(),
        }
    }
}

impl ModelParams {
    /// Handles for leaves already recorded in the order of [`Self::tensors`].
    pub fn bind(&self, vars: Vec<Var>) -> Result<ParamVars> {
        if vars.len() != self.tensors.len() {
            return Err(invalid(format!("{} handles for {} parameters", vars.len(), self.tensors.len())));
        }
        Ok(ParamVars {
            vars,
            index: self.index.clone(),
        })
    }
}

/// Tape handles for a [`ModelParams`], looked up by name.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| invalid(format!("missing parameter {name}")))
    }

    /// Weight and bias of the linear layer `name`.
    pub fn layer(&self, name: &str) -> Result<(Var, Var)> {
        Ok((self.get(&format!("{name}.w"))?, self.get(&format!("{name}.b"))?))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
