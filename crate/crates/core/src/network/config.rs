use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 4,096 points, widths {128, 256, 512, 1024, 512, 256, 128, 128}.
    Full,
    /// Desk-scale widths {32, 64, 128, 256, 128, 64, 32, 32}.
    Toy,
}

/// How the facial-to-bony correspondence matrix is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Learned dot-product affinity between embedded facial and bony features.
    Acmt,
    /// Facial features alone mapped straight to an N1 x N2 matrix.
    NoCorr,
    /// Fixed binary nearest-bony-point matrix.
    Closest,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Acmt, Variant::Closest, Variant::NoCorr];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Acmt => "acmt",
            Variant::NoCorr => "no_corr",
            Variant::Closest => "closest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "acmt" => Ok(Variant::Acmt),
            "no_corr" | "no-corr" => Ok(Variant::NoCorr),
            "closest" => Ok(Variant::Closest),
            _ => Err(invalid(format!("unknown variant `{s}` (acmt | no_corr | closest)"))),
        }
    }

    pub fn uses_facial_encoder(self) -> bool {
        self != Variant::Closest
    }

    pub fn uses_bony_encoder(self) -> bool {
        self == Variant::Acmt
    }
}

/// Four set-abstraction stages followed by four feature-propagation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_points: usize,
    /// Output point count of each set-abstraction stage.
    pub sa_points: Vec<usize>,
    pub sa_radius: Vec<f64>,
    pub sa_max_neighbors: Vec<usize>,
    /// Shared-MLP widths per set-abstraction stage; the last entry is the stage width.
    pub sa_mlp: Vec<Vec<usize>>,
    /// Width of each feature-propagation stage, coarse to fine.
    pub fp_widths: Vec<usize>,
    pub idw_k: usize,
}

impl EncoderConfig {
    pub fn full() -> Self {
        Self {
            n_points: 4096,
            sa_points: vec![1024, 512, 256, 64],
            sa_radius: vec![0.1, 0.2, 0.4, 0.8],
            sa_max_neighbors: vec![32; 4],
            sa_mlp: vec![vec![64, 128], vec![128, 256], vec![256, 512], vec![512, 1024]],
            fp_widths: vec![512, 256, 128, 128],
            idw_k: 3,
        }
    }

    /// Toy layout for `n_points` inputs: stage counts n/4, n/8, n/16, n/32.
    /// Radii grow with the point spacing so a ball holds as many points as
    /// in the full layout.
    pub fn toy(n_points: usize) -> Self {
        let density = (4096.0 / n_points.max(1) as f64).sqrt();
        Self {
            n_points,
            sa_points: vec![n_points / 4, n_points / 8, n_points / 16, n_points / 32],
            sa_radius: [0.1, 0.2, 0.4, 0.8].map(|r| r * density).to_vec(),
            sa_max_neighbors: vec![16; 4],
            sa_mlp: vec![vec![32], vec![64], vec![128], vec![256]],
            fp_widths: vec![128, 128, 128, 128],
            idw_k: (n_points / 32).clamp(1, 3),
        }
    }

    /// Output widths of the eight stages, encoding then decoding.
    pub fn stage_widths(&self) -> Vec<usize> {
        self.sa_mlp
            .iter()
            .map(|m| *m.last().unwrap_or(&0))
            .chain(self.fp_widths.iter().copied())
            .collect()
    }

    /// Output point counts of the eight stages.
    pub fn stage_points(&self) -> Vec<usize> {
        let mut v = self.sa_points.clone();
        v.extend(self.sa_points[..3].iter().rev());
        v.push(self.n_points);
        v
    }

    pub fn out_width(&self) -> usize {
        *self.fp_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let stages = self.sa_points.len();
        if stages != 4
            || self.sa_radius.len() != 4
            || self.sa_max_neighbors.len() != 4
            || self.sa_mlp.len() != 4
            || self.fp_widths.len() != 4
        {
            return Err(invalid("encoder needs exactly 4 encoding and 4 decoding stages"));
        }
        let mut prev = self.n_points;
        for (s, &p) in self.sa_points.iter().enumerate() {
            if p == 0 || p > prev {
                return Err(invalid(format!(
                    "encoding stage {s} keeps {p} points out of {prev}; counts must shrink and stay positive"
                )));
            }
            prev = p;
        }
        if self.sa_radius.iter().any(|&r| !(r > 0.0)) || self.sa_max_neighbors.contains(&0) {
            return Err(invalid("radii and neighbour caps must be positive"));
        }
        if self.sa_mlp.iter().any(|m| m.is_empty() || m.contains(&0)) || self.fp_widths.contains(&0) {
            return Err(invalid("all layer widths must be positive"));
        }
        if self.idw_k == 0 || self.idw_k > *self.sa_points.last().unwrap() {
            return Err(invalid("idw k must be in [1, coarsest point count]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpsaConfig {
    pub embed_dim: usize,
    /// Width of the bony movement features.
    pub movement_dim: usize,
}

impl Default for CpsaConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            movement_dim: 64,
        }
    }
}

/// Everything needed to rebuild a model; stored in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub cpsa: CpsaConfig,
}

impl ModelConfig {
    pub fn preset(preset: Preset, variant: Variant, n_points: usize) -> Self {
        let encoder = match preset {
            Preset::Full => EncoderConfig {
                n_points,
                ..EncoderConfig::full()
            },
            Preset::Toy => EncoderConfig::toy(n_points),
        };
        Self {
            preset,
            variant,
            encoder,
            cpsa: CpsaConfig::default(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.encoder.n_points
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.cpsa.embed_dim == 0 || self.cpsa.movement_dim == 0 {
            return Err(invalid("embedding and movement widths must be >= 1"));
        }
        Ok(())
    }
}
