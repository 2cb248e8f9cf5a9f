//! Train and evaluate the three correspondence variants with shared seeds
//! and the same held-out fold.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, mean_std, MetricsReport, COLUMNS};
use super::{load_cases, simulate, train, TrainConfig};
use crate::error::{invalid, Result};
use crate::geometry::TriMesh;
use crate::network::{Model, Variant};
use crate::synth::dataset::{load_labels, load_skin_pair};
use crate::synth::{load_case_samples, CaseSamples, Manifest, REGIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Shared training settings; `variant` and `seed` are overridden per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::desk(),
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: Variant,
    pub seed: u64,
    pub report: MetricsReport,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub fold: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<AblationRun>,
}

/// Ordering of seed-averaged entire-surface errors and the per-seed gain of
/// the learned correspondence over the facial-only variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub acmt: f64,
    pub closest: f64,
    pub no_corr: f64,
    /// `1 - acmt / no_corr` for every seed.
    pub improvement: Vec<f64>,
    pub min_improvement: f64,
    pub holds: bool,
}

impl AblationTable {
    fn runs_of(&self, v: Variant) -> impl Iterator<Item = &AblationRun> {
        self.runs.iter().filter(move |r| r.variant == v)
    }

    /// Entire-surface mean of each seed, in `seeds` order.
    pub fn seed_means(&self, v: Variant) -> Vec<f64> {
        self.seeds
            .iter()
            .filter_map(|s| self.runs_of(v).find(|r| r.seed == *s))
            .map(|r| r.report.mean[REGIONS])
            .collect()
    }

    /// Mean and population std per column over every test case of every seed.
    pub fn row(&self, v: Variant) -> [(f64, f64); REGIONS + 1] {
        let mut out = [(0.0, 0.0); REGIONS + 1];
        for (c, cell) in out.iter_mut().enumerate() {
            *cell = mean_std(self.runs_of(v).flat_map(|r| r.report.cases.iter().map(move |m| m.columns()[c])));
        }
        out
    }

    pub fn check_ordering(&self, min_gain: f64) -> OrderingCheck {
        let avg = |v| {
            let m = self.seed_means(v);
            m.iter().sum::<f64>() / m.len() as f64
        };
        let (acmt, closest, no_corr) = (avg(Variant::Acmt), avg(Variant::Closest), avg(Variant::NoCorr));
        let improvement: Vec<f64> = self
            .seed_means(Variant::Acmt)
            .iter()
            .zip(self.seed_means(Variant::NoCorr))
            .map(|(a, n)| 1.0 - a / n)
            .collect();
        let min_improvement = improvement.iter().cloned().fold(f64::INFINITY, f64::min);
        OrderingCheck {
            holds: acmt <= closest && closest < no_corr && min_improvement >= min_gain,
            acmt,
            closest,
            no_corr,
            improvement,
            min_improvement,
        }
    }

    /// Rows = variants, columns = six regions and the entire surface, cells `mean±std` in mm.
    pub fn to_csv(&self) -> String {
        let mut out = format!("variant,{}\n", COLUMNS.join(","));
        for v in Variant::ALL {
            let cells: Vec<String> = self.row(v).iter().map(|(m, s)| format!("{m:.3}±{s:.3}")).collect();
            out += &format!("{},{}\n", v.name(), cells.join(","));
        }
        out
    }

    /// One row per (variant, seed) with the entire-surface mean and the final training loss.
    pub fn seeds_csv(&self) -> String {
        let mut out = String::from("variant,seed,entire_mean,final_loss\n");
        for r in &self.runs {
            out += &format!("{},{},{:.6},{:.6e}\n", r.variant.name(), r.seed, r.report.mean[REGIONS], r.final_loss);
        }
        out
    }
}

/// A held-out case as needed for simulation and scoring.
pub struct TestCase {
    pub name: String,
    pub skin: TriMesh,
    pub skin_post: TriMesh,
    pub regions: Vec<usize>,
    pub samples: CaseSamples,
}

pub fn load_test_cases(root: &Path, manifest: &Manifest, names: &[String]) -> Result<Vec<TestCase>> {
    names
        .iter()
        .map(|name| {
            let dir = manifest.case_dir(root, name);
            let (skin, skin_post) = load_skin_pair(&dir)?;
            let (_, regions) = load_labels(&dir)?;
            Ok(TestCase {
                name: name.clone(),
                skin,
                skin_post,
                regions,
                samples: load_case_samples(&dir)?,
            })
        })
        .collect()
}

/// Simulate and score every test case.
pub fn evaluate_model(model: &Model, cases: &[TestCase]) -> Result<MetricsReport> {
    let scored = crate::par_map(cases, |c| {
        let sim = simulate(model, &c.skin, &c.samples)?;
        Ok((evaluate(&c.name, &sim.mesh, &c.skin_post, &c.regions)?, sim.seconds))
    });
    let (metrics, seconds): (Vec<_>, Vec<_>) = scored.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(MetricsReport::new(metrics, seconds))
}

/// Every variant times every seed, trained on all folds but `cfg.train.fold`
/// and scored on that fold. `log` receives one line per finished run.
pub fn run_ablation_suite(root: &Path, cfg: &AblationConfig, log: impl Fn(String) + Sync) -> Result<AblationTable> {
    if cfg.seeds.is_empty() {
        return Err(invalid("ablation needs at least one seed"));
    }
    cfg.train.validate()?;
    let manifest = Manifest::load(root)?;
    let (train_names, test_names) = manifest.split(cfg.train.fold)?;
    let tests = load_test_cases(root, &manifest, &test_names)?;
    let mut runs = Vec::new();
    for variant in Variant::ALL {
        let tc = TrainConfig {
            variant,
            ..cfg.train.clone()
        };
        let cases = load_cases(root, &manifest, &train_names, &tc.model_config())?;
        let done = crate::par_map(&cfg.seeds, |&seed| -> Result<AblationRun> {
            let run_cfg = TrainConfig { seed, ..tc.clone() };
            let out = train(&run_cfg, &cases, |_| {})?;
            let report = evaluate_model(&out.model, &tests)?;
            let final_loss = out.curve.last().map_or(f64::NAN, |e| e.total);
            log(format!(
                "{} seed {seed}: entire {:.4} mm, final loss {final_loss:.4e}",
                variant.name(),
                report.mean[REGIONS]
            ));
            Ok(AblationRun {
                variant,
                seed,
                report,
                final_loss,
            })
        });
        for r in done {
            runs.push(r?);
        }
    }
    Ok(AblationTable {
        fold: cfg.train.fold,
        seeds: cfg.seeds.clone(),
        runs,
    })
}
