//! Run metadata written next to every artifact.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ablation::AblationTable;
use super::metrics::MetricsReport;
use super::EpochLoss;
use crate::error::Result;
use crate::files::{write_bytes, write_csv, write_json};

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    /// SHA-256 of the dataset's manifest.json, when a dataset is involved.
    pub dataset_manifest_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_digest(dataset: &Path) -> Result<String> {
    let path = dataset.join(crate::synth::dataset::MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| crate::Error::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunMetadata {
    pub fn new(command: &str, config: impl Serialize, dataset: Option<&Path>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config).map_err(|e| crate::error::invalid(e.to_string()))?,
            dataset_manifest_sha256: dataset.map(manifest_digest).transpose()?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_loss_csv(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    write_csv(path, curve)
}

/// Summary and per-case metrics; wall-clock times are left out so reruns
/// give identical bytes.
pub fn write_report_json(path: &Path, report: &MetricsReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_timing(path: &Path, report: &MetricsReport) -> Result<()> {
    let cases: Vec<_> = report
        .cases
        .iter()
        .zip(&report.seconds)
        .map(|(c, s)| serde_json::json!({"case": c.name, "seconds": s}))
        .collect();
    write_json(path, &serde_json::json!({ "simulation_seconds": cases }))
}

/// `ablation.csv`, `ablation_seeds.csv` and `ordering.json` in `dir`.
pub fn write_ablation(dir: &Path, table: &AblationTable) -> Result<()> {
    write_bytes(&dir.join("ablation.csv"), table.to_csv().as_bytes())?;
    write_bytes(&dir.join("ablation_seeds.csv"), table.seeds_csv().as_bytes())?;
    write_json(&dir.join("ordering.json"), &table.check_ordering(0.15))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
