//! Ablation sweeps: the cross product of feature kinds, model variants,
//! supervision configurations and noise conditions.

use asdl_core::{FeatureKind, SupervisionConfig, Variant};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::config::{ExperimentConfig, Snr};
use crate::error::{AppError, Result};
use crate::io;
use crate::pipeline::{markdown_table, Pipeline, RunKey, RunSummary};

/// One point of the sweep. Every cell is trained once per configured seed,
/// so cells are compared on the same initializations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: FeatureKind,
    pub variant: Variant,
    pub supervision: SupervisionConfig,
    pub snr: Snr,
}

impl Cell {
    pub fn keys(&self, seeds: &[u64]) -> Vec<RunKey> {
        seeds.iter().map(|&seed| RunKey { snr: self.snr, kind: self.kind, variant: self.variant, supervision: self.supervision, seed }).collect()
    }

    /// The main configuration with this cell's axis values.
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.features.kind = self.kind;
        c.model.variant = self.variant;
        c.supervision.name = self.supervision;
        c.noise.snr_db = vec![self.snr];
        c
    }
}

fn axis<T: Clone + PartialEq>(name: &str, given: &Option<Vec<T>>, fallback: T) -> Result<Vec<T>> {
    let values = given.clone().unwrap_or_else(|| vec![fallback]);
    if values.is_empty() {
        return Err(AppError::Config(format!("ablation axis `{name}` is empty")));
    }
    let mut out: Vec<T> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Deduplicated cross product in axis order (features outermost). Absent
/// axes take the main configuration's value; an explicitly empty axis is an
/// error.
pub fn ablation_matrix(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let a = &cfg.ablation;
    let kinds = axis("features", &a.features, cfg.features.kind)?;
    let variants = axis("variants", &a.variants, cfg.model.variant)?;
    let sups = axis("supervision", &a.supervision, cfg.supervision.name)?;
    let snrs = axis("snr_db", &a.snr_db, *cfg.noise.snr_db.first().unwrap_or(&Snr::CLEAN))?;
    let mut cells = Vec::new();
    for &kind in &kinds {
        for &variant in &variants {
            for &supervision in &sups {
                for &snr in &snrs {
                    cells.push(Cell { kind, variant, supervision, snr });
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationOutput {
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
}

/// Simulates once, then runs features, labels, training and evaluation for
/// every cell and seed, reusing stages whose inputs are unchanged.
pub fn ablate(pipeline: &Pipeline) -> Result<Vec<RunSummary>> {
    let cells = ablation_matrix(&pipeline.cfg)?;
    info!(cells = cells.len(), seeds = pipeline.cfg.seeds.len(), "ablation");
    pipeline.simulate()?;
    let mut runs = Vec::new();
    for cell in &cells {
        let sub = pipeline.with_config(cell.apply(&pipeline.cfg));
        sub.features_for(cell.snr, cell.kind)?;
        for key in cell.keys(&pipeline.cfg.seeds) {
            sub.labels_for(key.snr, key.supervision, key.seed)?;
            sub.train_run(&key)?;
            runs.push(sub.eval_run(&key)?);
        }
    }
    let dir = pipeline.out.join("ablation");
    io::write_json(&dir.join("ablation.json"), &AblationOutput { config_hash: pipeline.cfg.hash(), runs: runs.clone() })?;
    io::write_atomic(&dir.join("ablation.md"), markdown_table(&runs).as_bytes())?;
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn load(name: &str) -> ExperimentConfig {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
        ExperimentConfig::load(Some(&p), Vec::new()).unwrap()
    }

    #[test]
    fn preset_sweeps_have_the_expected_cells() {
        assert_eq!(ablation_matrix(&load("temporal-modeling.toml")).unwrap().len(), 3);
        assert_eq!(ablation_matrix(&load("modality.toml")).unwrap().len(), 5);
        assert_eq!(ablation_matrix(&load("supervision.toml")).unwrap().len(), 8);
        assert_eq!(ablation_matrix(&load("noise-sweep.toml")).unwrap().len(), 6);
        assert_eq!(ablation_matrix(&ExperimentConfig::default()).unwrap().len(), 1);
    }

    #[test]
    fn duplicates_collapse_and_order_is_stable() {
        let mut c = ExperimentConfig::default();
        c.ablation.features = Some(vec![FeatureKind::LogMel1, FeatureKind::GccPhat, FeatureKind::LogMel1]);
        c.ablation.variants = Some(vec![Variant::Cnn, Variant::Crnn]);
        let cells = ablation_matrix(&c).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].kind, FeatureKind::LogMel1);
        assert_eq!(cells[1].variant, Variant::Crnn);
        assert_eq!(cells[2].kind, FeatureKind::GccPhat);
        assert_eq!(cells[0].keys(&[4, 5]).len(), 2);
    }

    #[test]
    fn empty_axis_is_an_error() {
        let mut c = ExperimentConfig::default();
        c.ablation.variants = Some(vec![]);
        assert!(matches!(ablation_matrix(&c), Err(AppError::Config(_))));
    }

    #[test]
    fn cell_overrides_the_axes_only() {
        let c = ExperimentConfig::default();
        let cell = Cell { kind: FeatureKind::SalsaLite, variant: Variant::CnnF, supervision: "Asc-Vad".parse().unwrap(), snr: Snr(Some(10.0)) };
        let d = cell.apply(&c);
        assert_eq!(d.features.kind, FeatureKind::SalsaLite);
        assert_eq!(d.model.variant, Variant::CnnF);
        assert_eq!(d.noise.snr_db, vec![Snr(Some(10.0))]);
        assert_eq!(d.train, c.train);
    }
}
