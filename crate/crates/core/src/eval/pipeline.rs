use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::monte_carlo::{collect, run_protocol, MonteCarloReport};
use crate::data::LabeledPixels;
use crate::error::{Error, Result};
use crate::select::{aggregate_heatmaps, select_bands, BandSelection, Heatmap};

/// Retraining outcome for one distinct band subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedEvaluation {
    /// Every contamination rate that produced this subset.
    pub lambdas: Vec<f64>,
    pub bands: Vec<usize>,
    pub report: Option<MonteCarloReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Average over every attention model of every run.
    pub heatmap: Heatmap,
    /// One per (run, attention architecture), in run order.
    pub run_heatmaps: Vec<Heatmap>,
    /// One per configured λ, in configuration order.
    pub selections: Vec<BandSelection>,
    pub full: MonteCarloReport,
    pub reduced: Vec<ReducedEvaluation>,
}

impl PipelineReport {
    pub fn selection(&self, lambda: f64) -> Option<&BandSelection> {
        self.selections.iter().find(|s| s.lambda == lambda)
    }

    pub fn reduced_for(&self, lambda: f64) -> Option<&ReducedEvaluation> {
        self.reduced.iter().find(|r| r.lambdas.contains(&lambda))
    }
}

/// Embedded band selection end to end: train every architecture over the
/// Monte-Carlo runs, average the attention heatmaps of all attention
/// models, select bands for every λ, then retrain from scratch on each
/// distinct reduced band set with the same run seeds.
pub fn band_selection_pipeline(
    config: &ExperimentConfig,
    pixels: &LabeledPixels,
    jobs: usize,
) -> Result<PipelineReport> {
    config.validate()?;
    if config.attention_architectures().is_empty() {
        return Err(Error::InvalidArgument(
            "band selection needs at least one attention architecture".into(),
        ));
    }
    let cells = run_protocol(config, pixels, true, jobs);
    let (full, run_heatmaps) = collect(config, pixels.bands, cells)?;
    if run_heatmaps.is_empty() {
        return Err(Error::Data(format!(
            "every attention run failed ({} failures)",
            full.failures.len()
        )));
    }
    let heatmap = aggregate_heatmaps(&run_heatmaps)?;

    let selections = config
        .lambdas
        .iter()
        .map(|&l| select_bands(&heatmap, l))
        .collect::<Result<Vec<_>>>()?;
    for s in &selections {
        info!("lambda {}: {} bands selected {:?}", s.lambda, s.selected.len(), s.selected);
    }

    let mut reduced: Vec<ReducedEvaluation> = Vec::new();
    for s in &selections {
        if let Some(r) = reduced.iter_mut().find(|r| r.bands == s.selected) {
            r.lambdas.push(s.lambda);
            continue;
        }
        reduced.push(ReducedEvaluation {
            lambdas: vec![s.lambda],
            bands: s.selected.clone(),
            report: None,
            error: None,
        });
    }
    if config.evaluate_reduced {
        for r in &mut reduced {
            match evaluate_subset(config, pixels, &r.bands, jobs) {
                Ok(rep) => r.report = Some(rep),
                Err(e) => {
                    warn!("evaluation on bands {:?} failed: {e}", r.bands);
                    r.error = Some(e.to_string());
                }
            }
        }
    }

    Ok(PipelineReport {
        heatmap,
        run_heatmaps,
        selections,
        full,
        reduced,
    })
}

fn evaluate_subset(
    config: &ExperimentConfig,
    pixels: &LabeledPixels,
    bands: &[usize],
    jobs: usize,
) -> Result<MonteCarloReport> {
    let sub = pixels.select_bands(bands)?;
    let cells = run_protocol(config, &sub, false, jobs);
    Ok(collect(config, sub.bands, cells)?.0)
}
