//! The simulated-data sweep: for every (modification level, noise weight)
//! cell, generate a dataset, cross-validate every requested model, compare
//! the models pairwise, and emit per-cell reports, a machine-readable
//! summary and accuracy plots.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use connectome_core::analysis::{emit_accuracy_plot, write_json, AccuracySeries};
use connectome_core::error::{Error, Result};
use connectome_core::eval::{
    baseline_accuracy, compare_classifiers, plain_kfold, run_crossval, Comparison, EvalReport,
};
use connectome_core::nn::ModelKind;
use connectome_core::seeds::{self, domain};
use connectome_core::simulator::{generate_dataset, BaseSource, SimulationConfig};

use crate::settings::SweepConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    pub pooled_accuracy: f64,
    pub pooled_auc: f64,
    pub fold_mean_accuracy: f64,
    pub per_fold_accuracy: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub report_file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub modified_roi_count: usize,
    pub noise_weight: f64,
    pub ground_truth: Vec<usize>,
    pub results: Vec<ModelResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub roi_count: usize,
    pub replicas_per_class: usize,
    pub instances_per_dataset: usize,
    pub folds: usize,
    pub seed: u64,
    pub models: Vec<String>,
    pub baseline_k: u64,
    pub baseline_accuracy: f64,
    pub cells: Vec<CellSummary>,
}

fn run_cell(
    cfg: &SweepConfig,
    models: &[ModelKind],
    cell_index: u64,
    modified_roi_count: usize,
    noise_weight: f64,
    out_dir: &Path,
) -> Result<(CellSummary, Vec<EvalReport>)> {
    let cell_seed = seeds::child_seed(cfg.seed, domain::SWEEP_CELL, cell_index);
    let sim = SimulationConfig {
        roi_count: cfg.roi_count,
        modified_roi_count,
        noise_weight,
        replicas_per_class: cfg.replicas_per_class,
        seed: cell_seed,
        base: match &cfg.base {
            Some(files) => BaseSource::Files {
                healthy: files.healthy.clone(),
                patient: files.patient.clone(),
            },
            None => BaseSource::Synthetic {
                timepoints: cfg.timepoints,
                factors: cfg.factors,
            },
        },
    };
    let (dataset, truth) = generate_dataset(&sim)?;
    let folds = plain_kfold(&dataset, cfg.folds, cell_seed)?;

    let mut reports: Vec<EvalReport> = Vec::with_capacity(models.len());
    for (mi, &kind) in models.iter().enumerate() {
        let spec = connectome_core::nn::ModelSpec::new(kind, cfg.roi_count, 1);
        let mut train_cfg = cfg.train.apply(kind);
        train_cfg.seed = seeds::child_seed(cell_seed, domain::MODEL_TRAIN, mi as u64);
        reports.push(run_crossval(&dataset, &spec, &train_cfg, &folds)?);
    }

    // pairwise significance on the pooled predictions
    let labels = dataset.labels();
    let predictions: Vec<Vec<u8>> = reports.iter().map(|r| r.predicted_labels()).collect();
    for a in 0..reports.len() {
        let mut comparisons = Vec::new();
        for b in 0..reports.len() {
            if a != b {
                comparisons.push(Comparison {
                    other: reports[b].model.clone(),
                    p_value: compare_classifiers(&predictions[a], &predictions[b], &labels)?,
                });
            }
        }
        reports[a].comparisons = comparisons;
    }

    let mut results = Vec::with_capacity(reports.len());
    for report in &reports {
        let file = format!(
            "cells/k{}_w{}_{}.json",
            modified_roi_count, noise_weight, report.model
        );
        write_json(report, &out_dir.join(&file))?;
        results.push(ModelResult {
            model: report.model.clone(),
            pooled_accuracy: report.pooled_accuracy,
            pooled_auc: report.pooled_auc,
            fold_mean_accuracy: report.fold_mean_accuracy,
            per_fold_accuracy: report.per_fold_accuracy.clone(),
            comparisons: report.comparisons.clone(),
            report_file: file,
        });
    }
    Ok((
        CellSummary {
            modified_roi_count,
            noise_weight,
            ground_truth: truth.modified_roi_indices,
            results,
            error: None,
        },
        reports,
    ))
}

/// Run the whole grid. A failing cell is recorded in the summary and does
/// not abort the remaining cells. Returns the summary that was written to
/// `out_dir/summary.json`.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<SweepSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir.join("cells"))?;
    let models = cfg.model_list();

    let grid: Vec<(u64, usize, f64)> = cfg
        .modified_roi_counts
        .iter()
        .flat_map(|&k| cfg.noise_weights.iter().map(move |&w| (k, w)))
        .enumerate()
        .map(|(i, (k, w))| (i as u64, k, w))
        .collect();

    let cells: Vec<CellSummary> = grid
        .par_iter()
        .map(|&(idx, k, w)| match run_cell(cfg, &models, idx, k, w, out_dir) {
            Ok((cell, _)) => cell,
            Err(e) => CellSummary {
                modified_roi_count: k,
                noise_weight: w,
                ground_truth: Vec::new(),
                results: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();

    let n = 2 * cfg.replicas_per_class;
    let (baseline_k, baseline_acc) = baseline_accuracy(n as u64);
    let summary = SweepSummary {
        roi_count: cfg.roi_count,
        replicas_per_class: cfg.replicas_per_class,
        instances_per_dataset: n,
        folds: cfg.folds,
        seed: cfg.seed,
        models: models.iter().map(|m| m.name().to_string()).collect(),
        baseline_k,
        baseline_accuracy: baseline_acc,
        cells,
    };
    write_json(&summary, &out_dir.join("summary.json"))?;
    plot_summary(&summary, out_dir)?;
    Ok(summary)
}

/// One accuracy-vs-noise SVG per modification level.
pub fn plot_summary(summary: &SweepSummary, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut levels: Vec<usize> = summary.cells.iter().map(|c| c.modified_roi_count).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.is_empty() {
        return Err(Error::data("summary contains no cells"));
    }
    for &k in &levels {
        let mut series: Vec<AccuracySeries> = summary
            .models
            .iter()
            .map(|m| AccuracySeries {
                model: m.clone(),
                points: Vec::new(),
            })
            .collect();
        let mut cells: Vec<&CellSummary> = summary
            .cells
            .iter()
            .filter(|c| c.modified_roi_count == k && c.error.is_none())
            .collect();
        cells.sort_by(|a, b| a.noise_weight.partial_cmp(&b.noise_weight).unwrap());
        for cell in cells {
            for result in &cell.results {
                if let Some(s) = series.iter_mut().find(|s| s.model == result.model) {
                    s.points.push((cell.noise_weight, result.pooled_accuracy));
                }
            }
        }
        series.retain(|s| !s.points.is_empty());
        if series.is_empty() {
            continue;
        }
        emit_accuracy_plot(
            &series,
            summary.baseline_accuracy,
            &out_dir.join(format!("accuracy_k{k}.svg")),
        )?;
    }
    Ok(())
}
