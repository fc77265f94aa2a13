//! Real-data pipeline: ROI time-series CSVs in, grouped cross-validated
//! accuracy/AUC per model and channel set out.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use connectome_core::analysis::write_json;
use connectome_core::connectivity::connectivity_matrix;
use connectome_core::error::{Error, Result};
use connectome_core::eval::{
    baseline_accuracy, compare_classifiers, grouped_kfold, run_crossval, Comparison, EvalReport,
};
use connectome_core::io::load_timeseries;
use connectome_core::nn::ModelSpec;
use connectome_core::seeds::{self, domain};
use connectome_core::types::{ConnectivityMatrix, Dataset, FoldAssignment, LabeledInstance};

use crate::settings::PipelineConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineCell {
    pub model: String,
    pub channel_set: String,
    pub pooled_accuracy: f64,
    pub pooled_auc: f64,
    pub fold_mean_accuracy: f64,
    pub per_fold_accuracy: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub report_file: String,
}

/// Accuracy/AUC per model per channel set, plus the shared fold assignment
/// used by every classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub subjects: usize,
    pub folds: usize,
    pub baseline_k: u64,
    pub baseline_accuracy: f64,
    pub channel_sets: Vec<String>,
    pub models: Vec<String>,
    pub cells: Vec<PipelineCell>,
    pub fold_assignment: FoldAssignment,
}

fn set_name(set: &[String]) -> String {
    set.join("+")
}

/// Run the configured pipeline; paths inside `cfg` resolve against
/// `base_dir` and outputs land under `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, base_dir: &Path, out_dir: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir.join("reports"))?;

    // load sessions and compute every defined channel once
    let mut channel_values: Vec<BTreeMap<String, ConnectivityMatrix>> = Vec::new();
    let mut roi_count: Option<usize> = None;
    for session in &cfg.sessions {
        let path = base_dir.join(&session.timeseries);
        let ts = load_timeseries(&path)?.with_identity(session.subject_id.clone(), session.id.clone());
        match roi_count {
            None => roi_count = Some(ts.roi_count()),
            Some(n) if n != ts.roi_count() => {
                return Err(Error::data(format!(
                    "session '{}' has {} ROIs, previous sessions have {n}",
                    session.id,
                    ts.roi_count()
                )));
            }
            _ => {}
        }
        let mut by_name = BTreeMap::new();
        for channel in &cfg.channels {
            let job = channel.job()?;
            by_name.insert(channel.name.clone(), connectivity_matrix(&ts, &job)?);
        }
        channel_values.push(by_name);
    }
    let roi_count = roi_count.expect("validated non-empty sessions");

    let model_kinds = cfg.model_list();
    let channel_sets = cfg.channel_set_list();

    // one dataset per channel set; the fold assignment is shared across
    // sets and models (same subjects, same seed)
    let mut datasets: Vec<Dataset> = Vec::new();
    for set in &channel_sets {
        let metrics = set
            .iter()
            .map(|name| {
                cfg.channels
                    .iter()
                    .find(|c| &c.name == name)
                    .map(|c| c.metric)
                    .expect("validated channel name")
            })
            .collect();
        let instances = cfg
            .sessions
            .iter()
            .zip(&channel_values)
            .map(|(session, values)| {
                LabeledInstance::new(
                    session.id.clone(),
                    session.label,
                    session.subject_id.clone(),
                    set.iter().map(|name| values[name].clone()).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        datasets.push(Dataset::new(roi_count, metrics, instances)?);
    }

    let folds = grouped_kfold(&datasets[0], cfg.folds, cfg.seed)?;
    let subjects = {
        let mut set = std::collections::BTreeSet::new();
        for s in &cfg.sessions {
            set.insert(&s.subject_id);
        }
        set.len()
    };

    let mut cells = Vec::new();
    for (si, (set, dataset)) in channel_sets.iter().zip(&datasets).enumerate() {
        let mut reports: Vec<EvalReport> = Vec::with_capacity(model_kinds.len());
        for (mi, &kind) in model_kinds.iter().enumerate() {
            let spec = ModelSpec::new(kind, roi_count, set.len());
            let mut train_cfg = cfg.train.apply(kind);
            train_cfg.seed = seeds::child_seed(
                cfg.seed,
                domain::MODEL_TRAIN,
                (si * model_kinds.len() + mi) as u64,
            );
            reports.push(run_crossval(dataset, &spec, &train_cfg, &folds)?);
        }
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
        for report in &reports {
            let file = format!("reports/{}_{}.json", set_name(set), report.model);
            write_json(report, &out_dir.join(&file))?;
            cells.push(PipelineCell {
                model: report.model.clone(),
                channel_set: set_name(set),
                pooled_accuracy: report.pooled_accuracy,
                pooled_auc: report.pooled_auc,
                fold_mean_accuracy: report.fold_mean_accuracy,
                per_fold_accuracy: report.per_fold_accuracy.clone(),
                comparisons: report.comparisons.clone(),
                report_file: file,
            });
        }
    }

    let n = cfg.sessions.len();
    let (baseline_k, baseline_acc) = baseline_accuracy(n as u64);
    let report = PipelineReport {
        n,
        subjects,
        folds: cfg.folds,
        baseline_k,
        baseline_accuracy: baseline_acc,
        channel_sets: channel_sets.iter().map(|s| set_name(s)).collect(),
        models: model_kinds.iter().map(|m| m.name().to_string()).collect(),
        cells,
        fold_assignment: folds,
    };
    write_json(&report, &out_dir.join("report.json"))?;
    Ok(report)
}
