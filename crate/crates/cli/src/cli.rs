//! Command-line surface: argument definitions and command dispatch.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use connectome_core::analysis::{
    importance_profile, recovery_score, write_importance_csv, write_json, RecoveryReport,
};
use connectome_core::connectivity::{
    connectivity_matrix, ConnectivityJob, ConstantSeriesPolicy, PathVariant,
};
use connectome_core::dtw::{CostFunction, DtwConfig};
use connectome_core::error::{Error, Result};
use connectome_core::eval::{baseline_accuracy, compare_classifiers, grouped_kfold, plain_kfold, run_crossval};
use connectome_core::io;
use connectome_core::nn::{self, ModelSpec};
use connectome_core::simulator::{generate_dataset, BaseSource, SimulationConfig};
use connectome_core::types::ConnectivityMetric;

use crate::settings::{self, PipelineConfig, SweepConfig, TrainSettings};
use crate::{pipeline, sweep};

/// Connectivity metrics, simulated connectome datasets and neural-network
/// classification pipelines.
#[derive(Parser, Debug)]
#[command(name = "connectome", version, about)]
pub struct Cli {
    /// JSON configuration file (train, crossval, sweep, pipeline).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides any seed in the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker-thread count (defaults to the number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory for commands that emit result trees.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Correlation,
    Dtw,
    Path,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CostArg {
    Squared,
    Absolute,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathVariantArg {
    Excess,
    Relative,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SwitchArg {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a simulated two-class connectome dataset.
    Simulate {
        /// ROI count of the generated connectomes.
        #[arg(long, short = 'n')]
        n: usize,
        /// Number of ROIs replaced in the patient class.
        #[arg(long, short = 'k')]
        k: usize,
        /// Weight multiplying the symmetric noise.
        #[arg(long)]
        noise_weight: f64,
        /// Instances generated per class.
        #[arg(long, default_value_t = 75)]
        replicas: usize,
        /// Healthy template `.cmx` (omit to synthesize one).
        #[arg(long)]
        base_healthy: Option<PathBuf>,
        /// Patient template `.cmx` (omit to synthesize one).
        #[arg(long)]
        base_patient: Option<PathBuf>,
        /// Timepoints of the synthetic template generator.
        #[arg(long, default_value_t = 120)]
        timepoints: usize,
        /// Latent factors of the synthetic template generator.
        #[arg(long, default_value_t = 5)]
        factors: usize,
        /// Directory receiving the `.cmx` files, manifest and ground truth.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute one connectivity matrix from a ROI time-series CSV.
    Connect {
        /// Input time-series CSV (header = ROI ids, one row per timepoint).
        #[arg(long)]
        input: PathBuf,
        /// Connectivity metric.
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Warping window (required for dtw and path metrics).
        #[arg(long)]
        window: Option<usize>,
        /// Per-step cost of the warping alignment.
        #[arg(long, value_enum, default_value_t = CostArg::Squared)]
        cost: CostArg,
        /// Which path-length measure to store.
        #[arg(long, value_enum, default_value_t = PathVariantArg::Relative)]
        path_variant: PathVariantArg,
        /// Z-normalize series before warping.
        #[arg(long, value_enum, default_value_t = SwitchArg::On)]
        znorm: SwitchArg,
        /// Record correlation 0 for constant ROI series instead of failing.
        #[arg(long)]
        allow_constant: bool,
        /// Output `.cmx` file.
        #[arg(long)]
        output: PathBuf,
        /// Also export the matrix as CSV next to the output file.
        #[arg(long)]
        export_csv: bool,
    },
    /// Train one model on a full dataset and save its parameters.
    Train {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Output parameter file (`.prm`).
        #[arg(long)]
        out_params: PathBuf,
        /// Optional JSON file receiving the per-epoch loss history.
        #[arg(long)]
        out_history: Option<PathBuf>,
    },
    /// Cross-validate one model on a dataset manifest.
    Crossval {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Fold count.
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Group folds by subject id (sessions of one subject never split).
        #[arg(long)]
        grouped: bool,
        /// Output report JSON path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the full simulated-data grid sweep.
    Sweep,
    /// Print the binomial chance baseline for n test instances.
    Baseline {
        /// Number of test predictions.
        #[arg(long, short = 'n')]
        n: u64,
    },
    /// Compare two prediction files with the exact binomial test.
    Compare {
        /// JSON array of predicted labels from classifier A.
        #[arg(long)]
        a: PathBuf,
        /// JSON array of predicted labels from classifier B.
        #[arg(long)]
        b: PathBuf,
        /// JSON array of true labels.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Importance profiles and ROI recovery from trained parameters.
    Analyze {
        /// Trained parameter file (`.prm`).
        #[arg(long)]
        params: PathBuf,
        /// Model spec JSON (kind, roi_count, channels, layer widths).
        #[arg(long)]
        spec: PathBuf,
        /// Ground-truth JSON with the modified ROI indices.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// How many top ROIs to report.
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Re-render accuracy plots from a sweep summary.
    Plot {
        /// `summary.json` produced by the sweep.
        #[arg(long)]
        summary: PathBuf,
    },
    /// End-to-end real-data run: time series to Table-style report.
    Pipeline,
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::config("this command requires --out <dir>"))
}

fn config_path(cli: &Cli) -> Result<PathBuf> {
    cli.config
        .clone()
        .ok_or_else(|| Error::config("this command requires --config <json>"))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(Error::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::config(format!("cannot configure {workers} workers: {e}")))?;
    }
    match &cli.command {
        Command::Simulate {
            n,
            k,
            noise_weight,
            replicas,
            base_healthy,
            base_patient,
            timepoints,
            factors,
            out_dir,
        } => {
            let base = match (base_healthy, base_patient) {
                (Some(h), Some(p)) => BaseSource::Files {
                    healthy: h.clone(),
                    patient: p.clone(),
                },
                (None, None) => BaseSource::Synthetic {
                    timepoints: *timepoints,
                    factors: *factors,
                },
                _ => {
                    return Err(Error::config(
                        "--base-healthy and --base-patient must be given together",
                    ))
                }
            };
            let cfg = SimulationConfig {
                roi_count: *n,
                modified_roi_count: *k,
                noise_weight: *noise_weight,
                replicas_per_class: *replicas,
                seed: cli.seed.unwrap_or(0),
                base,
            };
            let (dataset, truth) = generate_dataset(&cfg)?;
            let manifest = io::save_dataset(&dataset, out_dir)?;
            write_json(&truth, &out_dir.join("ground_truth.json"))?;
            println!(
                "wrote {} instances ({} per class) to {}",
                dataset.len(),
                replicas,
                manifest.display()
            );
            Ok(())
        }
        Command::Connect {
            input,
            metric,
            window,
            cost,
            path_variant,
            znorm,
            allow_constant,
            output,
            export_csv,
        } => {
            let ts = io::load_timeseries(input)?;
            let dtw_cfg = |w: &Option<usize>| -> Result<DtwConfig> {
                let w = w.ok_or_else(|| Error::config("--window is required for dtw/path metrics"))?;
                Ok(DtwConfig::new(w)
                    .with_cost(match cost {
                        CostArg::Squared => CostFunction::SquaredDifference,
                        CostArg::Absolute => CostFunction::AbsoluteDifference,
                    })
                    .with_znormalize(matches!(znorm, SwitchArg::On)))
            };
            let mut job = match metric {
                MetricArg::Correlation => ConnectivityJob::correlation(),
                MetricArg::Dtw => ConnectivityJob::dtw_distance(dtw_cfg(window)?),
                MetricArg::Path => ConnectivityJob::path_length(
                    dtw_cfg(window)?,
                    match path_variant {
                        PathVariantArg::Excess => PathVariant::Excess,
                        PathVariantArg::Relative => PathVariant::Relative,
                    },
                ),
            };
            if *allow_constant {
                job.constant_policy = ConstantSeriesPolicy::SubstituteZero;
            }
            let matrix = connectivity_matrix(&ts, &job)?;
            io::save_matrix(&matrix, output)?;
            if *export_csv {
                io::export_matrix_csv(&matrix, &output.with_extension("csv"))?;
            }
            println!(
                "wrote {}x{} {} matrix to {}",
                matrix.size(),
                matrix.size(),
                matrix.metric(),
                output.display()
            );
            Ok(())
        }
        Command::Train {
            manifest,
            out_params,
            out_history,
        } => {
            let settings: TrainSettings = settings::load_config(&config_path(&cli)?)?;
            let dataset = io::load_dataset(manifest)?;
            let spec = settings.model_spec(dataset.roi_count, dataset.channel_metrics.len())?;
            let cfg = settings.train_config(cli.seed)?;
            let prepared = nn::prepare_dataset(&spec, &dataset)?;
            let subset: Vec<usize> = (0..dataset.len()).collect();
            let (store, history) = nn::train(&spec, &prepared, &subset, &cfg)?;
            nn::save_params(&store, out_params)?;
            if let Some(path) = out_history {
                write_json(&history, path)?;
            }
            println!(
                "trained {} on {} instances for {} epochs; final loss {:.6}",
                spec.kind,
                dataset.len(),
                cfg.epochs,
                history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Crossval {
            manifest,
            folds,
            grouped,
            report,
        } => {
            let settings: TrainSettings = settings::load_config(&config_path(&cli)?)?;
            let dataset = io::load_dataset(manifest)?;
            let spec = settings.model_spec(dataset.roi_count, dataset.channel_metrics.len())?;
            let cfg = settings.train_config(cli.seed)?;
            let assignment = if *grouped {
                grouped_kfold(&dataset, *folds, cfg.seed)?
            } else {
                plain_kfold(&dataset, *folds, cfg.seed)?
            };
            let result = run_crossval(&dataset, &spec, &cfg, &assignment)?;
            write_json(&result, report)?;
            println!(
                "{}: pooled accuracy {:.4}, AUC {:.4} over n={} (baseline {:.4})",
                result.model, result.pooled_accuracy, result.pooled_auc, result.n, result.baseline_accuracy
            );
            Ok(())
        }
        Command::Sweep => {
            let mut cfg: SweepConfig = settings::load_config(&config_path(&cli)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let dir = out_dir(&cli)?;
            let summary = sweep::run_sweep(&cfg, &dir)?;
            let failed = summary.cells.iter().filter(|c| c.error.is_some()).count();
            println!(
                "sweep complete: {} cells ({} failed), summary at {}",
                summary.cells.len(),
                failed,
                dir.join("summary.json").display()
            );
            Ok(())
        }
        Command::Baseline { n } => {
            if *n == 0 {
                return Err(Error::config("--n must be at least 1"));
            }
            let (k, accuracy) = baseline_accuracy(*n);
            println!(
                "{}",
                serde_json::json!({ "n": n, "k": k, "accuracy": accuracy })
            );
            Ok(())
        }
        Command::Compare { a, b, labels } => {
            let read_labels = |path: &Path| -> Result<Vec<u8>> {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::format(path, format!("cannot open: {e}")))?;
                serde_json::from_str(&text).map_err(|e| Error::format(path, format!("label json: {e}")))
            };
            let preds_a = read_labels(a)?;
            let preds_b = read_labels(b)?;
            let truth = read_labels(labels)?;
            let p = compare_classifiers(&preds_a, &preds_b, &truth)?;
            println!("{}", serde_json::json!({ "p_value": p }));
            Ok(())
        }
        Command::Analyze {
            params,
            spec,
            truth,
            top_k,
        } => {
            let spec: ModelSpec = settings::load_config(spec)?;
            let store = nn::load_params(params)?;
            store.validate_shapes(&spec).map_err(|e| Error::data(e.to_string()))?;
            let dir = out_dir(&cli)?;
            std::fs::create_dir_all(&dir)?;
            let profile = importance_profile(&store, &spec)?;
            write_importance_csv(&profile, &dir.join("importance.csv"))?;
            write_json(&profile, &dir.join("importance.json"))?;
            if let Some(truth_path) = truth {
                let truth: connectome_core::simulator::GroundTruth = settings::load_config(truth_path)?;
                let reports: Vec<RecoveryReport> = profile
                    .roi
                    .iter()
                    .enumerate()
                    .map(|(c, imp)| {
                        let (hits, top) = recovery_score(imp, &truth, *top_k);
                        RecoveryReport {
                            channel: c,
                            top_k: top,
                            hits,
                            truth: truth.modified_roi_indices.clone(),
                        }
                    })
                    .collect();
                write_json(&reports, &dir.join("recovery.json"))?;
                for r in &reports {
                    println!(
                        "channel {}: {}/{} ground-truth ROIs in top {} {:?}",
                        r.channel,
                        r.hits,
                        r.truth.len(),
                        top_k,
                        r.top_k
                    );
                }
            } else {
                println!("importance profiles written to {}", dir.display());
            }
            Ok(())
        }
        Command::Plot { summary } => {
            let text = std::fs::read_to_string(summary)
                .map_err(|e| Error::format(summary, format!("cannot open: {e}")))?;
            let summary_data: sweep::SweepSummary = serde_json::from_str(&text)
                .map_err(|e| Error::format(summary, format!("summary json: {e}")))?;
            let dir = out_dir(&cli)?;
            sweep::plot_summary(&summary_data, &dir)?;
            println!("plots written to {}", dir.display());
            Ok(())
        }
        Command::Pipeline => {
            let path = config_path(&cli)?;
            let mut cfg: PipelineConfig = settings::load_config(&path)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let dir = out_dir(&cli)?;
            let report = pipeline::run_pipeline(&cfg, &base_dir, &dir)?;
            println!(
                "pipeline complete: n={} sessions, {} subjects, {} folds; report at {}",
                report.n,
                report.subjects,
                report.folds,
                dir.join("report.json").display()
            );
            for cell in &report.cells {
                println!(
                    "  {:<8} {:<24} accuracy {:.4}  AUC {:.4}",
                    cell.model, cell.channel_set, cell.pooled_accuracy, cell.pooled_auc
                );
            }
            Ok(())
        }
    }
}

/// Exit-code contract: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Format { .. } | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::Numerical(_) => 4,
    }
}

#[allow(unused)]
fn metric_of(arg: MetricArg) -> ConnectivityMetric {
    match arg {
        MetricArg::Correlation => ConnectivityMetric::Correlation,
        MetricArg::Dtw => ConnectivityMetric::DtwDistance,
        MetricArg::Path => ConnectivityMetric::PathLength,
    }
}
