//! Configuration files: training settings, the sweep grid, and the
//! real-data pipeline. Unknown fields are rejected so typos fail fast.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use connectome_core::connectivity::{ConnectivityJob, ConstantSeriesPolicy, PathVariant};
use connectome_core::dtw::{CostFunction, DtwConfig};
use connectome_core::error::{Error, Result};
use connectome_core::nn::{DropoutSites, ModelKind, ModelSpec, OptimizerKind, TrainConfig};
use connectome_core::types::ConnectivityMetric;

/// Training configuration file. Only `model` is required; every other field
/// falls back to the per-architecture default (Adam 1e-4 for ccnn/deep, SGD
/// 1e-2 for simple; batch 16; 100 epochs; keep probability 0.6).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub model: Option<ModelKind>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub keep_prob: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub dropout_first: Option<bool>,
    pub dropout_second: Option<bool>,
    pub dropout_conv: Option<bool>,
    pub conv1_filters: Option<usize>,
    pub conv2_filters: Option<usize>,
    pub hidden: Option<usize>,
    pub classes: Option<usize>,
}

impl TrainSettings {
    pub fn model_kind(&self) -> Result<ModelKind> {
        self.model
            .ok_or_else(|| Error::config("training config must name a model (ccnn|simple|deep)"))
    }

    /// Build the architecture spec for a dataset with the given dimensions.
    pub fn model_spec(&self, roi_count: usize, channels: usize) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.model_kind()?, roi_count, channels);
        if let Some(v) = self.conv1_filters {
            spec.conv1_filters = v;
        }
        if let Some(v) = self.conv2_filters {
            spec.conv2_filters = v;
        }
        if let Some(v) = self.hidden {
            spec.hidden = v;
        }
        if let Some(v) = self.classes {
            spec.classes = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Resolve the hyperparameters, with `seed_override` (the CLI flag)
    /// taking precedence over the file.
    pub fn train_config(&self, seed_override: Option<u64>) -> Result<TrainConfig> {
        let kind = self.model_kind()?;
        let mut cfg = TrainConfig::defaults_for(kind);
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.keep_prob {
            cfg.keep_prob = v;
        }
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
        if let Some(v) = self.adam_beta1 {
            cfg.adam_beta1 = v;
        }
        if let Some(v) = self.adam_beta2 {
            cfg.adam_beta2 = v;
        }
        if let Some(v) = self.adam_epsilon {
            cfg.adam_epsilon = v;
        }
        cfg.dropout_sites = DropoutSites {
            first: self.dropout_first.unwrap_or(true),
            second: self.dropout_second.unwrap_or(true),
            conv: self.dropout_conv.unwrap_or(false),
        };
        cfg.seed = seed_override.or(self.seed).unwrap_or(0);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hyperparameter overrides shared by every model of a sweep or pipeline
/// run. Learning rates stay per-optimizer since the simple network's SGD
/// needs a far larger rate than Adam.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub keep_prob: Option<f64>,
    pub adam_learning_rate: Option<f64>,
    pub sgd_learning_rate: Option<f64>,
    /// Also mask the CCNN's row-convolution output (regularizes the large
    /// column-convolution weight block).
    pub dropout_conv: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, kind: ModelKind) -> TrainConfig {
        let mut cfg = TrainConfig::defaults_for(kind);
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.keep_prob {
            cfg.keep_prob = v;
        }
        match cfg.optimizer {
            OptimizerKind::Adam => {
                if let Some(v) = self.adam_learning_rate {
                    cfg.learning_rate = v;
                }
            }
            OptimizerKind::Sgd => {
                if let Some(v) = self.sgd_learning_rate {
                    cfg.learning_rate = v;
                }
            }
        }
        if let Some(v) = self.dropout_conv {
            cfg.dropout_sites.conv = v;
        }
        cfg
    }
}

fn default_modified_roi_counts() -> Vec<usize> {
    vec![1, 5, 10]
}

fn default_noise_weights() -> Vec<f64> {
    (1..=10).map(|w| w as f64).collect()
}

fn default_replicas() -> usize {
    75
}

fn default_sweep_folds() -> usize {
    10
}

fn default_pipeline_folds() -> usize {
    7
}

fn default_timepoints() -> usize {
    120
}

fn default_factors() -> usize {
    5
}

pub fn all_models() -> Vec<ModelKind> {
    vec![ModelKind::Simple, ModelKind::Deep, ModelKind::Ccnn]
}

/// Template pair loaded from `.cmx` files instead of the synthetic
/// generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePairFiles {
    pub healthy: PathBuf,
    pub patient: PathBuf,
}

/// Grid sweep configuration: modification levels x noise weights, each cell
/// simulated, cross-validated per model, and summarized.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub roi_count: usize,
    #[serde(default = "default_modified_roi_counts")]
    pub modified_roi_counts: Vec<usize>,
    #[serde(default = "default_noise_weights")]
    pub noise_weights: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas_per_class: usize,
    #[serde(default = "default_sweep_folds")]
    pub folds: usize,
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub base: Option<BasePairFiles>,
    #[serde(default = "default_timepoints")]
    pub timepoints: usize,
    #[serde(default = "default_factors")]
    pub factors: usize,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modified_roi_counts.is_empty() || self.noise_weights.is_empty() {
            return Err(Error::config("sweep grid must not be empty"));
        }
        if self.replicas_per_class == 0 {
            return Err(Error::config("replicas_per_class must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        for &k in &self.modified_roi_counts {
            if k == 0 || k >= self.roi_count {
                return Err(Error::config(format!(
                    "modified_roi_count {k} out of range for {} ROIs",
                    self.roi_count
                )));
            }
        }
        Ok(())
    }

    pub fn model_list(&self) -> Vec<ModelKind> {
        if self.models.is_empty() {
            all_models()
        } else {
            self.models.clone()
        }
    }
}

/// One channel definition for the real-data pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    pub metric: ConnectivityMetric,
    pub window: Option<usize>,
    pub cost: Option<CostFunction>,
    pub path_variant: Option<PathVariant>,
    pub znormalize: Option<bool>,
    #[serde(default)]
    pub allow_constant: bool,
}

impl ChannelSpec {
    pub fn job(&self) -> Result<ConnectivityJob> {
        let mut job = match self.metric {
            ConnectivityMetric::Correlation => ConnectivityJob::correlation(),
            ConnectivityMetric::DtwDistance | ConnectivityMetric::PathLength => {
                let window = self.window.ok_or_else(|| {
                    Error::config(format!(
                        "channel '{}' uses {} and must set a warping window",
                        self.name, self.metric
                    ))
                })?;
                let mut dtw = DtwConfig::new(window);
                if let Some(cost) = self.cost {
                    dtw.cost = cost;
                }
                if let Some(z) = self.znormalize {
                    dtw.znormalize = z;
                }
                if self.metric == ConnectivityMetric::DtwDistance {
                    ConnectivityJob::dtw_distance(dtw)
                } else {
                    ConnectivityJob::path_length(dtw, self.path_variant.unwrap_or(PathVariant::Relative))
                }
            }
        };
        if self.allow_constant {
            job.constant_policy = ConstantSeriesPolicy::SubstituteZero;
        }
        Ok(job)
    }
}

/// One recording session of the real-data pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEntry {
    pub id: String,
    pub subject_id: String,
    pub label: u8,
    /// ROI time-series CSV, relative to the config file's directory.
    pub timeseries: PathBuf,
}

/// End-to-end configuration for `connectome pipeline`: sessions, channel
/// definitions, the channel sets to evaluate, models, grouped CV and seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub sessions: Vec<SessionEntry>,
    pub channels: Vec<ChannelSpec>,
    /// Channel-name lists evaluated as model inputs; defaults to one set
    /// containing every defined channel.
    #[serde(default)]
    pub channel_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_pipeline_folds")]
    pub folds: usize,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sessions.is_empty() {
            return Err(Error::config("pipeline needs at least one session"));
        }
        if self.channels.is_empty() {
            return Err(Error::config("pipeline needs at least one channel definition"));
        }
        let mut ids = BTreeMap::new();
        for s in &self.sessions {
            if ids.insert(&s.id, ()).is_some() {
                return Err(Error::config(format!("duplicate session id '{}'", s.id)));
            }
            if s.label > 1 {
                return Err(Error::config(format!(
                    "session '{}' label must be 0 or 1, got {}",
                    s.id, s.label
                )));
            }
        }
        let mut names = BTreeMap::new();
        for c in &self.channels {
            if names.insert(&c.name, ()).is_some() {
                return Err(Error::config(format!("duplicate channel name '{}'", c.name)));
            }
            c.job()?;
        }
        for set in &self.channel_sets {
            if set.is_empty() {
                return Err(Error::config("channel set must not be empty"));
            }
            for name in set {
                if !self.channels.iter().any(|c| &c.name == name) {
                    return Err(Error::config(format!("channel set references unknown channel '{name}'")));
                }
            }
        }
        if self.folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        Ok(())
    }

    pub fn model_list(&self) -> Vec<ModelKind> {
        if self.models.is_empty() {
            all_models()
        } else {
            self.models.clone()
        }
    }

    pub fn channel_set_list(&self) -> Vec<Vec<String>> {
        if self.channel_sets.is_empty() {
            vec![self.channels.iter().map(|c| c.name.clone()).collect()]
        } else {
            self.channel_sets.clone()
        }
    }
}

/// Read and strictly parse a JSON config file, reporting violations as
/// configuration errors.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))
}
