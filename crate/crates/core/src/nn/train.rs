//! Mini-batch training and prediction over datasets.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, domain};
use crate::types::Dataset;

use super::backward::forward_backward;
use super::forward::{forward_batch, BatchInput, DropoutPlan, DropoutSites};
use super::optim::{adam_step, sgd_step, AdamConfig, AdamState, OptimizerKind};
use super::spec::{ModelKind, ModelSpec};
use super::store::ParamStore;

/// Training hyperparameters. `seed` drives initialization, epoch shuffling
/// and dropout through independent derived streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub keep_prob: f64,
    pub optimizer: OptimizerKind,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub dropout_sites: DropoutSites,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl TrainConfig {
    /// Per-architecture defaults: Adam at 1e-4 for the convolutional and
    /// deep models, SGD at 1e-2 for the simple network; batch 16, 100
    /// epochs, keep probability 0.6.
    pub fn defaults_for(kind: ModelKind) -> Self {
        let (optimizer, learning_rate) = match kind {
            ModelKind::Simple => (OptimizerKind::Sgd, 1e-2),
            ModelKind::Ccnn | ModelKind::Deep => (OptimizerKind::Adam, 1e-4),
        };
        TrainConfig {
            learning_rate,
            batch_size: 16,
            epochs: 100,
            keep_prob: 0.6,
            optimizer,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_epsilon(),
            seed: 0,
            dropout_sites: DropoutSites::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::config("keep_prob must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Model-ready view of a dataset, built once and shared across folds.
///
/// The CCNN path borrows each instance's channel matrices directly; the
/// fully connected path materializes the concatenated upper-triangle
/// feature matrix (one row per instance, channels in declared order).
pub enum PreparedInputs<'a> {
    Matrices(Vec<Vec<ArrayView2<'a, f64>>>),
    Features(Array2<f64>),
}

pub struct PreparedDataset<'a> {
    pub inputs: PreparedInputs<'a>,
    pub labels: Vec<u8>,
}

/// Assemble the representation `spec` consumes from `dataset`.
pub fn prepare_dataset<'a>(spec: &ModelSpec, dataset: &'a Dataset) -> Result<PreparedDataset<'a>> {
    spec.validate()?;
    dataset.validate()?;
    if dataset.roi_count != spec.roi_count {
        return Err(Error::data(format!(
            "dataset has {} ROIs, spec declares {}",
            dataset.roi_count, spec.roi_count
        )));
    }
    if dataset.channel_metrics.len() != spec.channels {
        return Err(Error::data(format!(
            "dataset has {} channels, spec declares {}",
            dataset.channel_metrics.len(),
            spec.channels
        )));
    }
    let labels = dataset.labels();
    let inputs = match spec.kind {
        ModelKind::Ccnn => PreparedInputs::Matrices(
            dataset
                .instances
                .iter()
                .map(|inst| inst.channels.iter().map(|c| c.values().view()).collect())
                .collect(),
        ),
        ModelKind::Simple | ModelKind::Deep => {
            let width = spec.input_features();
            let mut features = Array2::zeros((dataset.len(), width));
            for (i, inst) in dataset.instances.iter().enumerate() {
                let mut offset = 0;
                for channel in &inst.channels {
                    let tri = channel.vectorize_upper_triangle();
                    features
                        .row_mut(i)
                        .slice_mut(ndarray::s![offset..offset + tri.len()])
                        .assign(&ndarray::ArrayView1::from(&tri[..]));
                    offset += tri.len();
                }
            }
            PreparedInputs::Features(features)
        }
    };
    Ok(PreparedDataset { inputs, labels })
}

fn gather_batch<'a>(prepared: &'a PreparedDataset, indices: &[usize]) -> BatchInput<'a> {
    match &prepared.inputs {
        PreparedInputs::Matrices(instances) => {
            BatchInput::Matrices(indices.iter().map(|&i| instances[i].clone()).collect())
        }
        PreparedInputs::Features(features) => BatchInput::Features(features.select(Axis(0), indices)),
    }
}

fn gather_labels(prepared: &PreparedDataset, indices: &[usize]) -> Vec<u8> {
    indices.iter().map(|&i| prepared.labels[i]).collect()
}

/// Train on the given subset of instances (all of them when `subset` covers
/// the dataset). Returns the trained parameters and the per-epoch mean loss.
///
/// Deterministic for a fixed config: batches run sequentially, instance
/// gradients accumulate in batch order, and all randomness comes from
/// streams derived from `cfg.seed`.
pub fn train(
    spec: &ModelSpec,
    prepared: &PreparedDataset,
    subset: &[usize],
    cfg: &TrainConfig,
) -> Result<(ParamStore, Vec<f64>)> {
    spec.validate()?;
    cfg.validate()?;
    if subset.is_empty() {
        return Err(Error::data("training subset is empty"));
    }
    {
        let mut seen = [false; 2];
        for &i in subset {
            seen[prepared.labels[i] as usize] = true;
        }
        if !(seen[0] && seen[1]) {
            return Err(Error::data("training subset must contain both classes"));
        }
    }

    let mut store = ParamStore::init(spec, seeds::child_seed(cfg.seed, domain::TRAIN_INIT, 0));
    let mut adam_state = AdamState::zeros_like(&store);
    let mut shuffle_rng = seeds::child_rng(cfg.seed, domain::TRAIN_SHUFFLE, 0);
    let mut dropout_rng = seeds::child_rng(cfg.seed, domain::TRAIN_DROPOUT, 0);
    let site_dims = DropoutPlan::site_dims(spec);
    let sites = match spec.kind {
        ModelKind::Simple => DropoutSites {
            first: false,
            second: false,
            conv: false,
        },
        ModelKind::Ccnn | ModelKind::Deep => cfg.dropout_sites,
    };

    let mut order: Vec<usize> = subset.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = gather_batch(prepared, chunk);
            let labels = gather_labels(prepared, chunk);
            let plan = DropoutPlan::draw(
                &mut dropout_rng,
                cfg.keep_prob,
                sites,
                labels.len(),
                site_dims,
            );
            let (loss, grads) = forward_backward(spec, &store, &batch, &labels, &plan);
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {batch_no}; parameter norm^2 {:.6e}",
                    store.squared_norm()
                )));
            }
            match cfg.optimizer {
                OptimizerKind::Adam => {
                    adam_step(&mut store, &grads, &mut adam_state, cfg.learning_rate, &cfg.adam())
                }
                OptimizerKind::Sgd => sgd_step(&mut store, &grads, cfg.learning_rate),
            }
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    if !store.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite parameters after final step; parameter norm^2 {:.6e}",
            store.squared_norm()
        )));
    }
    Ok((store, history))
}

/// Evaluate one instance: predicted label (argmax, ties toward the lower
/// class index) and the class-1 probability used as the ranking score.
pub fn predict(
    spec: &ModelSpec,
    store: &ParamStore,
    prepared: &PreparedDataset,
    index: usize,
) -> (u8, f64) {
    let batch = gather_batch(prepared, &[index]);
    let cache = forward_batch(spec, store, &batch, &DropoutPlan::eval());
    let row = cache.probs.row(0);
    let mut best = 0usize;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    (best as u8, row[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ConnectivityMatrix, ConnectivityMetric, LabeledInstance};
    use ndarray::array;

    /// Two-ROI instances whose single feature separates the classes.
    fn separable_dataset(n_per_class: usize) -> Dataset {
        let mut instances = Vec::new();
        for i in 0..n_per_class {
            for (label, base) in [(0u8, -0.6), (1u8, 0.6)] {
                let v = base + 0.1 * (i as f64 / n_per_class as f64);
                let m = ConnectivityMatrix::new(
                    ConnectivityMetric::Correlation,
                    array![[1.0, v], [v, 1.0]],
                )
                .unwrap();
                instances.push(
                    LabeledInstance::new(
                        format!("i{label}_{i}"),
                        label,
                        format!("s{label}_{i}"),
                        vec![m],
                    )
                    .unwrap(),
                );
            }
        }
        Dataset::new(2, vec![ConnectivityMetric::Correlation], instances).unwrap()
    }

    #[test]
    fn simple_network_learns_separable_data() {
        let dataset = separable_dataset(10);
        let spec = ModelSpec::new(ModelKind::Simple, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let subset: Vec<usize> = (0..dataset.len()).collect();
        let mut cfg = TrainConfig::defaults_for(ModelKind::Simple).with_seed(3);
        cfg.epochs = 200;
        cfg.learning_rate = 0.5;
        let (store, history) = train(&spec, &prepared, &subset, &cfg).unwrap();
        assert!(history.iter().all(|l| l.is_finite()));
        let correct = subset
            .iter()
            .filter(|&&i| predict(&spec, &store, &prepared, i).0 == prepared.labels[i])
            .count();
        assert_eq!(correct, dataset.len(), "training accuracy must reach 1.0");
        // loss should have decreased
        assert!(history.last().unwrap() < history.first().unwrap());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let dataset = separable_dataset(6);
        let spec = ModelSpec::new(ModelKind::Deep, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let subset: Vec<usize> = (0..dataset.len()).collect();
        let mut cfg = TrainConfig::defaults_for(ModelKind::Deep).with_seed(11);
        cfg.epochs = 5;
        let (a, ha) = train(&spec, &prepared, &subset, &cfg).unwrap();
        let (b, hb) = train(&spec, &prepared, &subset, &cfg).unwrap();
        assert_eq!(ha, hb);
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn keep_prob_one_makes_train_and_eval_agree() {
        let dataset = separable_dataset(4);
        let spec = ModelSpec::new(ModelKind::Ccnn, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let store = ParamStore::init(&spec, 21);
        let batch = gather_batch(&prepared, &[0, 1]);
        let mut rng = seeds::rng_from(4);
        let dims = DropoutPlan::site_dims(&spec);
        let plan = DropoutPlan::draw(&mut rng, 1.0, DropoutSites::default(), 2, dims);
        let train_cache = forward_batch(&spec, &store, &batch, &plan);
        let eval_cache = forward_batch(&spec, &store, &batch, &DropoutPlan::eval());
        for (a, b) in train_cache.probs.iter().zip(eval_cache.probs.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn prediction_is_pure_and_bounded() {
        let dataset = separable_dataset(3);
        let spec = ModelSpec::new(ModelKind::Simple, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let store = ParamStore::init(&spec, 8);
        let (l1, s1) = predict(&spec, &store, &prepared, 0);
        let (l2, s2) = predict(&spec, &store, &prepared, 0);
        assert_eq!((l1, s1.to_bits()), (l2, s2.to_bits()));
        assert!((0.0..=1.0).contains(&s1));
    }

    #[test]
    fn uniform_probabilities_break_ties_toward_class_zero() {
        let dataset = separable_dataset(2);
        let spec = ModelSpec::new(ModelKind::Simple, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let mut store = ParamStore::init(&spec, 8);
        for a in store.arrays_mut() {
            a.fill(0.0);
        }
        let (label, score) = predict(&spec, &store, &prepared, 0);
        assert_eq!(label, 0);
        assert_eq!(score, 0.5);
    }

    #[test]
    fn single_class_subset_is_rejected() {
        let dataset = separable_dataset(3);
        let spec = ModelSpec::new(ModelKind::Simple, 2, 1);
        let prepared = prepare_dataset(&spec, &dataset).unwrap();
        let only_zero: Vec<usize> = (0..dataset.len())
            .filter(|&i| prepared.labels[i] == 0)
            .collect();
        let cfg = TrainConfig::defaults_for(ModelKind::Simple).with_seed(1).with_epochs(1);
        assert!(train(&spec, &prepared, &only_zero, &cfg).is_err());
    }
}
