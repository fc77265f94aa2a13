//! Cross-validation, classification metrics and binomial significance
//! procedures.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict, prepare_dataset, train, ModelSpec, TrainConfig};
use crate::seeds::{self, domain};
use crate::types::{Dataset, FoldAssignment};

/// Subject-grouped k-fold assignment: subjects are shuffled (seeded) and
/// dealt round-robin across folds, so all sessions of one subject share a
/// fold.
pub fn grouped_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::data("fold count must be positive"));
    }
    let mut subjects: Vec<&str> = Vec::new();
    for inst in &dataset.instances {
        if !subjects.contains(&inst.subject_id.as_str()) {
            subjects.push(&inst.subject_id);
        }
    }
    if k > subjects.len() {
        return Err(Error::data(format!(
            "cannot split {} subjects into {k} folds",
            subjects.len()
        )));
    }
    let mut rng = seeds::child_rng(seed, domain::FOLD_SPLIT, 0);
    subjects.shuffle(&mut rng);
    let fold_of_subject: BTreeMap<&str, usize> = subjects
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i % k))
        .collect();
    let assignment: BTreeMap<String, usize> = dataset
        .instances
        .iter()
        .map(|inst| (inst.id.clone(), fold_of_subject[inst.subject_id.as_str()]))
        .collect();
    FoldAssignment::new(k, assignment)
}

/// Plain k-fold over `n` items: seeded shuffle, fold sizes differing by at
/// most one. Returns the fold index of each item position.
pub fn plain_kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::data("fold count must be positive"));
    }
    if k > n {
        return Err(Error::data(format!("cannot split {n} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeds::child_rng(seed, domain::FOLD_SPLIT, 0);
    order.shuffle(&mut rng);
    let base = n / k;
    let remainder = n % k;
    let mut folds = vec![0usize; n];
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < remainder);
        for _ in 0..size {
            folds[order[cursor]] = fold;
            cursor += 1;
        }
    }
    Ok(folds)
}

/// Plain k-fold assignment over a dataset's instances.
pub fn plain_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let folds = plain_kfold_indices(dataset.len(), k, seed)?;
    let assignment: BTreeMap<String, usize> = dataset
        .instances
        .iter()
        .zip(&folds)
        .map(|(inst, &f)| (inst.id.clone(), f))
        .collect();
    FoldAssignment::new(k, assignment)
}

/// Proportion of correctly classified instances.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::data(format!(
            "need equal non-empty prediction/label lists, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney rank statistic with midrank
/// tie handling: the probability that a random positive outranks a random
/// negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::data("need equal non-empty score/label lists"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::data("AUC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // midrank of the tie group spanning positions i..=j (1-based ranks)
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = positive_rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Cumulative binomial distribution: probability of at most `k` successes in
/// `n` trials at success probability `p`. Computed with log-domain binomial
/// coefficients (Kahan-compensated), absolute error below 1e-9 for n up to
/// 10^4.
pub fn binomial_cdf(n: u64, k: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::data(format!("k={k} exceeds n={n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::data(format!("p={p} outside [0, 1]")));
    }
    if k == n {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut ln_coeff = 0.0f64; // ln C(n, 0)
    let mut coeff_comp = 0.0f64;
    let mut sum = 0.0f64;
    let mut sum_comp = 0.0f64;
    for i in 0..=k {
        let term = (ln_coeff + i as f64 * ln_p + (n - i) as f64 * ln_q).exp();
        // Kahan compensation on the running sum
        let y = term - sum_comp;
        let t = sum + y;
        sum_comp = (t - sum) - y;
        sum = t;
        // advance ln C(n, i) -> ln C(n, i+1)
        let step = ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        let y = step - coeff_comp;
        let t = ln_coeff + y;
        coeff_comp = (t - ln_coeff) - y;
        ln_coeff = t;
    }
    Ok(sum.min(1.0))
}

/// Chance-level baseline: the smallest k whose cumulative binomial
/// probability at p = 0.5 reaches 0.95, and the accuracy k/n it implies.
pub fn baseline_accuracy(n: u64) -> (u64, f64) {
    debug_assert!(n >= 1);
    let ln_half = 0.5f64.ln();
    let mut ln_coeff = 0.0f64;
    let mut cdf = 0.0f64;
    for k in 0..=n {
        cdf += (ln_coeff + n as f64 * ln_half).exp();
        if cdf >= 0.95 || k == n {
            return (k, k as f64 / n as f64);
        }
        ln_coeff += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
    }
    (n, 1.0)
}

/// Binomial comparison of two classifiers on shared test predictions:
/// restrict to instances where exactly one classifier is correct and compute
/// the two-sided exact binomial p-value at chance 0.5. No discordant
/// instances yields p = 1.
pub fn compare_classifiers(preds_a: &[u8], preds_b: &[u8], labels: &[u8]) -> Result<f64> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(Error::data("prediction/label lengths disagree"));
    }
    let mut discordant = 0u64;
    let mut a_wins = 0u64;
    for ((&a, &b), &l) in preds_a.iter().zip(preds_b).zip(labels) {
        let a_ok = a == l;
        let b_ok = b == l;
        if a_ok != b_ok {
            discordant += 1;
            if a_ok {
                a_wins += 1;
            }
        }
    }
    if discordant == 0 {
        return Ok(1.0);
    }
    let tail = a_wins.min(discordant - a_wins);
    Ok((2.0 * binomial_cdf(discordant, tail, 0.5)?).min(1.0))
}

/// One pooled test-set prediction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: u8,
    pub predicted: u8,
    pub score: f64,
    pub fold: usize,
}

/// Significance comparison against another model's predictions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub other: String,
    pub p_value: f64,
}

/// Cross-validation outcome: per-fold and pooled metrics, the binomial
/// baseline for the pooled test size, and the pooled predictions themselves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n: usize,
    pub fold_count: usize,
    pub per_fold_accuracy: Vec<f64>,
    pub pooled_accuracy: f64,
    pub fold_mean_accuracy: f64,
    pub pooled_auc: f64,
    pub baseline_k: u64,
    pub baseline_accuracy: f64,
    pub predictions: Vec<PredictionRecord>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    pub fn predicted_labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.predicted).collect()
    }

    pub fn true_labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.label).collect()
    }
}

/// Train on each fold's complement and evaluate on the held-out instances;
/// pool all held-out predictions for the aggregate metrics.
///
/// Folds run in parallel; per-fold training seeds derive from
/// `cfg.seed` and the fold index, and predictions are pooled in dataset
/// order, so the report is identical for any worker count.
pub fn run_crossval(
    dataset: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    folds: &FoldAssignment,
) -> Result<EvalReport> {
    folds.validate_for(dataset)?;
    if !dataset.has_both_labels() {
        return Err(Error::data("dataset must contain both classes"));
    }
    let prepared = prepare_dataset(spec, dataset)?;

    let fold_results: Result<Vec<Vec<PredictionRecord>>> = (0..folds.fold_count)
        .into_par_iter()
        .map(|fold| -> Result<Vec<PredictionRecord>> {
            let train_idx = folds.train_indices(dataset, fold);
            let test_idx = folds.test_indices(dataset, fold);
            let fold_cfg = cfg
                .clone()
                .with_seed(seeds::child_seed(cfg.seed, domain::FOLD_TRAIN, fold as u64));
            let (store, _) = train(spec, &prepared, &train_idx, &fold_cfg)?;
            Ok(test_idx
                .into_iter()
                .map(|i| {
                    let (predicted, score) = predict(spec, &store, &prepared, i);
                    PredictionRecord {
                        id: dataset.instances[i].id.clone(),
                        label: prepared.labels[i],
                        predicted,
                        score,
                        fold,
                    }
                })
                .collect())
        })
        .collect();
    let fold_results = fold_results?;

    let per_fold_accuracy: Vec<f64> = fold_results
        .iter()
        .map(|records| {
            let preds: Vec<u8> = records.iter().map(|r| r.predicted).collect();
            let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
            accuracy(&preds, &labels)
        })
        .collect::<Result<_>>()?;

    // pool in dataset order for deterministic serialization
    let mut by_id: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for record in fold_results.iter().flatten() {
        by_id.insert(&record.id, record);
    }
    let predictions: Vec<PredictionRecord> = dataset
        .instances
        .iter()
        .map(|inst| (*by_id.get(inst.id.as_str()).expect("every instance predicted")).clone())
        .collect();

    let preds: Vec<u8> = predictions.iter().map(|r| r.predicted).collect();
    let labels: Vec<u8> = predictions.iter().map(|r| r.label).collect();
    let scores: Vec<f64> = predictions.iter().map(|r| r.score).collect();
    let pooled_accuracy = accuracy(&preds, &labels)?;
    let pooled_auc = auc(&scores, &labels)?;
    let fold_mean_accuracy =
        per_fold_accuracy.iter().sum::<f64>() / per_fold_accuracy.len() as f64;
    let n = predictions.len();
    let (baseline_k, baseline_acc) = baseline_accuracy(n as u64);

    Ok(EvalReport {
        model: spec.kind.name().to_string(),
        n,
        fold_count: folds.fold_count,
        per_fold_accuracy,
        pooled_accuracy,
        fold_mean_accuracy,
        pooled_auc,
        baseline_k,
        baseline_accuracy: baseline_acc,
        predictions,
        comparisons: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ConnectivityMatrix, ConnectivityMetric, LabeledInstance};
    use ndarray::array;

    fn dataset_with_subjects(sessions_per_subject: &[usize]) -> Dataset {
        let mut instances = Vec::new();
        for (s, &count) in sessions_per_subject.iter().enumerate() {
            for r in 0..count {
                let v = 0.1 + 0.8 * ((s * 7 + r) % 10) as f64 / 10.0;
                let m = ConnectivityMatrix::new(
                    ConnectivityMetric::Correlation,
                    array![[1.0, v], [v, 1.0]],
                )
                .unwrap();
                instances.push(
                    LabeledInstance::new(
                        format!("s{s}_r{r}"),
                        (s % 2) as u8,
                        format!("subject_{s}"),
                        vec![m],
                    )
                    .unwrap(),
                );
            }
        }
        Dataset::new(2, vec![ConnectivityMetric::Correlation], instances).unwrap()
    }

    #[test]
    fn grouped_kfold_never_splits_a_subject() {
        let dataset = dataset_with_subjects(&[3, 2, 4, 1, 2, 3, 2, 5, 1, 2]);
        let folds = grouped_kfold(&dataset, 4, 9).unwrap();
        let mut subject_fold: BTreeMap<&str, usize> = BTreeMap::new();
        for inst in &dataset.instances {
            let f = folds.fold_of(&inst.id).unwrap();
            if let Some(&prev) = subject_fold.get(inst.subject_id.as_str()) {
                assert_eq!(prev, f, "subject {} split across folds", inst.subject_id);
            }
            subject_fold.insert(&inst.subject_id, f);
        }
    }

    #[test]
    fn grouped_kfold_balances_subjects() {
        // 49 subjects in 7 folds: exactly 7 subjects per fold
        let dataset = dataset_with_subjects(&vec![3; 49]);
        let folds = grouped_kfold(&dataset, 7, 1).unwrap();
        let mut subjects_per_fold = vec![std::collections::BTreeSet::new(); 7];
        for inst in &dataset.instances {
            let f = folds.fold_of(&inst.id).unwrap();
            subjects_per_fold[f].insert(inst.subject_id.clone());
        }
        for set in subjects_per_fold {
            assert_eq!(set.len(), 7);
        }
    }

    #[test]
    fn grouped_kfold_is_deterministic_and_seed_sensitive() {
        let dataset = dataset_with_subjects(&[2, 3, 1, 2, 4, 2, 3, 1]);
        let a = grouped_kfold(&dataset, 3, 5).unwrap();
        let b = grouped_kfold(&dataset, 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grouped_kfold_rejects_too_many_folds() {
        let dataset = dataset_with_subjects(&[1, 1, 1]);
        assert!(grouped_kfold(&dataset, 4, 0).is_err());
    }

    #[test]
    fn plain_kfold_sizes() {
        let folds = plain_kfold_indices(150, 10, 3).unwrap();
        let mut counts = vec![0; 10];
        for &f in &folds {
            counts[f] += 1;
        }
        assert!(counts.iter().all(|&c| c == 15));

        let folds = plain_kfold_indices(7, 3, 3).unwrap();
        let mut counts = vec![0; 3];
        for &f in &folds {
            counts[f] += 1;
        }
        counts.sort_unstable();
        assert_eq!(counts, vec![2, 2, 3]);
    }

    #[test]
    fn plain_kfold_is_a_partition() {
        for n in [5usize, 12, 37] {
            for k in [2usize, 3, 5] {
                let folds = plain_kfold_indices(n, k, 17).unwrap();
                assert_eq!(folds.len(), n);
                assert!(folds.iter().all(|&f| f < k));
            }
        }
    }

    #[test]
    fn accuracy_reference_points() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        let preds: Vec<u8> = (0..146).map(|i| u8::from(i < 105)).collect();
        let labels: Vec<u8> = vec![1; 146];
        let acc = accuracy(&preds, &labels).unwrap();
        assert!((acc - 105.0 / 146.0).abs() < 1e-15);
        assert!((acc - 0.719).abs() < 5e-4);
    }

    #[test]
    fn auc_reference_points() {
        // perfectly separated
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        // all scores equal -> 0.5 by the tie convention
        assert_eq!(auc(&[0.4; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), 0.5);
        // mixed case, oracle = exhaustive pairwise comparison
        let scores = [0.9, 0.8, 0.3, 0.2];
        let labels = [1u8, 0, 1, 0];
        let mut wins = 0.0;
        let mut total = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let expected = wins / total;
        assert_eq!(expected, 0.75);
        assert_eq!(auc(&scores, &labels).unwrap(), expected);
    }

    #[test]
    fn auc_label_flip_complement() {
        let scores = [0.1, 0.7, 0.4, 0.4, 0.9, 0.2, 0.6];
        let labels = [0u8, 1, 0, 1, 1, 0, 0];
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let a = auc(&scores, &labels).unwrap();
        let b = auc(&scores, &flipped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn binomial_cdf_matches_paper_anchors() {
        // n = 146 anchor
        let f146 = binomial_cdf(146, 83, 0.5).unwrap();
        assert!((f146 - 0.959).abs() < 1e-3, "{f146}");
        // exact value of the n = 150 expression (see acceptance notes)
        let f150 = binomial_cdf(150, 85, 0.5).unwrap();
        assert!((f150 - 0.956_964_448_407).abs() < 1e-9, "{f150}");
    }

    #[test]
    fn binomial_cdf_edge_cases() {
        assert_eq!(binomial_cdf(10, 10, 0.3).unwrap(), 1.0);
        assert_eq!(binomial_cdf(5, 2, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_cdf(5, 2, 1.0).unwrap(), 0.0);
        assert!(binomial_cdf(5, 6, 0.5).is_err());
    }

    #[test]
    fn binomial_cdf_is_monotone_in_k() {
        let mut prev = 0.0;
        for k in 0..=40 {
            let f = binomial_cdf(40, k, 0.37).unwrap();
            assert!(f >= prev - 1e-15);
            prev = f;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn baseline_accuracy_anchors() {
        assert_eq!(baseline_accuracy(150), (85, 85.0 / 150.0));
        let (k, acc) = baseline_accuracy(150);
        assert_eq!(k, 85);
        assert!((acc - 0.5667).abs() < 5e-5);
        let (k, acc) = baseline_accuracy(146);
        assert_eq!(k, 83);
        assert!((acc - 0.5685).abs() < 5e-5);
        assert_eq!(baseline_accuracy(1), (1, 1.0));
    }

    #[test]
    fn compare_classifiers_reference_points() {
        let labels = vec![1u8; 10];
        // identical predictions
        let p = compare_classifiers(&[1; 10], &[1; 10], &labels).unwrap();
        assert_eq!(p, 1.0);
        // A wins all 10 discordant instances
        let p = compare_classifiers(&[1; 10], &[0; 10], &labels).unwrap();
        assert!((p - 2.0 * 0.5f64.powi(10)).abs() < 1e-12);
        // split 5/5 -> clamped to 1
        let mut b = vec![0u8; 10];
        let mut a = vec![1u8; 10];
        for i in 0..5 {
            a[i] = 0;
            b[i] = 1;
        }
        let p = compare_classifiers(&a, &b, &labels).unwrap();
        assert_eq!(p, 1.0);
    }
}
