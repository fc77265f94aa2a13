//! Property tests for the persistence formats, fold partitions and the
//! binomial/AUC procedures.

use std::collections::BTreeMap;

use connectome_core::eval::{auc, binomial_cdf, grouped_kfold, plain_kfold_indices};
use connectome_core::io::{load_matrix, save_matrix};
use connectome_core::types::{
    upper_triangle_len, ConnectivityMatrix, ConnectivityMetric, Dataset, LabeledInstance,
};
use ndarray::Array2;
use num_bigint::BigUint;
use proptest::prelude::*;

fn arbitrary_matrix() -> impl Strategy<Value = ConnectivityMatrix> {
    (2usize..8, any::<u64>(), 0u8..3).prop_map(|(n, seed, metric_code)| {
        let metric = ConnectivityMetric::from_code(metric_code).unwrap();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v = next();
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
            values[[i, i]] = metric.diagonal_value();
        }
        ConnectivityMatrix::new(metric, values).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cmx_round_trip_is_bit_identical(matrix in arbitrary_matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cmx");
        save_matrix(&matrix, &path).unwrap();
        let back = load_matrix(&path).unwrap();
        prop_assert_eq!(back.metric(), matrix.metric());
        prop_assert_eq!(back.size(), matrix.size());
        for (a, b) in back.values().iter().zip(matrix.values().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn upper_triangle_length_formula(matrix in arbitrary_matrix()) {
        let n = matrix.size();
        prop_assert_eq!(matrix.vectorize_upper_triangle().len(), upper_triangle_len(n));
        prop_assert_eq!(upper_triangle_len(n), n * (n - 1) / 2);
    }

    #[test]
    fn plain_folds_partition_indices(n in 1usize..200, k_raw in 1usize..20, seed in any::<u64>()) {
        let k = k_raw.min(n);
        let folds = plain_kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), n);
        let mut counts = vec![0usize; k];
        for &f in &folds {
            prop_assert!(f < k);
            counts[f] += 1;
        }
        let min = counts.iter().min().unwrap();
        let max = counts.iter().max().unwrap();
        prop_assert!(max - min <= 1, "fold sizes {:?}", counts);
        prop_assert!(*min >= 1);
    }

    #[test]
    fn auc_complement_identity(scores_raw in proptest::collection::vec(0.0f64..1.0, 4..40), seed in any::<u64>()) {
        // derive labels from the seed, ensuring both classes appear
        let mut labels: Vec<u8> = scores_raw.iter().enumerate()
            .map(|(i, _)| ((seed >> (i % 60)) & 1) as u8)
            .collect();
        labels[0] = 0;
        labels[1] = 1;
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let a = auc(&scores_raw, &labels).unwrap();
        let b = auc(&scores_raw, &flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn binomial_cdf_matches_exact_integer_oracle() {
    // Exact oracle: sum_{i<=k} C(n,i) as a big integer against 2^n.
    for n in [1u64, 2, 7, 13, 19, 25, 30] {
        let mut row = vec![BigUint::from(1u32)]; // C(n,0)
        for i in 0..n {
            let next = (&row[i as usize] * BigUint::from(n - i)) / BigUint::from(i + 1);
            row.push(next);
        }
        let denom = BigUint::from(1u32) << n;
        let mut acc = BigUint::from(0u32);
        for k in 0..=n {
            acc += &row[k as usize];
            // exact rational -> f64 via 2^-200-scaled integer division
            let scaled = (&acc << 200u32) / &denom;
            let mut exact = 0.0f64;
            for (idx, digit) in scaled.to_u64_digits().iter().enumerate() {
                exact += *digit as f64 * 2.0f64.powi(64 * idx as i32 - 200);
            }
            let got = binomial_cdf(n, k, 0.5).unwrap();
            assert!(
                (got - exact).abs() < 1e-12,
                "F({n},{k},0.5) = {got}, exact {exact}"
            );
        }
    }
}

#[test]
fn grouped_folds_partition_on_random_configurations() {
    // 1000 random subject/session layouts: disjoint, exhaustive, never
    // splitting a subject.
    let mut failures = 0;
    for trial in 0..1000u64 {
        let subject_count = 3 + (trial % 17) as usize;
        let k = 2 + (trial % (subject_count as u64 - 1)) as usize;
        let mut instances = Vec::new();
        for s in 0..subject_count {
            let sessions = 1 + ((trial as usize + s * 7) % 4);
            for r in 0..sessions {
                let v = 0.05 + 0.9 * ((s * 13 + r * 5) % 10) as f64 / 10.0;
                let m = ConnectivityMatrix::new(
                    ConnectivityMetric::Correlation,
                    ndarray::array![[1.0, v], [v, 1.0]],
                )
                .unwrap();
                instances.push(
                    LabeledInstance::new(
                        format!("t{trial}_s{s}_r{r}"),
                        (s % 2) as u8,
                        format!("subj{s}"),
                        vec![m],
                    )
                    .unwrap(),
                );
            }
        }
        let total = instances.len();
        let dataset = Dataset::new(2, vec![ConnectivityMetric::Correlation], instances).unwrap();
        let folds = grouped_kfold(&dataset, k, trial).unwrap();
        let mut seen = 0usize;
        let mut subject_fold: BTreeMap<String, usize> = BTreeMap::new();
        for inst in &dataset.instances {
            let f = folds.fold_of(&inst.id).expect("every instance assigned");
            seen += 1;
            if let Some(&prev) = subject_fold.get(&inst.subject_id) {
                if prev != f {
                    failures += 1;
                }
            }
            subject_fold.insert(inst.subject_id.clone(), f);
        }
        assert_eq!(seen, total);
    }
    assert_eq!(failures, 0, "subjects split across folds");
}
