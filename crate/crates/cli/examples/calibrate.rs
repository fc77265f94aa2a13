//! Scratch calibration runs for the heavier evaluation scenarios.
//! Usage: cargo run --release -p connectome-cli --example calibrate -- <scenario>

use std::time::Instant;

use connectome_core::eval::{plain_kfold, run_crossval};
use connectome_core::nn::{ModelKind, ModelSpec, TrainConfig};
use connectome_core::simulator::{generate_dataset, BaseSource, SimulationConfig};

fn sim(n: usize, k: usize, w: f64, replicas: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        roi_count: n,
        modified_roi_count: k,
        noise_weight: w,
        replicas_per_class: replicas,
        seed,
        base: BaseSource::Synthetic {
            timepoints: 120,
            factors: 5,
        },
    }
}

fn cv_accuracy(n: usize, k: usize, w: f64, kind: ModelKind, epochs: usize, seed: u64) -> (f64, f64) {
    cv_accuracy_lr(n, k, w, kind, epochs, None, seed)
}

fn cv_accuracy_lr(
    n: usize,
    k: usize,
    w: f64,
    kind: ModelKind,
    epochs: usize,
    lr: Option<f64>,
    seed: u64,
) -> (f64, f64) {
    let (dataset, _) = generate_dataset(&sim(n, k, w, 75, seed)).unwrap();
    let folds = plain_kfold(&dataset, 10, seed).unwrap();
    let spec = ModelSpec::new(kind, n, 1);
    let mut cfg = TrainConfig::defaults_for(kind);
    cfg.epochs = epochs;
    if let Some(lr) = lr {
        cfg.learning_rate = lr;
    }
    cfg.seed = seed ^ 0xABCD;
    let start = Instant::now();
    let report = run_crossval(&dataset, &spec, &cfg, &folds).unwrap();
    (report.pooled_accuracy, start.elapsed().as_secs_f64())
}

fn main() {
    let scenario = std::env::args().nth(1).unwrap_or_else(|| "c5".to_string());
    match scenario.as_str() {
        // criterion 5 CI variant: N=100, k=10, weight 1
        "c5" => {
            for epochs in [10usize, 20, 30] {
                let (acc, secs) = cv_accuracy(100, 10, 1.0, ModelKind::Ccnn, epochs, 42);
                println!("ccnn N=100 k=10 w=1 epochs={epochs}: acc {acc:.4} in {secs:.1}s");
            }
        }
        // criterion 6 single cell: all three models at one weight
        "c6cell" => {
            let w: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(5.0);
            let epochs: usize = std::env::args()
                .nth(3)
                .and_then(|s| s.parse().ok())
                .unwrap_or(20);
            for kind in [ModelKind::Simple, ModelKind::Deep, ModelKind::Ccnn] {
                let (acc, secs) = cv_accuracy(100, 5, w, kind, epochs, 7);
                println!("{} N=100 k=5 w={w} epochs={epochs}: acc {acc:.4} in {secs:.1}s", kind.name());
            }
        }
        // criterion 7: ROI recovery at k=1 and k=5, noise weight 5
        "c7" => {
            let epochs: usize = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(30);
            let n = 100;
            for k in [1usize, 5] {
                let mut ok = 0;
                for seed in 0..5u64 {
                    let (dataset, truth) = generate_dataset(&sim(n, k, 5.0, 75, seed)).unwrap();
                    let spec = ModelSpec::new(ModelKind::Ccnn, n, 1);
                    let mut cfg = TrainConfig::defaults_for(ModelKind::Ccnn);
                    cfg.epochs = epochs;
                    cfg.seed = seed.wrapping_mul(31) ^ 0x55;
                    let prepared = connectome_core::nn::prepare_dataset(&spec, &dataset).unwrap();
                    let subset: Vec<usize> = (0..dataset.len()).collect();
                    let start = Instant::now();
                    let (store, _) = connectome_core::nn::train(&spec, &prepared, &subset, &cfg).unwrap();
                    let roi = connectome_core::analysis::roi_importance(&store, &spec).unwrap();
                    let (hits, top) =
                        connectome_core::analysis::recovery_score(&roi[0], &truth, k);
                    let pass = if k == 1 { hits == 1 } else { hits >= 3 };
                    if pass {
                        ok += 1;
                    }
                    println!(
                        "k={k} seed={seed}: hits {hits}/{k} top {:?} truth {:?} ({:.1}s) {}",
                        top,
                        truth.modified_roi_indices,
                        start.elapsed().as_secs_f64(),
                        if pass { "PASS" } else { "MISS" }
                    );
                }
                println!("k={k}: {ok}/5 seeds pass");
            }
        }
        // scan (epochs, lr) per model at one weight
        "scan" => {
            let w: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(5.0);
            for (kind, combos) in [
                (ModelKind::Simple, vec![(10usize, 0.01), (20, 0.01), (40, 0.01)]),
                (ModelKind::Deep, vec![(5, 1e-3), (10, 1e-3), (15, 1e-3), (20, 1e-3)]),
                (ModelKind::Ccnn, vec![(5, 1e-3), (10, 1e-3), (15, 1e-3), (20, 1e-3)]),
            ] {
                for (epochs, lr) in combos {
                    let (acc, secs) = cv_accuracy_lr(100, 5, w, kind, epochs, Some(lr), 7);
                    println!(
                        "{} w={w} epochs={epochs} lr={lr}: acc {acc:.4} in {secs:.1}s",
                        kind.name()
                    );
                }
            }
        }
        // train/test diagnostics for one model at one weight
        "probe" => {
            let w: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5.0);
            let epochs: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(40);
            let kind = match std::env::args().nth(4).as_deref() {
                Some("simple") => ModelKind::Simple,
                Some("deep") => ModelKind::Deep,
                _ => ModelKind::Ccnn,
            };
            let keep: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0.6);
            let lr: f64 = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
            let (dataset, _) = generate_dataset(&sim(100, 5, w, 75, 7)).unwrap();
            let spec = ModelSpec::new(kind, 100, 1);
            let prepared = connectome_core::nn::prepare_dataset(&spec, &dataset).unwrap();
            let train_idx: Vec<usize> = (0..135).collect();
            let test_idx: Vec<usize> = (135..150).collect();
            let mut cfg = TrainConfig::defaults_for(kind);
            cfg.epochs = epochs;
            cfg.keep_prob = keep;
            if kind != ModelKind::Simple {
                cfg.learning_rate = lr;
            }
            cfg.seed = 99;
            let (store, history) = connectome_core::nn::train(&spec, &prepared, &train_idx, &cfg).unwrap();
            let acc_of = |idx: &[usize]| {
                let correct = idx
                    .iter()
                    .filter(|&&i| connectome_core::nn::predict(&spec, &store, &prepared, i).0 == prepared.labels[i])
                    .count();
                correct as f64 / idx.len() as f64
            };
            println!(
                "{} w={w} epochs={epochs} keep={keep} lr={lr}: first loss {:.4}, last loss {:.4}, train acc {:.3}, test acc {:.3}",
                kind.name(),
                history.first().unwrap(),
                history.last().unwrap(),
                acc_of(&train_idx),
                acc_of(&test_idx)
            );
        }
        // template-pair difference statistics
        "tstats" => {
            for n in [100usize, 499] {
                let (h, p) = connectome_core::simulator::synthesize_base_pair(7, n, 120, 5).unwrap();
                let mut diff2 = 0.0;
                let mut count = 0usize;
                let mut max_diff = 0.0f64;
                let mut cellwise_r = {
                    // correlation between the two templates' upper triangles
                    let a: Vec<f64> = h.vectorize_upper_triangle();
                    let b: Vec<f64> = p.vectorize_upper_triangle();
                    connectome_core::connectivity::pearson(&a, &b).unwrap()
                };
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = h.values()[[i, j]] - p.values()[[i, j]];
                        diff2 += d * d;
                        max_diff = max_diff.max(d.abs());
                        count += 1;
                    }
                }
                let noise = connectome_core::simulator::symmetric_noise(n, 3);
                let mut nstd = 0.0;
                for ((i, j), v) in noise.indexed_iter() {
                    if i != j {
                        nstd += v * v;
                    }
                }
                nstd = (nstd / (n * n - n) as f64).sqrt();
                println!(
                    "N={n}: template rms diff {:.3}, max {:.3}, cellwise corr {:.3}, per-matrix noise std {:.3}",
                    (diff2 / count as f64).sqrt(),
                    max_diff,
                    cellwise_r,
                    nstd
                );
                let _ = &mut cellwise_r;
            }
        }
        // ccnn-focused hyperparameter grid at one weight
        "cgrid" => {
            let w: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5.0);
            for (epochs, lr, batch) in [
                (10usize, 1e-3, 8usize),
                (20, 1e-3, 8),
                (20, 3e-4, 8),
                (30, 3e-4, 16),
                (20, 1e-3, 32),
                (40, 3e-4, 32),
            ] {
                let (dataset, _) = generate_dataset(&sim(100, 5, w, 75, 7)).unwrap();
                let folds = plain_kfold(&dataset, 10, 7).unwrap();
                let spec = ModelSpec::new(ModelKind::Ccnn, 100, 1);
                let mut cfg = TrainConfig::defaults_for(ModelKind::Ccnn);
                cfg.epochs = epochs;
                cfg.learning_rate = lr;
                cfg.batch_size = batch;
                cfg.seed = 7 ^ 0xABCD;
                let start = Instant::now();
                let report = run_crossval(&dataset, &spec, &cfg, &folds).unwrap();
                println!(
                    "ccnn w={w} epochs={epochs} lr={lr} batch={batch}: acc {:.4} in {:.1}s",
                    report.pooled_accuracy,
                    start.elapsed().as_secs_f64()
                );
            }
        }
        other => eprintln!("unknown scenario {other}"),
    }
}
