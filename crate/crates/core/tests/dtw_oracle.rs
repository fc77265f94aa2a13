//! Exhaustive-enumeration oracle for the banded DTW engine.
//!
//! The oracle walks every monotone path from (0,0) to (l1-1,l2-1) whose
//! cells respect the warping band, summing per-step costs front to back,
//! and keeps the minimum. Path sums use the same sequential accumulation as
//! the dynamic program, so agreement is exact, not approximate.

use connectome_core::dtw::{
    dtw, dtw_distance, dtw_fill, reconstruct_path, CostFunction, DtwConfig,
};
use connectome_core::seeds;
use rand::Rng;

struct Oracle<'a> {
    x1: &'a [f64],
    x2: &'a [f64],
    cost: CostFunction,
    window: usize,
    best: f64,
}

impl Oracle<'_> {
    fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.window
    }

    fn walk(&mut self, i: usize, j: usize, acc: f64) {
        let acc = acc + self.cost.eval(self.x1[i], self.x2[j]);
        if i + 1 == self.x1.len() && j + 1 == self.x2.len() {
            if acc < self.best {
                self.best = acc;
            }
            return;
        }
        if i + 1 < self.x1.len() && j + 1 < self.x2.len() && self.in_band(i + 1, j + 1) {
            self.walk(i + 1, j + 1, acc);
        }
        if i + 1 < self.x1.len() && self.in_band(i + 1, j) {
            self.walk(i + 1, j, acc);
        }
        if j + 1 < self.x2.len() && self.in_band(i, j + 1) {
            self.walk(i, j + 1, acc);
        }
    }
}

fn brute_force_min(x1: &[f64], x2: &[f64], cost: CostFunction, window: usize) -> f64 {
    let mut oracle = Oracle {
        x1,
        x2,
        cost,
        window,
        best: f64::INFINITY,
    };
    oracle.walk(0, 0, 0.0);
    oracle.best
}

fn random_series(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
}

#[test]
fn dtw_matches_brute_force_exactly_over_1000_full_band_pairs() {
    let mut rng = seeds::rng_from(20_240_601);
    for trial in 0..1000 {
        let l1 = rng.random_range(1..=6);
        let l2 = rng.random_range(1..=6);
        let x1 = random_series(&mut rng, l1);
        let x2 = random_series(&mut rng, l2);
        let cost = if trial % 2 == 0 {
            CostFunction::SquaredDifference
        } else {
            CostFunction::AbsoluteDifference
        };
        let w = l1.max(l2);
        let cfg = DtwConfig::new(w).with_cost(cost).with_znormalize(false);

        let expected = brute_force_min(&x1, &x2, cost, w);
        let acc = dtw_fill(&x1, &x2, &cfg).unwrap();
        assert_eq!(
            acc.distance().to_bits(),
            expected.to_bits(),
            "trial {trial}: dp {} vs brute force {expected}",
            acc.distance()
        );

        // the reconstructed path re-sums to the distance, bit for bit
        let path = reconstruct_path(&acc);
        path.validate(l1, l2).unwrap();
        assert_eq!(acc.path_cost(&path).to_bits(), acc.distance().to_bits());
    }
}

#[test]
fn banded_dtw_matches_band_restricted_enumeration() {
    let mut rng = seeds::rng_from(77_001);
    for _ in 0..300 {
        let l1: usize = rng.random_range(2..=6);
        let l2: usize = rng.random_range(2..=6);
        let min_w = l1.abs_diff(l2);
        let w = rng.random_range(min_w..=l1.max(l2));
        let x1 = random_series(&mut rng, l1);
        let x2 = random_series(&mut rng, l2);
        let cfg = DtwConfig::new(w).with_znormalize(false);

        let expected = brute_force_min(&x1, &x2, CostFunction::SquaredDifference, w);
        let got = dtw_distance(&x1, &x2, &cfg).unwrap();
        assert_eq!(got.to_bits(), expected.to_bits());

        // every step of the optimal path stays inside the band
        let res = dtw(&x1, &x2, &cfg).unwrap();
        for &(i, j) in &res.path.0 {
            assert!(i.abs_diff(j) <= w, "path cell ({i},{j}) outside band {w}");
        }
    }
}

#[test]
fn full_window_equals_unbanded_fill() {
    let mut rng = seeds::rng_from(5150);
    for _ in 0..100 {
        let l = rng.random_range(2..=14);
        let x1 = random_series(&mut rng, l);
        let x2 = random_series(&mut rng, l);
        let banded = dtw_distance(&x1, &x2, &DtwConfig::new(l).with_znormalize(false)).unwrap();
        let huge = dtw_distance(&x1, &x2, &DtwConfig::new(usize::MAX).with_znormalize(false)).unwrap();
        assert_eq!(banded.to_bits(), huge.to_bits());
    }
}

#[test]
fn distance_is_symmetric_for_equal_lengths() {
    let mut rng = seeds::rng_from(816);
    for _ in 0..200 {
        let l = rng.random_range(2..=8);
        let w = rng.random_range(0..=l);
        let x1 = random_series(&mut rng, l);
        let x2 = random_series(&mut rng, l);
        let cfg = DtwConfig::new(w).with_znormalize(false);
        let a = dtw_distance(&x1, &x2, &cfg).unwrap();
        let b = dtw_distance(&x2, &x1, &cfg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn identity_has_zero_distance_and_no_excess() {
    let mut rng = seeds::rng_from(31337);
    for _ in 0..50 {
        let l = rng.random_range(2..=20);
        let x = random_series(&mut rng, l);
        let res = dtw(&x, &x, &DtwConfig::new(3)).unwrap();
        assert_eq!(res.distance, 0.0);
        assert_eq!(res.path_length_excess, 0);
    }
}

#[test]
fn distance_is_non_increasing_in_window() {
    let mut rng = seeds::rng_from(99);
    for _ in 0..100 {
        let l1 = rng.random_range(2..=7);
        let l2 = rng.random_range(2..=7);
        let x1 = random_series(&mut rng, l1);
        let x2 = random_series(&mut rng, l2);
        let mut prev = f64::INFINITY;
        for w in l1.abs_diff(l2)..=l1.max(l2) {
            let d = dtw_distance(&x1, &x2, &DtwConfig::new(w).with_znormalize(false)).unwrap();
            assert!(
                d <= prev + 1e-15,
                "distance grew from {prev} to {d} when window widened to {w}"
            );
            prev = d;
        }
    }
}
