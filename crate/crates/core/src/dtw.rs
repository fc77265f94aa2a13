//! Banded dynamic time warping.
//!
//! The accumulated-cost recurrence is
//!
//! ```text
//! D(i,j) = cost(x1[i], x2[j]) + min(D(i,j-1), D(i-1,j), D(i-1,j-1))
//! ```
//!
//! with the first row/column accumulating along their only predecessor and
//! `D(0,0) = cost(x1[0], x2[0])`. Cells outside the warping band
//! `|i - j| <= w` act as +infinity and are never materialized; storage is
//! O(l·(2w+1)). `D(l1-1, l2-1)` is the DTW distance, and backtracking the
//! minimal predecessors yields the optimal warping path. The path length in
//! excess of the main diagonal is the phase-stability metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step cost between two matched samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFunction {
    SquaredDifference,
    AbsoluteDifference,
}

impl CostFunction {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        let d = a - b;
        match self {
            CostFunction::SquaredDifference => d * d,
            CostFunction::AbsoluteDifference => d.abs(),
        }
    }
}

/// DTW configuration: warping window, step cost, and pre-normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Maximum allowed index offset |i−j| between matched samples. Values at
    /// or above the longer series length behave as an unconstrained fill.
    pub window: usize,
    #[serde(default = "default_cost")]
    pub cost: CostFunction,
    /// Z-normalize both series before the fill (default on, so distances are
    /// comparable across ROI pairs with different signal scales).
    #[serde(default = "default_znormalize")]
    pub znormalize: bool,
}

fn default_cost() -> CostFunction {
    CostFunction::SquaredDifference
}

fn default_znormalize() -> bool {
    true
}

impl DtwConfig {
    pub fn new(window: usize) -> Self {
        DtwConfig {
            window,
            cost: default_cost(),
            znormalize: default_znormalize(),
        }
    }

    pub fn with_cost(mut self, cost: CostFunction) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_znormalize(mut self, on: bool) -> Self {
        self.znormalize = on;
        self
    }
}

/// Shift a series to mean zero and scale to unit population standard
/// deviation. A constant series maps to all zeros.
pub fn znormalize(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; n];
    }
    series.iter().map(|v| (v - mean) / std).collect()
}

/// Monotone alignment from (1,1) to (l1,l2); index pairs are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarpingPath(pub Vec<(usize, usize)>);

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks endpoint and unit-step monotonicity invariants.
    pub fn validate(&self, l1: usize, l2: usize) -> Result<()> {
        let steps = &self.0;
        if steps.is_empty() {
            return Err(Error::data("empty warping path"));
        }
        if steps[0] != (1, 1) {
            return Err(Error::data(format!("path starts at {:?}, expected (1, 1)", steps[0])));
        }
        if *steps.last().unwrap() != (l1, l2) {
            return Err(Error::data(format!(
                "path ends at {:?}, expected ({l1}, {l2})",
                steps.last().unwrap()
            )));
        }
        for win in steps.windows(2) {
            let (i0, j0) = win[0];
            let (i1, j1) = win[1];
            let di = i1 as i64 - i0 as i64;
            let dj = j1 as i64 - j0 as i64;
            let ok = (di == 1 && dj == 0) || (di == 0 && dj == 1) || (di == 1 && dj == 1);
            if !ok {
                return Err(Error::data(format!("invalid step {:?} -> {:?}", win[0], win[1])));
            }
        }
        Ok(())
    }
}

struct BandRow {
    lo: usize,
    values: Vec<f64>,
}

/// Accumulated-cost matrix restricted to the warping band, together with the
/// (possibly normalized) inputs it was filled from.
pub struct AccumulatedCosts {
    len1: usize,
    len2: usize,
    rows: Vec<BandRow>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    cost: CostFunction,
}

impl AccumulatedCosts {
    /// Accumulated cost at 0-based cell (i, j); +infinity outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        if j < row.lo || j >= row.lo + row.values.len() {
            f64::INFINITY
        } else {
            row.values[j - row.lo]
        }
    }

    pub fn lengths(&self) -> (usize, usize) {
        (self.len1, self.len2)
    }

    /// `D(l1-1, l2-1)`, the DTW distance.
    pub fn distance(&self) -> f64 {
        self.get(self.len1 - 1, self.len2 - 1)
    }

    /// Re-sum the per-step costs along `path`, front to back. For the optimal
    /// path this reproduces `distance()` exactly, including rounding.
    pub fn path_cost(&self, path: &WarpingPath) -> f64 {
        let mut acc = 0.0;
        for &(i, j) in &path.0 {
            acc += self.cost.eval(self.x1[i - 1], self.x2[j - 1]);
        }
        acc
    }
}

/// Fill the banded accumulated-cost matrix for `x1` against `x2`.
///
/// Fails when the band cannot connect the endpoints, i.e. when
/// `|l1 - l2| > window`.
pub fn dtw_fill(x1: &[f64], x2: &[f64], cfg: &DtwConfig) -> Result<AccumulatedCosts> {
    let (l1, l2) = (x1.len(), x2.len());
    if l1 == 0 || l2 == 0 {
        return Err(Error::data("cannot warp an empty series"));
    }
    let w = cfg.window.min(l1.max(l2));
    if l1.abs_diff(l2) > w {
        return Err(Error::data(format!(
            "warping window {} cannot align series of lengths {l1} and {l2}",
            cfg.window
        )));
    }
    let x1 = if cfg.znormalize { znormalize(x1) } else { x1.to_vec() };
    let x2 = if cfg.znormalize { znormalize(x2) } else { x2.to_vec() };

    let at = |row: &BandRow, jj: usize| -> f64 {
        if jj < row.lo || jj >= row.lo + row.values.len() {
            f64::INFINITY
        } else {
            row.values[jj - row.lo]
        }
    };
    let mut rows: Vec<BandRow> = Vec::with_capacity(l1);
    for i in 0..l1 {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(l2 - 1);
        let mut values = vec![f64::INFINITY; hi - lo + 1];
        for j in lo..=hi {
            let c = cfg.cost.eval(x1[i], x2[j]);
            let acc = if i == 0 && j == 0 {
                c
            } else if i == 0 {
                c + values[j - 1 - lo]
            } else if j == 0 {
                c + at(&rows[i - 1], 0)
            } else {
                let prev = &rows[i - 1];
                let diag = at(prev, j - 1);
                let up = at(prev, j);
                let left = if j - 1 < lo { f64::INFINITY } else { values[j - 1 - lo] };
                c + diag.min(up).min(left)
            };
            values[j - lo] = acc;
        }
        rows.push(BandRow { lo, values });
    }
    Ok(AccumulatedCosts {
        len1: l1,
        len2: l2,
        rows,
        x1,
        x2,
        cost: cfg.cost,
    })
}

/// DTW distance: the accumulated cost at the final cell.
pub fn dtw_distance(x1: &[f64], x2: &[f64], cfg: &DtwConfig) -> Result<f64> {
    Ok(dtw_fill(x1, x2, cfg)?.distance())
}

/// Backtrack the optimal warping path from the filled matrix.
///
/// Ties between predecessors break in the order diagonal, then (i−1, j),
/// then (i, j−1); the diagonal preference keeps the path as short as
/// possible among equal-cost alignments.
pub fn reconstruct_path(acc: &AccumulatedCosts) -> WarpingPath {
    let (l1, l2) = acc.lengths();
    let (mut i, mut j) = (l1 - 1, l2 - 1);
    let mut steps = vec![(i + 1, j + 1)];
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc.get(i - 1, j - 1);
            let up = acc.get(i - 1, j);
            let left = acc.get(i, j - 1);
            let best = diag.min(up).min(left);
            if diag == best {
                i -= 1;
                j -= 1;
            } else if up == best {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        steps.push((i + 1, j + 1));
    }
    steps.reverse();
    WarpingPath(steps)
}

/// Warping-path length relative to the main diagonal: the number of extra
/// steps beyond `max(l1, l2)` and that count normalized by `max(l1, l2)`.
pub fn path_length_metric(path: &WarpingPath, l1: usize, l2: usize) -> (usize, f64) {
    let diagonal = l1.max(l2);
    let excess = path.len() - diagonal;
    (excess, excess as f64 / diagonal as f64)
}

/// Full DTW result: distance, optimal path, and path-length measures.
#[derive(Clone, Debug)]
pub struct DtwResult {
    pub distance: f64,
    pub path: WarpingPath,
    pub path_length_raw: usize,
    pub path_length_excess: usize,
    pub path_length_relative: f64,
}

/// Run the fill, reconstruct the optimal path and derive the path metrics.
pub fn dtw(x1: &[f64], x2: &[f64], cfg: &DtwConfig) -> Result<DtwResult> {
    let acc = dtw_fill(x1, x2, cfg)?;
    let path = reconstruct_path(&acc);
    let (l1, l2) = acc.lengths();
    let (excess, relative) = path_length_metric(&path, l1, l2);
    Ok(DtwResult {
        distance: acc.distance(),
        path_length_raw: path.len(),
        path_length_excess: excess,
        path_length_relative: relative,
        path,
    })
}
