//! All-pairs connectivity matrices from ROI time series.
//!
//! Pair computations run in parallel; each unordered pair (i, j) with i < j
//! is evaluated exactly once against a fixed pair list and mirrored serially
//! afterwards, so the output is bit-identical for any worker count.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{self, DtwConfig};
use crate::error::{Error, Result};
use crate::types::{ConnectivityMatrix, ConnectivityMetric, RoiTimeSeries};

/// Which path-length measure becomes the matrix entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathVariant {
    /// Extra steps beyond the main diagonal, as a count.
    Excess,
    /// Extra steps divided by the diagonal length.
    Relative,
}

/// What to do with a constant ROI series under the correlation metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSeriesPolicy {
    /// Fail, listing the offending ROI indices.
    Error,
    /// Record correlation 0 for every pair touching a constant ROI.
    SubstituteZero,
}

/// Full description of one connectivity computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectivityJob {
    pub metric: ConnectivityMetric,
    /// Ignored for the correlation metric.
    pub dtw: DtwConfig,
    /// Only meaningful when `metric` is `PathLength`.
    #[serde(default = "default_path_variant")]
    pub path_variant: PathVariant,
    #[serde(default = "default_constant_policy")]
    pub constant_policy: ConstantSeriesPolicy,
}

fn default_path_variant() -> PathVariant {
    PathVariant::Relative
}

fn default_constant_policy() -> ConstantSeriesPolicy {
    ConstantSeriesPolicy::Error
}

impl ConnectivityJob {
    pub fn correlation() -> Self {
        ConnectivityJob {
            metric: ConnectivityMetric::Correlation,
            dtw: DtwConfig::new(0),
            path_variant: default_path_variant(),
            constant_policy: default_constant_policy(),
        }
    }

    pub fn dtw_distance(cfg: DtwConfig) -> Self {
        ConnectivityJob {
            metric: ConnectivityMetric::DtwDistance,
            dtw: cfg,
            path_variant: default_path_variant(),
            constant_policy: default_constant_policy(),
        }
    }

    pub fn path_length(cfg: DtwConfig, variant: PathVariant) -> Self {
        ConnectivityJob {
            metric: ConnectivityMetric::PathLength,
            dtw: cfg,
            path_variant: variant,
            constant_policy: default_constant_policy(),
        }
    }
}

/// Pearson product-moment correlation, clamped to [-1, 1] against rounding.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("need at least 2 samples for correlation"));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::data("correlation undefined for a constant series"));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

fn constant_rois(series: &[Vec<f64>]) -> Vec<usize> {
    series
        .iter()
        .enumerate()
        .filter(|(_, s)| s.iter().all(|&v| v == s[0]))
        .map(|(i, _)| i)
        .collect()
}

/// Compute the N×N connectivity matrix of `ts` under `job`.
///
/// Exactly N(N−1)/2 pair evaluations are performed; the result is mirrored
/// and carries the metric's diagonal convention.
pub fn connectivity_matrix(ts: &RoiTimeSeries, job: &ConnectivityJob) -> Result<ConnectivityMatrix> {
    let n = ts.roi_count();
    let series: Vec<Vec<f64>> = (0..n).map(|i| ts.roi_series(i)).collect();

    let degenerate: Vec<usize> = if job.metric == ConnectivityMetric::Correlation {
        let found = constant_rois(&series);
        if !found.is_empty() && job.constant_policy == ConstantSeriesPolicy::Error {
            return Err(Error::data(format!(
                "constant ROI series at indices {found:?}; correlation is undefined for them"
            )));
        }
        found
    } else {
        Vec::new()
    };

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();

    let entries: Result<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            match job.metric {
                ConnectivityMetric::Correlation => {
                    if degenerate.contains(&i) || degenerate.contains(&j) {
                        Ok(0.0)
                    } else {
                        pearson(&series[i], &series[j])
                    }
                }
                ConnectivityMetric::DtwDistance => dtw::dtw_distance(&series[i], &series[j], &job.dtw),
                ConnectivityMetric::PathLength => {
                    let res = dtw::dtw(&series[i], &series[j], &job.dtw)?;
                    Ok(match job.path_variant {
                        PathVariant::Excess => res.path_length_excess as f64,
                        PathVariant::Relative => res.path_length_relative,
                    })
                }
            }
        })
        .collect();
    let entries = entries?;

    let mut values = Array2::zeros((n, n));
    let diag = job.metric.diagonal_value();
    for i in 0..n {
        values[[i, i]] = diag;
    }
    for (&(i, j), &v) in pairs.iter().zip(&entries) {
        values[[i, j]] = v;
        values[[j, i]] = v;
    }
    ConnectivityMatrix::new(job.metric, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn two_identical_rois() -> RoiTimeSeries {
        RoiTimeSeries::new(array![[1.0, 1.0], [2.0, 2.0], [4.0, 4.0], [3.0, 3.0]]).unwrap()
    }

    #[test]
    fn pearson_self_is_one() {
        let x = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn pearson_sign_flip_is_minus_one() {
        let x = [1.0, 2.0, 4.0, 3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &neg).unwrap(), -1.0);
    }

    #[test]
    fn pearson_matches_direct_formula() {
        // Independent evaluation: r = cov / sqrt(var_x * var_y) with explicit sums.
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 3.0, 5.0];
        let r = pearson(&x, &y).unwrap();
        let oracle = 6.5 / (5.0f64 * 8.75).sqrt();
        assert!((r - oracle).abs() < 1e-15);
        assert!((r - 0.982_707_629_823_990_8).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_constant_input() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn identical_rois_give_trivial_matrices() {
        let ts = two_identical_rois();
        let corr = connectivity_matrix(&ts, &ConnectivityJob::correlation()).unwrap();
        assert_eq!(corr.values(), &array![[1.0, 1.0], [1.0, 1.0]]);

        let job = ConnectivityJob::dtw_distance(DtwConfig::new(4));
        let d = connectivity_matrix(&ts, &job).unwrap();
        assert_eq!(d.values(), &array![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn matrix_agrees_with_scalar_operations() {
        let values = array![
            [0.1, 1.0, -0.3],
            [0.7, 0.9, 0.2],
            [1.3, 0.4, 0.8],
            [-0.2, 1.1, 0.5],
            [0.6, 0.3, -0.1]
        ];
        let ts = RoiTimeSeries::new(values).unwrap();

        let corr = connectivity_matrix(&ts, &ConnectivityJob::correlation()).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let expected = pearson(&ts.roi_series(i), &ts.roi_series(j)).unwrap();
                assert_eq!(corr.values()[[i, j]], expected);
                assert_eq!(corr.values()[[j, i]], expected);
            }
        }

        let cfg = DtwConfig::new(2);
        let dist = connectivity_matrix(&ts, &ConnectivityJob::dtw_distance(cfg)).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let expected = dtw::dtw_distance(&ts.roi_series(i), &ts.roi_series(j), &cfg).unwrap();
                assert_eq!(dist.values()[[i, j]], expected);
            }
        }

        let job = ConnectivityJob::path_length(cfg, PathVariant::Relative);
        let plen = connectivity_matrix(&ts, &job).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let expected = dtw::dtw(&ts.roi_series(i), &ts.roi_series(j), &cfg)
                    .unwrap()
                    .path_length_relative;
                assert_eq!(plen.values()[[i, j]], expected);
            }
        }
    }

    #[test]
    fn constant_roi_errors_name_indices() {
        let values = array![[1.0, 5.0, 2.0], [2.0, 5.0, 1.0], [3.0, 5.0, 4.0]];
        let ts = RoiTimeSeries::new(values).unwrap();
        let err = connectivity_matrix(&ts, &ConnectivityJob::correlation()).unwrap_err();
        assert!(err.to_string().contains("[1]"), "{err}");
    }

    #[test]
    fn constant_roi_substitution_policy_yields_zero() {
        let values = array![[1.0, 5.0, 2.0], [2.0, 5.0, 1.0], [3.0, 5.0, 4.0]];
        let ts = RoiTimeSeries::new(values).unwrap();
        let mut job = ConnectivityJob::correlation();
        job.constant_policy = ConstantSeriesPolicy::SubstituteZero;
        let m = connectivity_matrix(&ts, &job).unwrap();
        assert_eq!(m.values()[[0, 1]], 0.0);
        assert_eq!(m.values()[[1, 2]], 0.0);
        assert!(m.values()[[0, 2]] != 0.0);
    }

    #[test]
    fn output_is_identical_for_any_worker_count() {
        let mut values = Array2::zeros((20, 8));
        for ((t, i), v) in values.indexed_iter_mut() {
            *v = ((t * 31 + i * 7) as f64 * 0.173).sin();
        }
        let ts = RoiTimeSeries::new(values).unwrap();
        let job = ConnectivityJob::dtw_distance(DtwConfig::new(5));

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| connectivity_matrix(&ts, &job).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| connectivity_matrix(&ts, &job).unwrap());
        for (a, b) in single.values().iter().zip(multi.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
