//! Domain types shared by every other module: ROI time series, connectivity
//! matrices, labeled datasets and fold assignments.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which quantity a connectivity matrix holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityMetric {
    Correlation,
    DtwDistance,
    PathLength,
}

impl ConnectivityMetric {
    /// Binary code used in the `.cmx` container.
    pub fn code(self) -> u8 {
        match self {
            ConnectivityMetric::Correlation => 0,
            ConnectivityMetric::DtwDistance => 1,
            ConnectivityMetric::PathLength => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ConnectivityMetric::Correlation),
            1 => Some(ConnectivityMetric::DtwDistance),
            2 => Some(ConnectivityMetric::PathLength),
            _ => None,
        }
    }

    /// Conventional self-connectivity value placed on the diagonal.
    pub fn diagonal_value(self) -> f64 {
        match self {
            ConnectivityMetric::Correlation => 1.0,
            ConnectivityMetric::DtwDistance | ConnectivityMetric::PathLength => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConnectivityMetric::Correlation => "correlation",
            ConnectivityMetric::DtwDistance => "dtw_distance",
            ConnectivityMetric::PathLength => "path_length",
        }
    }
}

impl std::fmt::Display for ConnectivityMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A T×N matrix of ROI signals: each column is one region's time course.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiTimeSeries {
    values: Array2<f64>,
    pub subject_id: String,
    pub session_id: String,
}

impl RoiTimeSeries {
    /// Validates shape (T ≥ 2, N ≥ 2) and finiteness of every sample.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (t, n) = values.dim();
        if n < 2 {
            return Err(Error::data(format!("need at least 2 ROI columns, found {n}")));
        }
        if t < 2 {
            return Err(Error::data(format!("need at least 2 timepoint rows, found {t}")));
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite value {v} at timepoint {row}, ROI {col}"
                )));
            }
        }
        Ok(RoiTimeSeries {
            values,
            subject_id: String::new(),
            session_id: String::new(),
        })
    }

    pub fn with_identity(mut self, subject_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self.session_id = session_id.into();
        self
    }

    pub fn roi_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn timepoint_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// One ROI's time course as an owned, contiguous vector.
    pub fn roi_series(&self, roi: usize) -> Vec<f64> {
        self.values.column(roi).to_vec()
    }
}

/// Number of independent pairwise features of an N-ROI connectome.
pub fn upper_triangle_len(n: usize) -> usize {
    n * (n - 1) / 2
}

/// N×N symmetric connectivity matrix tagged with its metric.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityMatrix {
    metric: ConnectivityMetric,
    values: Array2<f64>,
}

impl ConnectivityMatrix {
    /// Validates squareness, exact symmetry, the diagonal convention for the
    /// metric, and finiteness.
    pub fn new(metric: ConnectivityMetric, values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::data(format!("matrix is {rows}x{cols}, expected square")));
        }
        if rows < 2 {
            return Err(Error::data(format!("need at least 2 ROIs, found {rows}")));
        }
        for ((i, j), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::data(format!("non-finite value {v} at ({i}, {j})")));
            }
        }
        for i in 0..rows {
            for j in (i + 1)..cols {
                if values[[i, j]] != values[[j, i]] {
                    return Err(Error::data(format!(
                        "asymmetry at ({i}, {j}): {} != {}",
                        values[[i, j]],
                        values[[j, i]]
                    )));
                }
            }
        }
        let diag = metric.diagonal_value();
        for i in 0..rows {
            if values[[i, i]] != diag {
                return Err(Error::data(format!(
                    "diagonal entry ({i}, {i}) is {}, expected {diag} for metric {metric}",
                    values[[i, i]]
                )));
            }
        }
        Ok(ConnectivityMatrix { metric, values })
    }

    pub fn metric(&self) -> ConnectivityMetric {
        self.metric
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Strict upper triangle in row-major order: (0,1), (0,2), …, (N−2,N−1).
    ///
    /// This ordering is frozen; the feature vectors consumed by the
    /// fully-connected classifiers and any on-disk exports all use it.
    pub fn vectorize_upper_triangle(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = Vec::with_capacity(upper_triangle_len(n));
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.values[[i, j]]);
            }
        }
        out
    }
}

/// One classification instance: a labeled stack of connectivity channels.
#[derive(Clone, Debug)]
pub struct LabeledInstance {
    pub id: String,
    pub label: u8,
    pub subject_id: String,
    pub channels: Vec<ConnectivityMatrix>,
}

impl LabeledInstance {
    pub fn new(
        id: impl Into<String>,
        label: u8,
        subject_id: impl Into<String>,
        channels: Vec<ConnectivityMatrix>,
    ) -> Result<Self> {
        if label > 1 {
            return Err(Error::data(format!("label must be 0 or 1, got {label}")));
        }
        if channels.is_empty() {
            return Err(Error::data("instance has no channels"));
        }
        let n = channels[0].size();
        if channels.iter().any(|c| c.size() != n) {
            return Err(Error::data("instance channels disagree on ROI count"));
        }
        Ok(LabeledInstance {
            id: id.into(),
            label,
            subject_id: subject_id.into(),
            channels,
        })
    }

    pub fn roi_count(&self) -> usize {
        self.channels[0].size()
    }
}

/// A set of labeled instances sharing ROI count and channel layout.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub roi_count: usize,
    pub channel_metrics: Vec<ConnectivityMetric>,
    pub instances: Vec<LabeledInstance>,
}

impl Dataset {
    pub fn new(
        roi_count: usize,
        channel_metrics: Vec<ConnectivityMetric>,
        instances: Vec<LabeledInstance>,
    ) -> Result<Self> {
        let ds = Dataset {
            roi_count,
            channel_metrics,
            instances,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_metrics.is_empty() {
            return Err(Error::data("dataset declares no channel metrics"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::data(format!("duplicate instance id '{}'", inst.id)));
            }
            if inst.roi_count() != self.roi_count {
                return Err(Error::data(format!(
                    "instance '{}' has ROI count {}, dataset declares {}",
                    inst.id,
                    inst.roi_count(),
                    self.roi_count
                )));
            }
            if inst.channels.len() != self.channel_metrics.len() {
                return Err(Error::data(format!(
                    "instance '{}' has {} channels, dataset declares {}",
                    inst.id,
                    inst.channels.len(),
                    self.channel_metrics.len()
                )));
            }
            for (ch, metric) in inst.channels.iter().zip(&self.channel_metrics) {
                if ch.metric() != *metric {
                    return Err(Error::data(format!(
                        "instance '{}' channel metric {} does not match declared {}",
                        inst.id,
                        ch.metric(),
                        metric
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// True when both class labels occur at least once.
    pub fn has_both_labels(&self) -> bool {
        let mut seen = [false; 2];
        for inst in &self.instances {
            seen[inst.label as usize] = true;
        }
        seen[0] && seen[1]
    }

    pub fn labels(&self) -> Vec<u8> {
        self.instances.iter().map(|i| i.label).collect()
    }
}

/// Assignment of instance ids to cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_count: usize,
    /// instance id → fold index in `[0, fold_count)`.
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn new(fold_count: usize, assignment: BTreeMap<String, usize>) -> Result<Self> {
        if fold_count == 0 {
            return Err(Error::data("fold count must be positive"));
        }
        let mut counts = vec![0usize; fold_count];
        for (id, &fold) in &assignment {
            if fold >= fold_count {
                return Err(Error::data(format!(
                    "instance '{id}' assigned to fold {fold}, but fold count is {fold_count}"
                )));
            }
            counts[fold] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::data(format!("fold {empty} is empty")));
        }
        Ok(FoldAssignment {
            fold_count,
            assignment,
        })
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Checks the assignment covers exactly the instances of `dataset`.
    pub fn validate_for(&self, dataset: &Dataset) -> Result<()> {
        if self.assignment.len() != dataset.len() {
            return Err(Error::data(format!(
                "fold assignment covers {} instances, dataset has {}",
                self.assignment.len(),
                dataset.len()
            )));
        }
        for inst in &dataset.instances {
            if !self.assignment.contains_key(&inst.id) {
                return Err(Error::data(format!(
                    "instance '{}' missing from fold assignment",
                    inst.id
                )));
            }
        }
        Ok(())
    }

    /// Dataset indices held out by `fold`, in dataset order.
    pub fn test_indices(&self, dataset: &Dataset, fold: usize) -> Vec<usize> {
        dataset
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| self.fold_of(&inst.id) == Some(fold))
            .map(|(i, _)| i)
            .collect()
    }

    /// Dataset indices used for training when `fold` is held out.
    pub fn train_indices(&self, dataset: &Dataset, fold: usize) -> Vec<usize> {
        dataset
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| self.fold_of(&inst.id) != Some(fold))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn metric_codes_round_trip() {
        for m in [
            ConnectivityMetric::Correlation,
            ConnectivityMetric::DtwDistance,
            ConnectivityMetric::PathLength,
        ] {
            assert_eq!(ConnectivityMetric::from_code(m.code()), Some(m));
        }
        assert_eq!(ConnectivityMetric::from_code(7), None);
    }

    #[test]
    fn timeseries_rejects_non_finite() {
        let err = RoiTimeSeries::new(array![[1.0, 2.0], [f64::NAN, 4.0]]).unwrap_err();
        assert!(err.to_string().contains("timepoint 1, ROI 0"), "{err}");
    }

    #[test]
    fn timeseries_rejects_tiny_shapes() {
        assert!(RoiTimeSeries::new(array![[1.0], [2.0]]).is_err());
        assert!(RoiTimeSeries::new(array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn matrix_rejects_asymmetry() {
        let err = ConnectivityMatrix::new(
            ConnectivityMetric::Correlation,
            array![[1.0, 0.5], [0.4, 1.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("asymmetry"), "{err}");
    }

    #[test]
    fn matrix_rejects_wrong_diagonal() {
        let err = ConnectivityMatrix::new(
            ConnectivityMetric::DtwDistance,
            array![[1.0, 0.5], [0.5, 1.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("diagonal"), "{err}");
    }

    #[test]
    fn upper_triangle_ordering_is_row_major() {
        let m = ConnectivityMatrix::new(
            ConnectivityMetric::Correlation,
            array![
                [1.0, 0.1, 0.2, 0.3],
                [0.1, 1.0, 0.4, 0.5],
                [0.2, 0.4, 1.0, 0.6],
                [0.3, 0.5, 0.6, 1.0]
            ],
        )
        .unwrap();
        assert_eq!(m.vectorize_upper_triangle(), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    }

    #[test]
    fn upper_triangle_two_rois() {
        let m = ConnectivityMatrix::new(
            ConnectivityMetric::Correlation,
            array![[1.0, 0.3], [0.3, 1.0]],
        )
        .unwrap();
        assert_eq!(m.vectorize_upper_triangle(), vec![0.3]);
    }

    #[test]
    fn upper_triangle_len_matches_pair_count() {
        assert_eq!(upper_triangle_len(499), 124_251);
        assert_eq!(upper_triangle_len(4), 6);
        assert_eq!(upper_triangle_len(2), 1);
    }

    #[test]
    fn fold_assignment_rejects_empty_fold() {
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), 0);
        map.insert("b".to_string(), 0);
        assert!(FoldAssignment::new(2, map).is_err());
    }
}
