//! Functional-connectivity toolkit: multi-metric connectivity matrices from
//! ROI time series (Pearson correlation, banded DTW distance, warping-path
//! length), simulated connectome classification datasets, and from-scratch
//! neural-network classifiers (a connectome-convolutional network plus
//! simple and deep fully connected baselines) with grouped cross-validation,
//! binomial significance baselines and first-layer importance analysis.
//!
//! All randomness flows from per-stage seeds derived from one master seed
//! (see [`seeds`]), so every pipeline is reproducible bit for bit on the
//! same build.

pub mod analysis;
pub mod connectivity;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod seeds;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    upper_triangle_len, ConnectivityMatrix, ConnectivityMetric, Dataset, FoldAssignment,
    LabeledInstance, RoiTimeSeries,
};
