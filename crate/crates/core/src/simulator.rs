//! Simulated connectome classification datasets.
//!
//! Two class templates are built from a healthy/patient connectome pair by
//! replacing the rows and columns of k randomly chosen ROIs, then each class
//! is replicated with weighted symmetric Gaussian noise. Labels: 0 for the
//! unmodified template, 1 for the modified one.

use std::path::PathBuf;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::connectivity::{connectivity_matrix, ConnectivityJob};
use crate::error::{Error, Result};
use crate::seeds::{self, domain};
use crate::types::{ConnectivityMatrix, Dataset, LabeledInstance, RoiTimeSeries};

/// Where the healthy/patient template pair comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSource {
    /// Generate both templates from seeded latent-factor time series.
    Synthetic { timepoints: usize, factors: usize },
    /// Load templates from `.cmx` files (e.g. real connectomes).
    Files { healthy: PathBuf, patient: PathBuf },
}

impl Default for BaseSource {
    fn default() -> Self {
        BaseSource::Synthetic {
            timepoints: 120,
            factors: 5,
        }
    }
}

/// Parameters of one simulated dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub roi_count: usize,
    /// Number of ROIs whose rows/columns are replaced in the patient class.
    pub modified_roi_count: usize,
    pub noise_weight: f64,
    pub replicas_per_class: usize,
    pub seed: u64,
    #[serde(default)]
    pub base: BaseSource,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.roi_count < 2 {
            return Err(Error::config("roi_count must be at least 2"));
        }
        if self.modified_roi_count == 0 || self.modified_roi_count >= self.roi_count {
            return Err(Error::config(format!(
                "modified_roi_count must be in [1, {}), got {}",
                self.roi_count, self.modified_roi_count
            )));
        }
        if self.replicas_per_class == 0 {
            return Err(Error::config("replicas_per_class must be at least 1"));
        }
        if !self.noise_weight.is_finite() || self.noise_weight < 0.0 {
            return Err(Error::config("noise_weight must be finite and non-negative"));
        }
        if let BaseSource::Synthetic { timepoints, factors } = self.base {
            if factors == 0 {
                return Err(Error::config("factors must be at least 1"));
            }
            if timepoints <= factors {
                return Err(Error::config("timepoints must exceed the factor count"));
            }
        }
        Ok(())
    }
}

/// Indices of the ROIs that differ between the two class templates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub modified_roi_indices: Vec<usize>,
}

impl GroundTruth {
    pub fn new(mut indices: Vec<usize>, roi_count: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::data("ground truth must name at least one ROI"));
        }
        if let Some(&max) = indices.last() {
            if max >= roi_count {
                return Err(Error::data(format!(
                    "ground-truth ROI index {max} out of range for {roi_count} ROIs"
                )));
            }
        }
        Ok(GroundTruth {
            modified_roi_indices: indices,
        })
    }
}

/// Random time series with correlated structure: shared latent-factor
/// loadings perturbed per template, mixed with a fresh factor realization
/// plus an independent residual.
fn latent_factor_series(
    seed: u64,
    shared_loadings: &Array2<f64>,
    t: usize,
) -> RoiTimeSeries {
    let mut rng = seeds::rng_from(seed);
    let (n, factors) = shared_loadings.dim();
    let mut loadings = shared_loadings.clone();
    for v in loadings.iter_mut() {
        let delta: f64 = rng.sample(StandardNormal);
        *v += 0.25 * delta;
    }
    let mut factor_courses = Array2::<f64>::zeros((t, factors));
    for v in factor_courses.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut values = factor_courses.dot(&loadings.t());
    debug_assert_eq!(values.ncols(), n);
    for v in values.iter_mut() {
        let eps: f64 = rng.sample(StandardNormal);
        *v += 0.5 * eps;
    }
    RoiTimeSeries::new(values).expect("generated series is finite and well-shaped")
}

/// Generate a healthy/patient correlation-connectome pair.
///
/// Both templates share one latent loading matrix and differ through
/// per-template loading perturbations and factor realizations, so they
/// resemble two subjects drawn from a common population: globally similar
/// connectomes with moderate row-level differences.
pub fn synthesize_base_pair(
    seed: u64,
    roi_count: usize,
    timepoints: usize,
    factors: usize,
) -> Result<(ConnectivityMatrix, ConnectivityMatrix)> {
    if factors == 0 || timepoints <= factors {
        return Err(Error::config(
            "need at least one factor and more timepoints than factors",
        ));
    }
    let mut shared_rng = seeds::child_rng(seed, domain::SIM_BASE, 0);
    let mut shared = Array2::<f64>::zeros((roi_count, factors));
    for v in shared.iter_mut() {
        *v = shared_rng.sample(StandardNormal);
    }
    let job = ConnectivityJob::correlation();
    let healthy = connectivity_matrix(
        &latent_factor_series(seeds::child_seed(seed, domain::SIM_BASE, 1), &shared, timepoints),
        &job,
    )?;
    let patient = connectivity_matrix(
        &latent_factor_series(seeds::child_seed(seed, domain::SIM_BASE, 2), &shared, timepoints),
        &job,
    )?;
    Ok((healthy, patient))
}

/// Replace the rows and columns of `base` named by `rois` with `donor`'s.
///
/// Cells where either coordinate is a modified ROI come from the donor; all
/// remaining cells come from the base, so symmetry is preserved.
pub fn implant_rows(
    base: &ConnectivityMatrix,
    donor: &ConnectivityMatrix,
    rois: &GroundTruth,
) -> Result<ConnectivityMatrix> {
    let n = base.size();
    if donor.size() != n {
        return Err(Error::data(format!(
            "dimension mismatch: base is {n}, donor is {}",
            donor.size()
        )));
    }
    if base.metric() != donor.metric() {
        return Err(Error::data("base and donor matrices carry different metrics"));
    }
    if let Some(&max) = rois.modified_roi_indices.last() {
        if max >= n {
            return Err(Error::data(format!("ROI index {max} out of range for size {n}")));
        }
    }
    let mut values = base.values().clone();
    for &r in &rois.modified_roi_indices {
        for j in 0..n {
            values[[r, j]] = donor.values()[[r, j]];
            values[[j, r]] = donor.values()[[j, r]];
        }
    }
    ConnectivityMatrix::new(base.metric(), values)
}

/// Symmetric noise with maximal absolute entry exactly 1 and zero diagonal:
/// draw M with i.i.d. standard-normal entries, form M + M^T, zero the
/// diagonal and divide by the largest absolute value.
pub fn symmetric_noise(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeds::rng_from(seed);
    let mut m = Array2::<f64>::zeros((n, n));
    for v in m.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut s = &m + &m.t();
    for i in 0..n {
        s[[i, i]] = 0.0;
    }
    let max_abs = s.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs > 0.0 {
        s.mapv_inplace(|v| v / max_abs);
    }
    s
}

/// Build the full simulated dataset and its ground truth.
///
/// The modified ROI set is drawn once (seeded); every instance gets fresh
/// noise from its own sub-seed, so the dataset is a pure function of the
/// configuration.
pub fn generate_dataset(cfg: &SimulationConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let n = cfg.roi_count;
    let (healthy, patient) = match &cfg.base {
        BaseSource::Synthetic { timepoints, factors } => {
            synthesize_base_pair(cfg.seed, n, *timepoints, *factors)?
        }
        BaseSource::Files { healthy, patient } => {
            let h = crate::io::load_matrix(healthy)?;
            let p = crate::io::load_matrix(patient)?;
            if h.size() != n || p.size() != n {
                return Err(Error::data(format!(
                    "base matrices are {}x{} and {}x{}, config declares {n} ROIs",
                    h.size(),
                    h.size(),
                    p.size(),
                    p.size()
                )));
            }
            if h.metric() != p.metric() {
                return Err(Error::data("base matrices carry different metrics"));
            }
            (h, p)
        }
    };
    let metric = healthy.metric();

    let mut roi_rng = seeds::child_rng(cfg.seed, domain::SIM_ROIS, 0);
    let chosen = rand::seq::index::sample(&mut roi_rng, n, cfg.modified_roi_count).into_vec();
    let truth = GroundTruth::new(chosen, n)?;
    let modified = implant_rows(&healthy, &patient, &truth)?;

    let replicas = cfg.replicas_per_class;
    let mut instances = Vec::with_capacity(2 * replicas);
    for (label, template) in [(0u8, &healthy), (1u8, &modified)] {
        for rep in 0..replicas {
            let instance_index = label as u64 * replicas as u64 + rep as u64;
            let noise = symmetric_noise(n, seeds::child_seed(cfg.seed, domain::SIM_NOISE, instance_index));
            let values = template.values() + &(cfg.noise_weight * noise);
            let matrix = ConnectivityMatrix::new(metric, values)?;
            let id = format!("c{label}_r{rep:03}");
            let subject = format!("subj_{id}");
            instances.push(LabeledInstance::new(id, label, subject, vec![matrix])?);
        }
    }
    let dataset = Dataset::new(n, vec![metric], instances)?;
    Ok((dataset, truth))
}
