//! Forward computation for the three architectures.
//!
//! The CCNN consumes stacked N×N channel matrices. Its first layer convolves
//! row-by-row: filter f produces one value per ROI i,
//! `a1[f,i] = relu(b1[f] + sum_c sum_j W1[f,c,j] * x[c,i,j])`. The second
//! layer convolves the resulting f1×N feature map column-wise into one value
//! per filter, `a2[g] = relu(b2[g] + sum_f sum_i W2[g,f,i] * a1[f,i])`,
//! followed by a fully connected ReLU hidden layer and a softmax output.
//! The fully connected baselines consume the concatenated upper-triangle
//! feature vector instead.
//!
//! Dropout uses inverted scaling (mask values are 1/keep_prob or 0) and is
//! materialized as an explicit `DropoutPlan`, so a training step can hold
//! its masks fixed across the forward and backward passes, and gradient
//! checks can evaluate the same stochastic function repeatedly.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis, Ix1, Ix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spec::{ModelKind, ModelSpec};
use super::store::ParamStore;

/// Probability floor applied inside the cross-entropy loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which dropout sites are active during training.
///
/// For the CCNN, `first` is the second convolution's output and `second`
/// the fully connected hidden layer (the default placement); `conv`
/// additionally masks the row-convolution output feeding the column
/// convolution's large weight block. For the deep network `first`/`second`
/// are the two hidden layers and `conv` is ignored. The simple network
/// never applies dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutSites {
    pub first: bool,
    pub second: bool,
    #[serde(default)]
    pub conv: bool,
}

impl Default for DropoutSites {
    fn default() -> Self {
        DropoutSites {
            first: true,
            second: true,
            conv: false,
        }
    }
}

/// Concrete dropout masks for one training step (inverted scaling).
#[derive(Clone, Debug)]
pub struct DropoutPlan {
    pub conv: Option<Array2<f64>>,
    pub first: Option<Array2<f64>>,
    pub second: Option<Array2<f64>>,
}

impl DropoutPlan {
    /// No dropout: evaluation mode, or training with all sites disabled.
    pub fn eval() -> Self {
        DropoutPlan {
            conv: None,
            first: None,
            second: None,
        }
    }

    /// Draw masks for a batch of `batch` instances. Mask entries are
    /// `1/keep_prob` with probability `keep_prob` and `0` otherwise, so the
    /// expected value of a masked activation equals the unmasked one.
    /// Draw order: conv site, then first, then second.
    pub fn draw(
        rng: &mut ChaCha8Rng,
        keep_prob: f64,
        sites: DropoutSites,
        batch: usize,
        dims: SiteDims,
    ) -> Self {
        let mut mask = |dim: usize| {
            Array2::from_shape_fn((batch, dim), |_| {
                if rng.random::<f64>() < keep_prob {
                    1.0 / keep_prob
                } else {
                    0.0
                }
            })
        };
        DropoutPlan {
            conv: (sites.conv && dims.conv > 0).then(|| mask(dims.conv)),
            first: sites.first.then(|| mask(dims.first)),
            second: sites.second.then(|| mask(dims.second)),
        }
    }

    /// Mask dimensions of the three sites for `spec` (simple has none).
    pub fn site_dims(spec: &ModelSpec) -> SiteDims {
        match spec.kind {
            ModelKind::Ccnn => SiteDims {
                conv: spec.conv1_filters * spec.roi_count,
                first: spec.conv2_filters,
                second: spec.hidden,
            },
            ModelKind::Deep => SiteDims {
                conv: 0,
                first: spec.conv2_filters,
                second: spec.hidden,
            },
            ModelKind::Simple => SiteDims {
                conv: 0,
                first: 0,
                second: 0,
            },
        }
    }
}

/// Per-site mask widths.
#[derive(Clone, Copy, Debug)]
pub struct SiteDims {
    pub conv: usize,
    pub first: usize,
    pub second: usize,
}

/// Forward mode for the single-instance entry points.
pub enum ForwardMode<'r> {
    Eval,
    Train {
        keep_prob: f64,
        sites: DropoutSites,
        rng: &'r mut ChaCha8Rng,
    },
}

/// One batch of model inputs.
pub enum BatchInput<'a> {
    /// Per instance, per channel N×N connectivity matrices (CCNN).
    Matrices(Vec<Vec<ArrayView2<'a, f64>>>),
    /// B × input_features matrix (simple/deep).
    Features(Array2<f64>),
}

impl BatchInput<'_> {
    pub fn batch_len(&self) -> usize {
        match self {
            BatchInput::Matrices(m) => m.len(),
            BatchInput::Features(f) => f.nrows(),
        }
    }
}

/// Activations captured by the forward pass for reuse in backward.
///
/// `stage1`/`stage2` are the two intermediate layers (post-nonlinearity,
/// pre-dropout); `*_dropped` carry the masked versions actually fed onward.
/// For the CCNN, `conv_rows` is the flattened B × (f1·N) output of the
/// row-convolution layer and `conv_rows_dropped` its masked version.
pub struct ForwardCache {
    pub conv_rows: Option<Array2<f64>>,
    pub conv_rows_dropped: Option<Array2<f64>>,
    pub stage1: Array2<f64>,
    pub stage1_dropped: Array2<f64>,
    pub stage2: Option<Array2<f64>>,
    pub stage2_dropped: Option<Array2<f64>>,
    pub probs: Array2<f64>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

fn apply_mask(a: &Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => a * m,
        None => a.clone(),
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    logits
}

/// Cross-entropy of one predicted distribution against an integer label,
/// with the probability floored at `PROB_FLOOR` before the logarithm.
pub fn cross_entropy_loss(probs: &[f64], label: usize) -> f64 {
    -(probs[label].max(PROB_FLOOR)).ln()
}

/// Mean cross-entropy over a batch.
pub fn batch_loss(probs: &Array2<f64>, labels: &[u8]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -(probs[[i, l as usize]].max(PROB_FLOOR)).ln())
        .sum();
    total / labels.len() as f64
}

/// Row-convolution layer of the CCNN: returns the B × (f1·N) post-ReLU map.
fn ccnn_conv_rows(spec: &ModelSpec, store: &ParamStore, instances: &[Vec<ArrayView2<f64>>]) -> Array2<f64> {
    let n = spec.roi_count;
    let f1 = spec.conv1_filters;
    let w1 = store
        .array("W1")
        .view()
        .into_dimensionality::<Ix3>()
        .expect("W1 is f1 x C x N");
    let b1 = store
        .array("b1")
        .view()
        .into_dimensionality::<Ix1>()
        .expect("b1 is f1");
    let batch = instances.len();
    let mut out = Array2::zeros((batch, f1 * n));
    for (bi, channels) in instances.iter().enumerate() {
        let mut pre = Array2::zeros((f1, n));
        for (c, x) in channels.iter().enumerate() {
            // (W1[:,c,:] @ x^T)[f,i] = sum_j W1[f,c,j] * x[i,j]
            general_mat_mul(1.0, &w1.index_axis(Axis(1), c), &x.t(), 1.0, &mut pre);
        }
        for (mut row, &bias) in pre.outer_iter_mut().zip(b1.iter()) {
            row.mapv_inplace(|v| {
                let v = v + bias;
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            });
        }
        out.row_mut(bi)
            .assign(&pre.into_shape_with_order(f1 * n).expect("contiguous"));
    }
    out
}

fn dense(x: &Array2<f64>, w: ArrayView2<f64>, b: &ndarray::ArrayView1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

/// Batched forward pass; dispatches on the architecture kind.
pub fn forward_batch(
    spec: &ModelSpec,
    store: &ParamStore,
    input: &BatchInput,
    plan: &DropoutPlan,
) -> ForwardCache {
    match spec.kind {
        ModelKind::Ccnn => {
            let instances = match input {
                BatchInput::Matrices(m) => m,
                BatchInput::Features(_) => panic!("ccnn expects matrix input"),
            };
            let n = spec.roi_count;
            let f1 = spec.conv1_filters;
            let f2 = spec.conv2_filters;
            let conv_rows = ccnn_conv_rows(spec, store, instances);
            let conv_rows_dropped = apply_mask(&conv_rows, &plan.conv);
            let w2 = store.array("W2").view();
            let w2f = w2
                .into_shape_with_order((f2, f1 * n))
                .expect("W2 is standard layout");
            let b2 = store.array("b2").view().into_dimensionality::<Ix1>().unwrap();
            let mut stage1 = conv_rows_dropped.dot(&w2f.t()) + &b2;
            relu_inplace(&mut stage1);
            let stage1_dropped = apply_mask(&stage1, &plan.first);

            let w3 = store.array("W3").view().into_dimensionality().unwrap();
            let b3 = store.array("b3").view().into_dimensionality::<Ix1>().unwrap();
            let mut stage2 = dense(&stage1_dropped, w3, &b3);
            relu_inplace(&mut stage2);
            let stage2_dropped = apply_mask(&stage2, &plan.second);

            let w4 = store.array("W4").view().into_dimensionality().unwrap();
            let b4 = store.array("b4").view().into_dimensionality::<Ix1>().unwrap();
            let probs = softmax_rows(dense(&stage2_dropped, w4, &b4));
            ForwardCache {
                conv_rows: Some(conv_rows),
                conv_rows_dropped: Some(conv_rows_dropped),
                stage1,
                stage1_dropped,
                stage2: Some(stage2),
                stage2_dropped: Some(stage2_dropped),
                probs,
            }
        }
        ModelKind::Simple => {
            let x = match input {
                BatchInput::Features(f) => f,
                BatchInput::Matrices(_) => panic!("simple network expects feature input"),
            };
            let w1 = store.array("W1").view().into_dimensionality().unwrap();
            let b1 = store.array("b1").view().into_dimensionality::<Ix1>().unwrap();
            let mut stage1 = dense(x, w1, &b1);
            stage1.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
            let w2 = store.array("W2").view().into_dimensionality().unwrap();
            let b2 = store.array("b2").view().into_dimensionality::<Ix1>().unwrap();
            let probs = softmax_rows(dense(&stage1, w2, &b2));
            ForwardCache {
                conv_rows: None,
                conv_rows_dropped: None,
                stage1_dropped: stage1.clone(),
                stage1,
                stage2: None,
                stage2_dropped: None,
                probs,
            }
        }
        ModelKind::Deep => {
            let x = match input {
                BatchInput::Features(f) => f,
                BatchInput::Matrices(_) => panic!("deep network expects feature input"),
            };
            let w1 = store.array("W1").view().into_dimensionality().unwrap();
            let b1 = store.array("b1").view().into_dimensionality::<Ix1>().unwrap();
            let mut stage1 = dense(x, w1, &b1);
            relu_inplace(&mut stage1);
            let stage1_dropped = apply_mask(&stage1, &plan.first);

            let w2 = store.array("W2").view().into_dimensionality().unwrap();
            let b2 = store.array("b2").view().into_dimensionality::<Ix1>().unwrap();
            let mut stage2 = dense(&stage1_dropped, w2, &b2);
            relu_inplace(&mut stage2);
            let stage2_dropped = apply_mask(&stage2, &plan.second);

            let w3 = store.array("W3").view().into_dimensionality().unwrap();
            let b3 = store.array("b3").view().into_dimensionality::<Ix1>().unwrap();
            let probs = softmax_rows(dense(&stage2_dropped, w3, &b3));
            ForwardCache {
                conv_rows: None,
                conv_rows_dropped: None,
                stage1,
                stage1_dropped,
                stage2: Some(stage2),
                stage2_dropped: Some(stage2_dropped),
                probs,
            }
        }
    }
}

fn plan_from_mode(spec: &ModelSpec, mode: ForwardMode, batch: usize) -> DropoutPlan {
    match mode {
        ForwardMode::Eval => DropoutPlan::eval(),
        ForwardMode::Train {
            keep_prob,
            sites,
            rng,
        } => {
            let dims = DropoutPlan::site_dims(spec);
            DropoutPlan::draw(rng, keep_prob, sites, batch, dims)
        }
    }
}

/// Single-instance CCNN forward: class probabilities plus cached activations.
pub fn ccnn_forward(
    channels: &[ArrayView2<f64>],
    spec: &ModelSpec,
    store: &ParamStore,
    mode: ForwardMode,
) -> Result<(Vec<f64>, ForwardCache)> {
    if spec.kind != ModelKind::Ccnn {
        return Err(Error::config("spec is not a ccnn"));
    }
    if channels.len() != spec.channels {
        return Err(Error::data(format!(
            "instance has {} channels, spec declares {}",
            channels.len(),
            spec.channels
        )));
    }
    for ch in channels {
        if ch.dim() != (spec.roi_count, spec.roi_count) {
            return Err(Error::data(format!(
                "channel is {:?}, spec declares {n}x{n}",
                ch.dim(),
                n = spec.roi_count
            )));
        }
    }
    let plan = plan_from_mode(spec, mode, 1);
    let input = BatchInput::Matrices(vec![channels.to_vec()]);
    let cache = forward_batch(spec, store, &input, &plan);
    Ok((cache.probs.row(0).to_vec(), cache))
}

/// Single-instance forward for the fully connected architectures.
pub fn mlp_forward(
    features: &[f64],
    spec: &ModelSpec,
    store: &ParamStore,
    mode: ForwardMode,
) -> Result<(Vec<f64>, ForwardCache)> {
    if spec.kind == ModelKind::Ccnn {
        return Err(Error::config("spec is not a fully connected model"));
    }
    if features.len() != spec.input_features() {
        return Err(Error::data(format!(
            "instance has {} features, spec declares {}",
            features.len(),
            spec.input_features()
        )));
    }
    let plan = plan_from_mode(spec, mode, 1);
    let x = Array2::from_shape_vec((1, features.len()), features.to_vec()).expect("row vector");
    let cache = forward_batch(spec, store, &BatchInput::Features(x), &plan);
    Ok((cache.probs.row(0).to_vec(), cache))
}

/// Mean cross-entropy of a batch under fixed dropout masks.
pub fn forward_loss(
    spec: &ModelSpec,
    store: &ParamStore,
    input: &BatchInput,
    labels: &[u8],
    plan: &DropoutPlan,
) -> f64 {
    let cache = forward_batch(spec, store, input, plan);
    batch_loss(&cache.probs, labels)
}

/// One-hot encode labels against `classes`.
pub fn one_hot(labels: &[u8], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l as usize]] = 1.0;
    }
    out
}

#[allow(unused)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<ModelSpec>();
    check::<ParamStore>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{ModelKind, ModelSpec};
    use crate::seeds;
    use ndarray::array;

    fn zero_store(spec: &ModelSpec) -> ParamStore {
        let mut store = ParamStore::init(spec, 0);
        for a in store.arrays_mut() {
            a.fill(0.0);
        }
        store
    }

    #[test]
    fn zero_parameters_give_uniform_probabilities() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 3, 1);
        let store = zero_store(&spec);
        let x = array![[1.0, 0.2, 0.3], [0.2, 1.0, 0.4], [0.3, 0.4, 1.0]];
        let (probs, _) = ccnn_forward(&[x.view()], &spec, &store, ForwardMode::Eval).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);

        for kind in [ModelKind::Simple, ModelKind::Deep] {
            let spec = ModelSpec::new(kind, 3, 1);
            let store = zero_store(&spec);
            let features = vec![0.4, -0.1, 0.9];
            let (probs, _) = mlp_forward(&features, &spec, &store, ForwardMode::Eval).unwrap();
            assert_eq!(probs, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn ccnn_first_layer_matches_hand_expansion() {
        // C=1, N=2, one filter with W1 = [1, 0]: row 0 output is x[0,0] + b1.
        let mut spec = ModelSpec::new(ModelKind::Ccnn, 2, 1);
        spec.conv1_filters = 1;
        spec.conv2_filters = 1;
        spec.hidden = 1;
        let mut store = zero_store(&spec);
        store.array_mut("W1")[[0, 0, 0]] = 1.0;
        store.array_mut("b1")[[0]] = 0.25;
        let x = array![[0.7, 0.1], [0.1, 0.5]];
        let (_, cache) = ccnn_forward(&[x.view()], &spec, &store, ForwardMode::Eval).unwrap();
        let a1 = cache.conv_rows.unwrap();
        // a1[0, i] = relu(W1[0,0,0] * x[i, 0] + b1)
        assert_eq!(a1[[0, 0]], 0.7 + 0.25);
        assert_eq!(a1[[0, 1]], 0.1 + 0.25);
    }

    #[test]
    fn probabilities_are_positive_and_normalized() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 4, 2);
        let store = ParamStore::init(&spec, 5);
        let c0 = Array2::from_shape_fn((4, 4), |(i, j)| ((i * 4 + j) as f64 * 0.13).sin());
        let c0 = (&c0 + &c0.t()) / 2.0;
        let c1 = c0.mapv(|v| v * 0.5);
        let (probs, _) = ccnn_forward(&[c0.view(), c1.view()], &spec, &store, ForwardMode::Eval).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn simple_network_matches_scalar_closed_form() {
        let mut spec = ModelSpec::new(ModelKind::Simple, 2, 1);
        spec.hidden = 1;
        let mut store = zero_store(&spec);
        store.array_mut("W1")[[0, 0]] = 2.0;
        store.array_mut("b1")[[0]] = -0.5;
        store.array_mut("W2")[[0, 0]] = 1.5;
        store.array_mut("W2")[[1, 0]] = -1.0;
        store.array_mut("b2")[[1]] = 0.2;
        let x = 0.8;
        let (probs, _) = mlp_forward(&[x], &spec, &store, ForwardMode::Eval).unwrap();
        let hidden = 1.0 / (1.0 + (-(2.0 * x - 0.5)).exp());
        let logit0 = 1.5 * hidden;
        let logit1 = -1.0 * hidden + 0.2;
        let max = logit0.max(logit1);
        let e0 = (logit0 - max).exp();
        let e1 = (logit1 - max).exp();
        assert!((probs[0] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((probs[1] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let spec = ModelSpec::new(ModelKind::Deep, 4, 1);
        let store = ParamStore::init(&spec, 9);
        let features: Vec<f64> = (0..spec.input_features()).map(|i| (i as f64 * 0.31).cos()).collect();
        let (a, _) = mlp_forward(&features, &spec, &store, ForwardMode::Eval).unwrap();
        let (b, _) = mlp_forward(&features, &spec, &store, ForwardMode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_entropy_reference_points() {
        assert_eq!(cross_entropy_loss(&[1.0, 0.0], 0), 0.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy_loss(&[0.5, 0.5], 0) - ln2).abs() < 1e-15);
        assert!((cross_entropy_loss(&[0.5, 0.5], 1) - ln2).abs() < 1e-15);
        // floored at PROB_FLOOR
        assert!((cross_entropy_loss(&[0.0, 1.0], 0) - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn batch_loss_is_mean_of_instance_losses() {
        let probs = array![[0.9, 0.1], [0.25, 0.75]];
        let expected = (cross_entropy_loss(&[0.9, 0.1], 0) + cross_entropy_loss(&[0.25, 0.75], 1)) / 2.0;
        assert_eq!(batch_loss(&probs, &[0, 1]), expected);
    }

    #[test]
    fn dropout_mask_mean_approximates_identity() {
        // Inverted dropout: E[mask * a] = a. Checked within 2% over 10^4 draws.
        let mut rng = seeds::rng_from(77);
        let keep = 0.6;
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let plan = DropoutPlan::draw(
                &mut rng,
                keep,
                DropoutSites::default(),
                1,
                SiteDims { conv: 0, first: 1, second: 1 },
            );
            acc += plan.first.unwrap()[[0, 0]];
        }
        let mean = acc / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn channel_swap_equivariance() {
        // Swapping input channels together with the W1 channel slices leaves
        // the output unchanged.
        let spec = ModelSpec::new(ModelKind::Ccnn, 5, 2);
        let store = ParamStore::init(&spec, 13);
        let c0 = {
            let m = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 5 + j) as f64 * 0.7).sin());
            (&m + &m.t()) / 2.0
        };
        let c1 = c0.mapv(|v| 1.0 - v * 0.3);
        let (base, _) = ccnn_forward(&[c0.view(), c1.view()], &spec, &store, ForwardMode::Eval).unwrap();

        let mut swapped = store.clone();
        {
            let w1 = swapped.array_mut("W1");
            let n = spec.roi_count;
            for f in 0..spec.conv1_filters {
                for j in 0..n {
                    let a = w1[[f, 0, j]];
                    w1[[f, 0, j]] = w1[[f, 1, j]];
                    w1[[f, 1, j]] = a;
                }
            }
        }
        let (flipped, _) = ccnn_forward(&[c1.view(), c0.view()], &spec, &swapped, ForwardMode::Eval).unwrap();
        for (a, b) in base.iter().zip(&flipped) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
