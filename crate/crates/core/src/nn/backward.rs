//! Exact gradients of the mean cross-entropy loss.
//!
//! Gradients hold the step's dropout masks fixed; they are the derivatives
//! of the same stochastic function the forward pass evaluated. The combined
//! softmax/cross-entropy gradient uses the standard `probs - onehot` form
//! (the loss's probability floor only binds below 1e-12 and is ignored
//! here). Per-instance contributions accumulate in batch order, so results
//! are bit-identical across runs.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayD, Axis, Ix2, Ix3, Zip};

use super::forward::{batch_loss, forward_batch, one_hot, BatchInput, DropoutPlan};
use super::spec::{ModelKind, ModelSpec};
use super::store::{Gradients, ParamStore};

/// Zero the gradient wherever the ReLU was inactive.
fn relu_gate(grad: &mut Array2<f64>, activation: &Array2<f64>) {
    Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

fn masked(grad: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => grad * m,
        None => grad,
    }
}

/// Forward plus backward for one batch: returns the mean loss and gradients
/// aligned with the parameter store's array order.
pub fn forward_backward(
    spec: &ModelSpec,
    store: &ParamStore,
    input: &BatchInput,
    labels: &[u8],
    plan: &DropoutPlan,
) -> (f64, Gradients) {
    let cache = forward_batch(spec, store, input, plan);
    let loss = batch_loss(&cache.probs, labels);
    let batch = labels.len() as f64;
    // d(mean loss)/d(logits) = (probs - onehot) / B
    let g_logits = (&cache.probs - &one_hot(labels, spec.classes)) / batch;

    let grads = match spec.kind {
        ModelKind::Ccnn => {
            let instances = match input {
                BatchInput::Matrices(m) => m,
                BatchInput::Features(_) => unreachable!("checked by forward"),
            };
            let n = spec.roi_count;
            let f1 = spec.conv1_filters;
            let f2 = spec.conv2_filters;
            let conv_rows = cache.conv_rows.as_ref().unwrap();
            let conv_rows_dropped = cache.conv_rows_dropped.as_ref().unwrap();
            let stage2 = cache.stage2.as_ref().unwrap();
            let stage2_dropped = cache.stage2_dropped.as_ref().unwrap();

            let w4 = store.array("W4").view().into_dimensionality::<Ix2>().unwrap();
            let g_w4 = g_logits.t().dot(stage2_dropped);
            let g_b4 = g_logits.sum_axis(Axis(0));

            let mut g_stage2 = masked(g_logits.dot(&w4), &plan.second);
            relu_gate(&mut g_stage2, stage2);
            let g_w3 = g_stage2.t().dot(&cache.stage1_dropped);
            let g_b3 = g_stage2.sum_axis(Axis(0));

            let w3 = store.array("W3").view().into_dimensionality::<Ix2>().unwrap();
            let mut g_stage1 = masked(g_stage2.dot(&w3), &plan.first);
            relu_gate(&mut g_stage1, &cache.stage1);
            // g_stage1 is B × f2, the gradient at the column-convolution output
            let g_w2_flat = g_stage1.t().dot(conv_rows_dropped);
            let g_b2 = g_stage1.sum_axis(Axis(0));

            let w2 = store.array("W2").view();
            let w2f = w2.into_shape_with_order((f2, f1 * n)).unwrap();
            let g_conv_flat = masked(g_stage1.dot(&w2f), &plan.conv);

            let mut g_w1 = ArrayD::<f64>::zeros(store.array("W1").raw_dim());
            let mut g_b1 = ndarray::Array1::<f64>::zeros(f1);
            for (bi, channels) in instances.iter().enumerate() {
                let mut g_rows = g_conv_flat
                    .row(bi)
                    .to_owned()
                    .into_shape_with_order((f1, n))
                    .unwrap();
                let active = conv_rows.row(bi).into_shape_with_order((f1, n)).unwrap();
                Zip::from(&mut g_rows).and(&active).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                let mut g_w1_3 = g_w1.view_mut().into_dimensionality::<Ix3>().unwrap();
                for (c, x) in channels.iter().enumerate() {
                    // dW1[f,c,j] += sum_i g_rows[f,i] * x[i,j]
                    let mut slice = g_w1_3.index_axis_mut(Axis(1), c);
                    general_mat_mul(1.0, &g_rows, x, 1.0, &mut slice);
                }
                g_b1 += &g_rows.sum_axis(Axis(1));
            }

            // dot results are not guaranteed standard layout; normalize
            // before reinterpreting the flat gradient as f2 x f1 x N
            let g_w2 = g_w2_flat
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((f2, f1, n))
                .unwrap();
            vec![
                g_w1,
                g_b1.into_dyn(),
                g_w2.into_dyn(),
                g_b2.into_dyn(),
                g_w3.into_dyn(),
                g_b3.into_dyn(),
                g_w4.into_dyn(),
                g_b4.into_dyn(),
            ]
        }
        ModelKind::Simple => {
            let x = match input {
                BatchInput::Features(f) => f,
                BatchInput::Matrices(_) => unreachable!("checked by forward"),
            };
            let w2 = store.array("W2").view().into_dimensionality::<Ix2>().unwrap();
            let g_w2 = g_logits.t().dot(&cache.stage1);
            let g_b2 = g_logits.sum_axis(Axis(0));
            let mut g_hidden = g_logits.dot(&w2);
            // sigmoid'(z) = a (1 - a)
            Zip::from(&mut g_hidden)
                .and(&cache.stage1)
                .for_each(|g, &a| *g *= a * (1.0 - a));
            let g_w1 = g_hidden.t().dot(x);
            let g_b1 = g_hidden.sum_axis(Axis(0));
            vec![g_w1.into_dyn(), g_b1.into_dyn(), g_w2.into_dyn(), g_b2.into_dyn()]
        }
        ModelKind::Deep => {
            let x = match input {
                BatchInput::Features(f) => f,
                BatchInput::Matrices(_) => unreachable!("checked by forward"),
            };
            let stage2 = cache.stage2.as_ref().unwrap();
            let stage2_dropped = cache.stage2_dropped.as_ref().unwrap();

            let w3 = store.array("W3").view().into_dimensionality::<Ix2>().unwrap();
            let g_w3 = g_logits.t().dot(stage2_dropped);
            let g_b3 = g_logits.sum_axis(Axis(0));

            let mut g_stage2 = masked(g_logits.dot(&w3), &plan.second);
            relu_gate(&mut g_stage2, stage2);
            let g_w2 = g_stage2.t().dot(&cache.stage1_dropped);
            let g_b2 = g_stage2.sum_axis(Axis(0));

            let w2 = store.array("W2").view().into_dimensionality::<Ix2>().unwrap();
            let mut g_stage1 = masked(g_stage2.dot(&w2), &plan.first);
            relu_gate(&mut g_stage1, &cache.stage1);
            let g_w1 = g_stage1.t().dot(x);
            let g_b1 = g_stage1.sum_axis(Axis(0));
            vec![
                g_w1.into_dyn(),
                g_b1.into_dyn(),
                g_w2.into_dyn(),
                g_b2.into_dyn(),
                g_w3.into_dyn(),
                g_b3.into_dyn(),
            ]
        }
    };
    (loss, Gradients(grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::DropoutSites;
    use crate::nn::spec::ModelSpec;
    use crate::seeds;
    use ndarray::{Array2, ArrayView2};

    fn symmetric(n: usize, salt: f64) -> Array2<f64> {
        let m = Array2::from_shape_fn((n, n), |(i, j)| ((i * n + j) as f64 * salt).sin());
        (&m + &m.t()) / 2.0
    }

    #[test]
    fn zero_input_zeroes_conv_weight_gradients() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 4, 1);
        let store = ParamStore::init(&spec, 3);
        let zero = Array2::zeros((4, 4));
        let channels: Vec<Vec<ArrayView2<f64>>> = vec![vec![zero.view()]];
        let input = BatchInput::Matrices(channels);
        let (_, grads) = forward_backward(&spec, &store, &input, &[1], &DropoutPlan::eval());
        // W1 gradient vanishes through the zero input
        assert!(grads.0[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_instance_equals_single_instance() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 5, 1);
        let store = ParamStore::init(&spec, 7);
        let m = symmetric(5, 0.37);
        let single = BatchInput::Matrices(vec![vec![m.view()]]);
        let double = BatchInput::Matrices(vec![vec![m.view()], vec![m.view()]]);
        let (l1, g1) = forward_backward(&spec, &store, &single, &[1], &DropoutPlan::eval());
        let (l2, g2) = forward_backward(&spec, &store, &double, &[1, 1], &DropoutPlan::eval());
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in g1.0.iter().zip(&g2.0) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dropout_masks_are_respected() {
        // A zeroed-out stage-2 unit must receive zero gradient on its weights.
        let spec = ModelSpec::new(ModelKind::Deep, 3, 1);
        let store = ParamStore::init(&spec, 1);
        let features = Array2::from_shape_fn((2, spec.input_features()), |(i, j)| {
            ((i * 31 + j) as f64 * 0.291).cos()
        });
        let mut rng = seeds::rng_from(5);
        let dims = DropoutPlan::site_dims(&spec);
        let plan = DropoutPlan::draw(&mut rng, 0.5, DropoutSites::default(), 2, dims);
        let input = BatchInput::Features(features);
        let (_, grads) = forward_backward(&spec, &store, &input, &[0, 1], &plan);
        assert!(grads.is_finite());
    }
}
