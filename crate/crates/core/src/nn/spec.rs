//! Architecture descriptors and exact parameter accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::upper_triangle_len;

/// The three supported classifier architectures.
///
/// * `Ccnn`: row-wise 1×N convolution (64 filters), column-wise N×1
///   convolution (128 filters), a 96-unit ReLU hidden layer and a softmax
///   output; consumes stacked N×N connectivity channels.
/// * `Simple`: one 128-unit sigmoid hidden layer over the concatenated
///   upper-triangle feature vector, softmax output, trained with SGD.
/// * `Deep`: 128- and 96-unit ReLU hidden layers over the same features,
///   softmax output, dropout on both hidden layers, trained with Adam.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ccnn,
    Simple,
    Deep,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ccnn => "ccnn",
            ModelKind::Simple => "simple",
            ModelKind::Deep => "deep",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape description of one model.
///
/// `conv2_filters` doubles as the width of the deep network's first hidden
/// layer (both play the role of the 128-feature stage); `hidden` is the
/// final hidden width: 96 for `ccnn`/`deep` and 128 for `simple`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub roi_count: usize,
    pub channels: usize,
    #[serde(default = "default_conv1")]
    pub conv1_filters: usize,
    #[serde(default = "default_conv2")]
    pub conv2_filters: usize,
    pub hidden: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
}

fn default_conv1() -> usize {
    64
}

fn default_conv2() -> usize {
    128
}

fn default_classes() -> usize {
    2
}

impl ModelSpec {
    pub fn new(kind: ModelKind, roi_count: usize, channels: usize) -> Self {
        ModelSpec {
            kind,
            roi_count,
            channels,
            conv1_filters: default_conv1(),
            conv2_filters: default_conv2(),
            hidden: match kind {
                ModelKind::Simple => 128,
                ModelKind::Ccnn | ModelKind::Deep => 96,
            },
            classes: default_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.roi_count < 2 {
            return Err(Error::config("roi_count must be at least 2"));
        }
        for (name, v) in [
            ("channels", self.channels),
            ("conv1_filters", self.conv1_filters),
            ("conv2_filters", self.conv2_filters),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::config("classes must be at least 2"));
        }
        Ok(())
    }

    /// Length of the flattened per-instance feature vector consumed by the
    /// fully-connected architectures: channels × N(N−1)/2.
    pub fn input_features(&self) -> usize {
        self.channels * upper_triangle_len(self.roi_count)
    }

    /// Exact trainable (weights, biases) counts from the closed-form layer
    /// dimensions.
    pub fn param_count(&self) -> (u64, u64) {
        let n = self.roi_count as u64;
        let c = self.channels as u64;
        let f1 = self.conv1_filters as u64;
        let f2 = self.conv2_filters as u64;
        let h = self.hidden as u64;
        let cls = self.classes as u64;
        let input = self.input_features() as u64;
        match self.kind {
            ModelKind::Ccnn => (
                c * n * f1 + n * f1 * f2 + f2 * h + h * cls,
                f1 + f2 + h + cls,
            ),
            ModelKind::Simple => (input * h + h * cls, h + cls),
            ModelKind::Deep => (input * f2 + f2 * h + h * cls, f2 + h + cls),
        }
    }

    /// Named parameter arrays in storage order.
    pub fn array_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let n = self.roi_count;
        let c = self.channels;
        let f1 = self.conv1_filters;
        let f2 = self.conv2_filters;
        let h = self.hidden;
        let cls = self.classes;
        let input = self.input_features();
        match self.kind {
            ModelKind::Ccnn => vec![
                ("W1", vec![f1, c, n]),
                ("b1", vec![f1]),
                ("W2", vec![f2, f1, n]),
                ("b2", vec![f2]),
                ("W3", vec![h, f2]),
                ("b3", vec![h]),
                ("W4", vec![cls, h]),
                ("b4", vec![cls]),
            ],
            ModelKind::Simple => vec![
                ("W1", vec![h, input]),
                ("b1", vec![h]),
                ("W2", vec![cls, h]),
                ("b2", vec![cls]),
            ],
            ModelKind::Deep => vec![
                ("W1", vec![f2, input]),
                ("b1", vec![f2]),
                ("W2", vec![h, f2]),
                ("b2", vec![h]),
                ("W3", vec![cls, h]),
                ("b3", vec![cls]),
            ],
        }
    }

    /// Initialization standard deviation for a named weight array.
    ///
    /// Layers feeding a ReLU use sqrt(2/fan_in); the sigmoid hidden layer of
    /// the simple network and all softmax output layers use sqrt(1/fan_in).
    /// Biases start at zero.
    pub(crate) fn init_std(&self, name: &str) -> f64 {
        let n = self.roi_count as f64;
        let c = self.channels as f64;
        let f1 = self.conv1_filters as f64;
        let f2 = self.conv2_filters as f64;
        let h = self.hidden as f64;
        let input = self.input_features() as f64;
        match (self.kind, name) {
            (ModelKind::Ccnn, "W1") => (2.0 / (c * n)).sqrt(),
            (ModelKind::Ccnn, "W2") => (2.0 / (f1 * n)).sqrt(),
            (ModelKind::Ccnn, "W3") => (2.0 / f2).sqrt(),
            (ModelKind::Ccnn, "W4") => (1.0 / h).sqrt(),
            (ModelKind::Simple, "W1") => (1.0 / input).sqrt(),
            (ModelKind::Simple, "W2") => (1.0 / h).sqrt(),
            (ModelKind::Deep, "W1") => (2.0 / input).sqrt(),
            (ModelKind::Deep, "W2") => (2.0 / f2).sqrt(),
            (ModelKind::Deep, "W3") => (1.0 / h).sqrt(),
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccnn_single_channel_counts() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 499, 1);
        assert_eq!(spec.param_count(), (4_132_224, 290));
    }

    #[test]
    fn ccnn_two_channel_counts() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 499, 2);
        assert_eq!(spec.param_count(), (4_164_160, 290));
    }

    #[test]
    fn simple_counts() {
        let one = ModelSpec::new(ModelKind::Simple, 499, 1);
        assert_eq!(one.input_features(), 124_251);
        assert_eq!(one.param_count(), (15_904_384, 130));
        let two = ModelSpec::new(ModelKind::Simple, 499, 2);
        assert_eq!(two.input_features(), 248_502);
        assert_eq!(two.param_count(), (31_808_512, 130));
    }

    #[test]
    fn deep_counts() {
        let one = ModelSpec::new(ModelKind::Deep, 499, 1);
        assert_eq!(one.param_count(), (15_916_608, 226));
        let two = ModelSpec::new(ModelKind::Deep, 499, 2);
        assert_eq!(two.param_count(), (31_820_736, 226));
    }

    #[test]
    fn shapes_account_for_every_parameter() {
        for kind in [ModelKind::Ccnn, ModelKind::Simple, ModelKind::Deep] {
            let spec = ModelSpec::new(kind, 17, 2);
            let (weights, biases) = spec.param_count();
            let mut w = 0u64;
            let mut b = 0u64;
            for (name, shape) in spec.array_shapes() {
                let len: u64 = shape.iter().map(|&d| d as u64).product();
                if name.starts_with('W') {
                    w += len;
                } else {
                    b += len;
                }
            }
            assert_eq!((w, b), (weights, biases), "{kind:?}");
        }
    }
}
