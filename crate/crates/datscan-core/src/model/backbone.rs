//! Feature-extractor backbones.
//!
//! The classifier head only assumes "NHWC in, NHWC feature maps out",
//! expressed by [`FeatureExtractor`]. Swapping the convolutional stack
//! — including loading one pre-trained elsewhere and freezing it — is a
//! construction-time choice; the training loop asks `trainable()` and
//! otherwise treats the backbone as opaque.

use super::layers::{BatchNorm2d, Conv2d, MaxPool2, ParamRef, Relu};
use crate::rng::PipelineRng;
use ndarray::{Array4, Ix4};

pub trait FeatureExtractor: Send {
    /// Stable identifier, recorded in checkpoints.
    fn name(&self) -> &'static str;

    /// `(height, width)` the extractor expects; inputs in other sizes
    /// are resized by the data pipeline before they reach the model.
    fn input_shape(&self) -> (usize, usize);

    /// Channel count of the emitted feature maps.
    fn feature_channels(&self) -> usize;

    fn trainable(&self) -> bool;

    /// Freeze or unfreeze the weights. A frozen backbone still runs
    /// forward but is skipped by backprop and the optimizer.
    fn set_trainable(&mut self, trainable: bool);

    fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64>;

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64>;

    fn params_mut(&mut self) -> Vec<ParamRef<'_>>;
}

#[derive(Debug, thiserror::Error)]
#[error("unknown backbone {0:?} (available: {SMALL_CNN_NAME:?})")]
pub struct UnknownBackbone(pub String);

/// Construct a backbone by its checkpoint name, freshly initialized
/// from `rng`.
pub fn build_backbone(
    name: &str,
    rng: &mut PipelineRng,
) -> Result<Box<dyn FeatureExtractor>, UnknownBackbone> {
    match name {
        SMALL_CNN_NAME => Ok(Box::new(SmallCnn::new(rng))),
        other => Err(UnknownBackbone(other.to_string())),
    }
}

pub const SMALL_CNN_NAME: &str = "small-cnn-v1";

/// Native input size: the axial slice triplet of a registered volume.
pub const SMALL_CNN_INPUT: (usize, usize) = (109, 91);
const SMALL_CNN_CHANNELS: [usize; 3] = [8, 16, 32];

/// Three convolution blocks (3x3 conv, batch norm, rectifier, 2x2 max
/// pool) widening 3 input channels to 8, 16 and 32. The normalization
/// keeps the per-channel activation scale at unity through the stack,
/// so faint between-image contrasts survive to the pooled features
/// instead of decaying layer by layer; the convolutions carry no bias
/// because the normalization shift replaces it. On the native 109x91
/// input the output feature maps are 11x9x32. Anything at least 22x22
/// keeps a nonzero spatial extent through the final pooling stage;
/// smaller inputs are rejected by the layer asserts.
pub struct SmallCnn {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Relu<Ix4>,
    pool1: MaxPool2,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    relu2: Relu<Ix4>,
    pool2: MaxPool2,
    conv3: Conv2d,
    bn3: BatchNorm2d,
    relu3: Relu<Ix4>,
    pool3: MaxPool2,
    trainable: bool,
}

impl SmallCnn {
    /// Initialization draws the three kernels in block order from `rng`.
    pub fn new(rng: &mut PipelineRng) -> Self {
        let [c1, c2, c3] = SMALL_CNN_CHANNELS;
        SmallCnn {
            conv1: Conv2d::without_bias(3, 3, 3, c1, rng),
            bn1: BatchNorm2d::new(c1),
            relu1: Relu::new(),
            pool1: MaxPool2::new(),
            conv2: Conv2d::without_bias(3, 3, c1, c2, rng),
            bn2: BatchNorm2d::new(c2),
            relu2: Relu::new(),
            pool2: MaxPool2::new(),
            conv3: Conv2d::without_bias(3, 3, c2, c3, rng),
            bn3: BatchNorm2d::new(c3),
            relu3: Relu::new(),
            pool3: MaxPool2::new(),
            trainable: true,
        }
    }
}

impl FeatureExtractor for SmallCnn {
    fn name(&self) -> &'static str {
        SMALL_CNN_NAME
    }

    fn input_shape(&self) -> (usize, usize) {
        SMALL_CNN_INPUT
    }

    fn feature_channels(&self) -> usize {
        SMALL_CNN_CHANNELS[2]
    }

    fn trainable(&self) -> bool {
        self.trainable
    }

    fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        // A frozen backbone never backpropagates, so skip the caches;
        // its normalization also holds to the running statistics.
        let train = train && self.trainable;
        let mut h = self.conv1.forward(x, train);
        h = self.bn1.forward(&h, train);
        h = self.relu1.forward(&h, train);
        h = self.pool1.forward(&h, train);
        h = self.conv2.forward(&h, train);
        h = self.bn2.forward(&h, train);
        h = self.relu2.forward(&h, train);
        h = self.pool2.forward(&h, train);
        h = self.conv3.forward(&h, train);
        h = self.bn3.forward(&h, train);
        h = self.relu3.forward(&h, train);
        self.pool3.forward(&h, train)
    }

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        assert!(self.trainable, "backward through a frozen backbone");
        let mut d = self.pool3.backward(dy);
        d = self.relu3.backward(&d);
        d = self.bn3.backward(&d);
        d = self.conv3.backward(&d);
        d = self.pool2.backward(&d);
        d = self.relu2.backward(&d);
        d = self.bn2.backward(&d);
        d = self.conv2.backward(&d);
        d = self.pool1.backward(&d);
        d = self.relu1.backward(&d);
        d = self.bn1.backward(&d);
        self.conv1.backward(&d)
    }

    fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::with_capacity(15);
        for (block, conv, bn) in [
            (1, &mut self.conv1, &mut self.bn1),
            (2, &mut self.conv2, &mut self.bn2),
            (3, &mut self.conv3, &mut self.bn3),
        ] {
            for mut p in conv.params_mut() {
                p.name = format!("conv{block}.{}", p.name);
                out.push(p);
            }
            for mut p in bn.params_mut() {
                p.name = format!("bn{block}.{}", p.name);
                out.push(p);
            }
        }
        out
    }
}
