//! Multi-scale convolutional pixel classifier.
//!
//! Each pyramid level runs through its own branch of convolution blocks and
//! 2×2 max pooling. Dense inference applies pooling with stride 1 and splits
//! the result into parity fragments so that every output pixel sees exactly
//! the same computation as a patch classified in isolation.

mod io;
mod layers;
mod network;
mod pyramid;
mod tensor;
mod topology;
mod toy;
mod train;
mod tune;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use layers::{
    defragment, fragment, max_pool_overlapping, max_pool_strided, relu, upscale_nearest, Conv2d,
    Dense,
};
pub use network::{softmax, DenseOutput, Network};
pub use pyramid::{build_pyramid, downsample, local_normalize, NORM_EPSILON, NORM_WINDOW};
pub use tensor::{FeatureMapArray, Tensor3};
pub use topology::{ConvVariant, PoolingMode, Topology};
pub use train::{
    class_balanced_samples, confusion, evaluate_accuracy, loss_and_gradient, loss_only, select_learn_rate, train,
    LabeledImage, Sample, TrainConfig, TrainResult,
};
pub use toy::toy_texture_dataset;
pub use tune::{tune_biases_mcc, BIAS_GRID_STEP, BIAS_GRID_STEPS, BIAS_SWEEPS};

use std::fmt::Debug;

/// Storage type for activations and weights. Reductions always accumulate in
/// `f64`, so `f32` and `f64` networks differ only in storage rounding.
pub trait Scalar: Copy + Default + PartialOrd + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
