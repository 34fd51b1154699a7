//! Dense arrays, layers and optimizers for small convolutional networks.
//!
//! Every layer owns its learnable parameters as [`DiffArray`]s and records
//! what it needs during [`Layer::forward`] so that a subsequent
//! [`Layer::backward`] can accumulate parameter gradients and return the
//! gradient with respect to its input. Arrays are row-major with the batch
//! on axis 0 and channels on axis 1 (`N×C×H×W` for images, `N×C×L` for
//! sequences).
//!
//! The engine is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod array;
pub mod checkpoint;
mod error;
mod gemm;
mod im2col;
pub mod layers;
mod loss;
mod scalar;

pub use adam::AdamState;
pub use array::DiffArray;
pub use error::{NumericsError, Result};
pub use gemm::gemm;
pub use layers::{
    concat_channels, softmax_channelwise, split_channels, BatchNorm, Conv1d, Conv2d,
    ConvTranspose2d, Layer, LayerKind, MaxPool2d, Mode, Relu, Reshape, Sequential,
    SoftmaxChannels,
};
pub use loss::{binary_cross_entropy, categorical_cross_entropy, weighted_categorical_cross_entropy, Loss, PROB_CLAMP};
pub use scalar::Scalar;
