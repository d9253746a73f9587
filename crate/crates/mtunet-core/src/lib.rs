//! Multi-task U-Net for joint lesion segmentation and classification.
//!
//! A self-contained CPU implementation: dense tensors with reverse-mode
//! autodiff, a hybrid convolution/window-attention encoder, dilated skip
//! enhancement, a segmentation decoder, dual output heads, the combined
//! training loss, and the evaluation metrics. Everything is generic over the
//! scalar type ([`Scalar`]): `f64` for oracles and gradient checks, `f32`
//! when training speed matters.

pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Result, TensorError};
pub use layers::Mode;
pub use param::{Buffer, NamedBuffers, NamedParams, Parameter};
pub use rng::RngState;
pub use scalar::{cast, Scalar};
pub use tensor::{no_grad, Tensor};

/// Single-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor (oracles, gradient checks).
pub type Tensor64 = Tensor<f64>;
