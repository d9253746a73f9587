//! Error types shared by every tensor operation and model layer.

use thiserror::Error;

/// Structured failure of a tensor operation or layer forward.
#[derive(Debug, Error)]
pub enum TensorError {
    /// One axis had the wrong length.
    #[error("{op}: shape mismatch on axis {axis}: expected {expected}, got {got}")]
    AxisSize {
        op: &'static str,
        axis: usize,
        expected: usize,
        got: usize,
    },

    /// Wrong number of axes.
    #[error("{op}: rank mismatch: expected {expected} axes, got {got}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    /// Element count does not match the requested shape.
    #[error("{op}: data length {len} does not match shape {shape:?} ({expected} elements)")]
    Numel {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
        expected: usize,
    },

    /// `backward` called on a tensor that is not a scalar.
    #[error("backward: loss must be a scalar, got {numel} elements")]
    NonScalarLoss { numel: usize },

    /// Batch statistics over a single element are undefined.
    #[error("batch_norm: degenerate variance (batch*spatial size is 1 in training mode)")]
    DegenerateVariance,

    /// Anything else, tagged with the operation name.
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

impl TensorError {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Invalid {
            op,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
