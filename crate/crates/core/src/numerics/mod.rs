//! Dense f32 tensors, a define-by-run autodiff tape, and categorical
//! sampling helpers.

mod gradcheck;
mod sampling;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradient, relative_error};
pub use sampling::{entropy, sample_categorical, softmax};
pub use tape::{entropy_of_logits, log_softmax_slice, GradMap, OpKind, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid shape {shape:?}: dimensions must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("categorical distribution over zero outcomes")]
    EmptyLogits,
}
