//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Gradients are available with respect to any differentiable leaf, which
//! is how attacks obtain input gradients from the same forward code that
//! training uses for parameter gradients.

mod gradcheck;
mod graph;
mod params;
mod tensor;

use thiserror::Error;

pub use gradcheck::{
    analytic_gradient, check_gradients, check_gradients_at, numeric_partial, scalar_fn,
};
pub use graph::{Gradients, Graph, Var};
pub use params::{BoundParams, ParameterSet};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("invalid shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match buffer length {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index} produced by {op}")]
    NonFinite { op: &'static str, index: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: input outside domain at index {index}")]
    Domain { op: &'static str, index: usize },
    #[error("slice {start}..{end} out of bounds for shape {shape:?}")]
    SliceBounds {
        start: usize,
        end: usize,
        shape: Vec<usize>,
    },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("loss must be a single element, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("parameter {name:?}: expected shape {expected:?}, got {len} values")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        len: usize,
    },
}
