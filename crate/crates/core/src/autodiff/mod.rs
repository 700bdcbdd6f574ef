//! Nested automatic differentiation.
//!
//! Input derivatives (up to third order, mixed partials included) come from
//! truncated multivariate Taylor jets; parameter gradients come from a
//! reverse-mode [`Tape`]. Jets over tape variables give gradients of losses
//! that themselves contain input derivatives.

mod bundle;
mod fdcheck;
mod jet;
mod params;
mod scalar;
mod tape;

pub use bundle::{evaluate_with_input_derivatives, DerivativeBundle};
pub use fdcheck::{
    fd_partial, finite_difference_check, finite_difference_gradient_check, FdEntry, FdReport,
    FdStencil,
};
pub use jet::{multi_index_degree, Jet, JetLayout, MultiIndex, MAX_AXES, MAX_ORDER};
pub use params::{parameter_gradient, BlockKind, ParamBlock, ParamLayout, ParameterVector};
pub use scalar::{Elementary, Scalar};
pub use tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("non-differentiable primitive `{0}`")]
    NonDifferentiable(&'static str),
    #[error("derivative order {0} not supported (1..=3)")]
    UnsupportedOrder(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("derivative {index:?} (order {}) missing from bundle", multi_index_degree(index))]
    MissingDerivative { index: MultiIndex },
    #[error("non-finite value at record {record}")]
    NonFinite { record: usize },
}
