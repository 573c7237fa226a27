//! Dense tensors and reverse-mode differentiation.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{finite_difference_gradient, max_relative_error, relative_error};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::{normal_cdf, sigmoid, Activation, Tensor};

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-6;
