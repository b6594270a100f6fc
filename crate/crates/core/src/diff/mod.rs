//! Dense tensors and reverse-mode differentiation.

mod check;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use check::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use kernels::ConvGeom;
pub use tensor::Tensor;
