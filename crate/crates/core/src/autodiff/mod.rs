//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute. Each recorded
//! node keeps its forward value plus whatever the backward rule needs
//! (argmin indices, im2col buffers). [`Tape::backward`] walks the nodes in
//! reverse insertion order, which is a valid reverse topological order
//! because a node can only reference nodes created before it.
//!
//! Broadcasting is limited to scalar-with-tensor in the elementwise
//! binary ops. Row-bias addition and column slicing are explicit ops.

pub mod kernels;
mod tape;
mod tensor;

pub use tape::{ConvGeometry, Tape, Var};
pub use tensor::Tensor;
