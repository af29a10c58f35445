//! Forward kernels and their vector-Jacobian products.
//!
//! These are plain functions over [`Tensor`](crate::Tensor)s; the
//! [`Tape`](crate::autodiff::Tape) wires them into a differentiable graph.

pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod loss;
pub mod pool;
pub mod reduce;

pub use conv::{conv3d, Conv3dGeometry};
pub use dense::dense;
pub use elementwise::{add, broadcast_mul, mul, relu, sigmoid};
pub use loss::{bce_loss, BCE_EPS};
pub use pool::{maxpool, Window};
pub use reduce::{reduce, ReduceMode};
