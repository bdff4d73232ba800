//! Dense tensor arithmetic with reverse-mode differentiation.
//!
//! Everything is 32-bit and single-threaded: evaluation order is the
//! insertion order of the graph, so a fixed seed gives bit-identical runs.
//! Tensors and evaluated graphs are immutable apart from gradient buffers,
//! which only [`graph::Graph::backward`] touches.

pub mod gradcheck;
pub mod graph;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_graph};
pub use graph::{Graph, NodeId};
pub use tensor::{matmul, transpose, NumericsError, Tensor};
