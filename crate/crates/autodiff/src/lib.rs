//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Operations are recorded on a [`Tape`]; every backward rule is itself
//! built from the same primitive operations, so gradients produced with
//! `create_graph` are differentiable again (double backward). That is
//! what makes unrolled bilevel hypergradients possible downstream.

mod backward;
mod error;
mod fd;
mod tape;
mod tensor;

pub use backward::backward;
pub use error::{AdError, Result};
pub use fd::{finite_diff_gradient, max_rel_err};
pub use tape::{concat, Tape, Var};
pub use tensor::Tensor;
