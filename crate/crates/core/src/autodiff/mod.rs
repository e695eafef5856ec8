//! Dense tensors and a tape-based reverse-mode differentiator covering the
//! operations the emotion model needs: full-width convolution, time pooling,
//! affine layers, masked softmax, dropout, embedding lookup and
//! cross-entropy.
//!
//! Every op records its inputs on a [`Graph`]; [`Graph::backward`] replays
//! the tape in reverse and accumulates gradients into leaves created with
//! [`Graph::param`].

mod check;
mod graph;
mod tensor;

pub use check::{central_difference, relative_error, FD_STEP};
pub use graph::{Graph, PoolMode, Var, LOG_FLOOR, STD_EPS};
pub use tensor::Tensor;
