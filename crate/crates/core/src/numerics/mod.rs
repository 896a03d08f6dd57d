//! Dense tensors, a reverse-mode tape over the handful of primitives the
//! model needs, and Adam.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheck, FD_STEP, RELATIVE_FLOOR};
pub use graph::{logistic, Gradients, Graph, NodeId};
pub use tensor::Tensor;
