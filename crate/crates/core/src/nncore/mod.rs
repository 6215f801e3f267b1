//! Minimal dense tensors with reverse-mode differentiation and Adam.

mod graph;
pub mod kernels;
mod optim;
mod tensor;

pub use graph::{Gradients, Graph, NodeId, LAYER_NORM_EPS};
pub use optim::{AdamConfig, ParamId, ParamStore, Parameter};
pub use tensor::{Scalar, Tensor};
