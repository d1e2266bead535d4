//! Minimal reverse-mode differentiation engine for small convolutional
//! classifiers, plus SGD and parameter serialization.

pub mod checkpoint;
mod graph;
mod optim;
mod tensor;

pub use graph::{Graph, Var};
pub use optim::{Sgd, SgdConfig};
pub use tensor::{Element, Tensor};
