//! Define-by-run reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! execution order, so the node list is already topologically sorted and
//! [`Graph::backward`] walks it once in reverse. Values and gradients are
//! held in f64; learnable parameters live in a [`ParamSet`] and are rounded
//! to f32 precision after every optimizer update so checkpoints (f32 on
//! disk) are exact images of the in-memory model.

mod adam;
mod gradcheck;
mod graph;
mod lstm;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_sampled, rel_err, GRAD_CHECK_STEP};
pub use graph::{Gradients, Graph, Var};
pub use lstm::{lstm_forward, LstmLayer};
pub use params::{init_uniform, ParamSet};
pub use tensor::Tensor;
