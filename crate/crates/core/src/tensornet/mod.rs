//! Minimal reverse-mode differentiable computation core.
//!
//! A [`Graph`] is a tape: every forward operation appends a node holding its
//! output and whatever it needs for the backward sweep. Learnable tensors live
//! in a [`ParamSet`]; graph operations reference them by name and
//! [`Graph::backward`] writes the gradients back into the set.

mod codec;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use codec::{decode_params, encode_params, PARAMS_MAGIC};
pub use graph::{softmax_in_place as softmax_row, Graph, Mode, NodeId, BN_EPS, BN_MOMENTUM};
pub use optim::{adam_step, sgd_step, Optimizer};
pub use params::{copy_params, init_params, LayerSpec, ParamEntry, ParamSet};
pub use tensor::Tensor;
