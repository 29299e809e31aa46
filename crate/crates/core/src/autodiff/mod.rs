//! Reverse-mode differentiation, layers, AdamW and checkpoints.

mod checkpoint;
mod gradcheck;
pub(crate) mod kernels;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions};
pub use layers::{forward_graph, Layer, LAYER_NORM_EPS};
pub use optim::{adamw_update, AdamW};
pub use params::{MomentState, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
