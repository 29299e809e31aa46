//! Sequential layer lists evaluated onto a [`Tape`].

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// One step of a sequential graph. Parameters are referenced by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `x · W + b` with `W: in × out`.
    Dense { weight: String, bias: Option<String> },
    Relu,
    /// Kernels `Cout × Cin × K` over a `Cin × T` input.
    Conv1d { weight: String, bias: Option<String>, stride: usize, padding: usize },
    /// Normalizes each time step across channels.
    LayerNorm { gain: String, bias: String },
    /// `C × T` to `1 × C`.
    GlobalAvgPool,
    /// `x + f(x)` where `f` is the inner list.
    Residual(Vec<Layer>),
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Applies `layers` in order to `input`. An empty list returns the input.
pub fn forward_graph(layers: &[Layer], input: Var, store: &ParamStore, tape: &mut Tape) -> Result<Var> {
    let mut x = input;
    for layer in layers {
        x = match layer {
            Layer::Dense { weight, bias } => {
                let w = tape.param_by_name(store, weight)?;
                let y = tape.matmul(x, w)?;
                match bias {
                    Some(b) => {
                        let b = tape.param_by_name(store, b)?;
                        tape.add_row_bias(y, b)?
                    }
                    None => y,
                }
            }
            Layer::Relu => tape.relu(x),
            Layer::Conv1d { weight, bias, stride, padding } => {
                let w = tape.param_by_name(store, weight)?;
                let b = match bias {
                    Some(b) => Some(tape.param_by_name(store, b)?),
                    None => None,
                };
                tape.conv1d(x, w, b, *stride, *padding)?
            }
            Layer::LayerNorm { gain, bias } => {
                let g = tape.param_by_name(store, gain)?;
                let b = tape.param_by_name(store, bias)?;
                tape.layer_norm_cols(x, g, b, LAYER_NORM_EPS)?
            }
            Layer::GlobalAvgPool => tape.mean_cols(x)?,
            Layer::Residual(inner) => {
                let y = forward_graph(inner, x, store, tape)?;
                tape.add(x, y)?
            }
        };
    }
    Ok(x)
}
