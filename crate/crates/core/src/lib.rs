//! Probabilistic cross-modal embeddings for ECG-like signals.
//!
//! Encoders map each ECG window and each token report to a diagonal Gaussian
//! (unit-norm mean, log-variance). Pairs are matched through the closed-form
//! expected squared distance between samples, and a frozen teacher built from
//! per-frame embeddings of a third modality adds a second matching term.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod exec;
pub mod models;
pub mod prob_embed;
pub mod signal;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
