use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const MAX_TOKENS: usize = 244;

/// Token ids of one report; [`PAD`] marks padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if ids.len() > MAX_TOKENS {
            return Err(Error::invalid(format!("{} tokens exceed the limit of {MAX_TOKENS}", ids.len())));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::invalid(format!("token {bad} outside vocabulary of {vocab_size}")));
        }
        Ok(TokenSequence { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn content(&self) -> Vec<usize> {
        self.ids.iter().copied().filter(|&i| i != PAD).collect()
    }
}

/// Embedding table, mean pool over non-pad tokens, two ReLU layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextEncoderConfig {
    pub vocab_size: usize,
    pub token_dim: usize,
    pub hidden: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig { vocab_size: 64, token_dim: 64, hidden: 128 }
    }
}

impl TextEncoderConfig {
    pub fn feature_dim(&self) -> usize {
        self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("model.text.vocab_size", "must be >= 2 (pad plus one token)"));
        }
        if self.token_dim == 0 {
            return Err(Error::config("model.text.token_dim", "must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("model.text.hidden", "must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn init<R: Rng>(&self, store: &mut ParamStore, prefix: &str, rng: &mut R) -> Result<()> {
        store.insert_normal(format!("{prefix}.embedding"), &[self.vocab_size, self.token_dim], 1.0, rng)?;
        let s1 = (2.0 / self.token_dim as f64).sqrt();
        store.insert_normal(format!("{prefix}.mlp1.weight"), &[self.token_dim, self.hidden], s1, rng)?;
        store.insert(format!("{prefix}.mlp1.bias"), Tensor::zeros(&[self.hidden]))?;
        let s2 = (2.0 / self.hidden as f64).sqrt();
        store.insert_normal(format!("{prefix}.mlp2.weight"), &[self.hidden, self.hidden], s2, rng)?;
        store.insert(format!("{prefix}.mlp2.bias"), Tensor::zeros(&[self.hidden]))?;
        Ok(())
    }

    /// Mean of the non-pad token embeddings of every sequence, `m × E`.
    pub(crate) fn pooled(&self, tape: &mut Tape, store: &ParamStore, prefix: &str, seqs: &[&TokenSequence]) -> Result<Var> {
        let table = tape.param_by_name(store, &format!("{prefix}.embedding"))?;
        let rows = seqs
            .iter()
            .map(|s| {
                let ids = s.content();
                if ids.is_empty() {
                    return Err(Error::invalid("token sequence is empty after removing padding"));
                }
                let emb = tape.gather_rows(table, &ids)?;
                tape.mean_rows(emb)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }

    /// `m × hidden` features for a batch of sequences.
    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, prefix: &str, seqs: &[&TokenSequence]) -> Result<Var> {
        let mut h = self.pooled(tape, store, prefix, seqs)?;
        for layer in ["mlp1", "mlp2"] {
            let w = tape.param_by_name(store, &format!("{prefix}.{layer}.weight"))?;
            let b = tape.param_by_name(store, &format!("{prefix}.{layer}.bias"))?;
            h = tape.matmul(h, w)?;
            h = tape.add_row_bias(h, b)?;
            h = tape.relu(h);
        }
        Ok(h)
    }
}
