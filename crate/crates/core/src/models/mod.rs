//! Student encoders: a small 1D-ResNet for ECG windows and a bag-of-tokens
//! text encoder, both ending in (μ, log σ²) heads.

mod ecg;
mod text;

pub use ecg::EcgEncoderConfig;
pub use text::{TextEncoderConfig, TokenSequence, MAX_TOKENS, PAD};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::exec::{par_map, Parallelism};
use crate::prob_embed::{heads_on_tape, HeadNames, MatchScalars, ProbEmbedding, DEFAULT_DIM};
use crate::signal::Signal;

pub const ECG_PREFIX: &str = "ecg";
pub const TEXT_PREFIX: &str = "text";
/// Calibration scalars of the ECG-text matching term.
pub const MATCH_ET: &str = "match.et";
/// Calibration scalars of the ECG-teacher matching term.
pub const MATCH_EE: &str = "match.ee";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub ecg: EcgEncoderConfig,
    pub text: TextEncoderConfig,
    pub embed_dim: usize,
    /// Initial bias of both log-variance heads.
    pub log_var_bias_init: f64,
    pub match_scale_init: f64,
    pub match_shift_init: f64,
    /// Initial shift of the ECG-teacher scalars; `None` reuses `match_shift_init`.
    pub teacher_match_shift_init: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            ecg: EcgEncoderConfig::default(),
            text: TextEncoderConfig::default(),
            embed_dim: DEFAULT_DIM,
            log_var_bias_init: -7.0,
            match_scale_init: 10.0,
            match_shift_init: 0.0,
            teacher_match_shift_init: None,
        }
    }
}

impl ModelConfig {
    /// Reduced ECG encoder for fast desk-scale runs.
    pub fn desk() -> Self {
        ModelConfig { ecg: EcgEncoderConfig::desk(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.ecg.validate()?;
        self.text.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::config("model.embed_dim", "must be >= 1"));
        }
        if !(self.match_scale_init > 0.0) {
            return Err(Error::config("model.match_scale_init", "must be > 0"));
        }
        let teacher_shift = self.teacher_match_shift_init.unwrap_or(self.match_shift_init);
        if !self.log_var_bias_init.is_finite() || !self.match_shift_init.is_finite() || !teacher_shift.is_finite() {
            return Err(Error::config("model", "initial biases must be finite"));
        }
        Ok(())
    }
}

/// Both encoders plus the matching calibration scalars.
#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    ecg_head: HeadNames,
    text_head: HeadNames,
}

impl Model {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.embed_dim;
        config.ecg.init(&mut store, ECG_PREFIX, &mut rng)?;
        let ecg_head = HeadNames::with_prefix(&format!("{ECG_PREFIX}.head"));
        ecg_head.init(&mut store, config.ecg.feature_dim(), d, config.log_var_bias_init, &mut rng)?;
        config.text.init(&mut store, TEXT_PREFIX, &mut rng)?;
        let text_head = HeadNames::with_prefix(&format!("{TEXT_PREFIX}.head"));
        text_head.init(&mut store, config.text.feature_dim(), d, config.log_var_bias_init, &mut rng)?;
        let teacher_shift = config.teacher_match_shift_init.unwrap_or(config.match_shift_init);
        for (prefix, shift) in [(MATCH_ET, config.match_shift_init), (MATCH_EE, teacher_shift)] {
            MatchScalars::with_prefix(prefix).init(&mut store, config.match_scale_init, shift)?;
        }
        Ok(Model { config: config.clone(), store, ecg_head, text_head })
    }

    /// Replaces every parameter value with the checkpointed one.
    pub fn load(&mut self, checkpoint: &ParamStore) -> Result<()> {
        self.store.load_values(checkpoint)
    }

    pub fn ecg_head(&self) -> &HeadNames {
        &self.ecg_head
    }

    pub fn text_head(&self) -> &HeadNames {
        &self.text_head
    }

    /// Number of ECG encoder parameters, heads included.
    pub fn ecg_param_count(&self) -> usize {
        self.store.numel_with_prefix(&format!("{ECG_PREFIX}."))
    }

    /// ECG features for a batch of windows, `m × F` on the tape.
    pub fn ecg_features(&self, tape: &mut Tape, windows: &[&Signal]) -> Result<Var> {
        self.ecg_features_in(tape, &self.store, windows)
    }

    /// As [`Model::ecg_features`], reading parameters from `store`.
    pub fn ecg_features_in(&self, tape: &mut Tape, store: &ParamStore, windows: &[&Signal]) -> Result<Var> {
        let rows = windows
            .iter()
            .map(|w| self.config.ecg.forward(tape, store, ECG_PREFIX, w))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }

    /// `(μ, log σ²)` rows for a batch of ECG windows.
    pub fn ecg_graph(&self, tape: &mut Tape, windows: &[&Signal]) -> Result<(Var, Var)> {
        self.ecg_graph_in(tape, &self.store, windows)
    }

    pub fn ecg_graph_in(&self, tape: &mut Tape, store: &ParamStore, windows: &[&Signal]) -> Result<(Var, Var)> {
        let f = self.ecg_features_in(tape, store, windows)?;
        heads_on_tape(tape, store, &self.ecg_head, f)
    }

    /// `(μ, log σ²)` rows for a batch of token sequences.
    pub fn text_graph(&self, tape: &mut Tape, seqs: &[&TokenSequence]) -> Result<(Var, Var)> {
        self.text_graph_in(tape, &self.store, seqs)
    }

    pub fn text_graph_in(&self, tape: &mut Tape, store: &ParamStore, seqs: &[&TokenSequence]) -> Result<(Var, Var)> {
        let f = self.config.text.forward(tape, store, TEXT_PREFIX, seqs)?;
        heads_on_tape(tape, store, &self.text_head, f)
    }

    pub fn ecg_encode(&self, window: &Signal) -> Result<ProbEmbedding> {
        let mut tape = Tape::new();
        let (mu, lv) = self.ecg_graph(&mut tape, &[window])?;
        ProbEmbedding::new(tape.value(mu).data().to_vec(), tape.value(lv).data().to_vec())
    }

    pub fn text_encode(&self, tokens: &TokenSequence) -> Result<ProbEmbedding> {
        let mut tape = Tape::new();
        let (mu, lv) = self.text_graph(&mut tape, &[tokens])?;
        ProbEmbedding::new(tape.value(mu).data().to_vec(), tape.value(lv).data().to_vec())
    }

    /// Encodes windows independently, in parallel unless `par` is sequential.
    pub fn encode_ecg_batch(&self, windows: &[Signal], par: Parallelism) -> Result<Vec<ProbEmbedding>> {
        par_map(windows, par, |w| self.ecg_encode(w)).into_iter().collect()
    }

    pub fn encode_text_batch(&self, seqs: &[TokenSequence], par: Parallelism) -> Result<Vec<ProbEmbedding>> {
        par_map(seqs, par, |s| self.text_encode(s)).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_encoder_is_desk_scale() {
        let m = Model::init(&ModelConfig::default(), 0).unwrap();
        let n = m.ecg_param_count();
        assert!(n < 500_000, "{n} parameters");
        assert!(n > 100_000);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Model::init(&ModelConfig::desk(), 5).unwrap();
        let b = Model::init(&ModelConfig::desk(), 5).unwrap();
        for ((_, p), (_, q)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(p.value.data(), q.value.data());
        }
    }
}
