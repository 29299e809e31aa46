use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamW;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::models::ModelConfig;
use crate::prob_embed::LossWeights;
use crate::signal::AugmentConfig;
use crate::synthdata::CohortConfig;

/// Which terms make up the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    #[serde(rename = "infonce")]
    Infonce,
    #[serde(rename = "infonce+teacher")]
    InfonceTeacher,
    #[serde(rename = "pcme")]
    Pcme,
    #[serde(rename = "pcme+teacher")]
    PcmeTeacher,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] =
        [LossVariant::Infonce, LossVariant::InfonceTeacher, LossVariant::Pcme, LossVariant::PcmeTeacher];

    pub fn uses_teacher(self) -> bool {
        matches!(self, LossVariant::InfonceTeacher | LossVariant::PcmeTeacher)
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, LossVariant::Pcme | LossVariant::PcmeTeacher)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Infonce => "infonce",
            LossVariant::InfonceTeacher => "infonce+teacher",
            LossVariant::Pcme => "pcme",
            LossVariant::PcmeTeacher => "pcme+teacher",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("loss_variant", format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_variant: LossVariant,
    pub vib_weight: f64,
    pub infonce_temperature: f64,
    /// Fraction of the cohort held out for best-checkpoint selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.9,
            lr: 4e-4,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            loss_variant: LossVariant::PcmeTeacher,
            vib_weight: 0.0,
            infonce_temperature: 0.07,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("train.lambda", format!("{} outside [0, 1]", self.lambda)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("train.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("train.adam_eps", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if !(self.vib_weight >= 0.0) {
            return Err(Error::config("train.vib_weight", "must be >= 0"));
        }
        if !(self.infonce_temperature > 0.0) {
            return Err(Error::config("train.infonce_temperature", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("train.val_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `λ` actually applied: variants without a teacher use the ECG-text term only.
    pub fn effective_lambda(&self) -> f64 {
        if self.loss_variant.uses_teacher() {
            self.lambda
        } else {
            1.0
        }
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW { lr: self.lr, weight_decay: self.weight_decay, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn loss_weights(&self, model: &ModelConfig) -> LossWeights {
        LossWeights {
            lambda: self.effective_lambda(),
            sigmoid_scale: model.match_scale_init,
            sigmoid_shift: model.match_shift_init,
            vib_weight: self.vib_weight,
            infonce_temperature: self.infonce_temperature,
        }
    }
}

/// Everything a run needs; every section and field has a default and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cohort: CohortConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub augment: AugmentConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cohort: CohortConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            augment: AugmentConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".to_string());
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        self.train.validate()?;
        self.model.validate()?;
        self.augment.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// Cross-section checks needed before training on `cohort`.
    pub fn validate_for(&self, cohort: &CohortConfig) -> Result<()> {
        self.validate()?;
        if self.train.loss_variant.uses_teacher() && cohort.teacher_dim != self.model.embed_dim {
            return Err(Error::config(
                "model.embed_dim",
                format!("teacher dimension {} differs from embedding dimension {}", cohort.teacher_dim, self.model.embed_dim),
            ));
        }
        if cohort.vocab_size > self.model.text.vocab_size {
            return Err(Error::config(
                "model.text.vocab_size",
                format!("cohort uses {} tokens, encoder has {}", cohort.vocab_size, self.model.text.vocab_size),
            ));
        }
        if cohort.duration_s + 1e-9 < self.model.ecg.samples as f64 / super::TARGET_FS {
            return Err(Error::config("model.ecg.samples", "encoder window is longer than the recordings"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let t = TrainConfig::default();
        assert_eq!((t.lambda, t.lr, t.weight_decay), (0.9, 4e-4, 0.1));
        assert_eq!((t.epochs, t.batch_size), (30, 32));
    }

    #[test]
    fn empty_json_is_default() {
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_json_str(r#"{"train": {"lamda": 0.5}}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn lambda_range() {
        let err = RunConfig::from_json_str(r#"{"train": {"lambda": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("lambda"));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in LossVariant::ALL {
            assert_eq!(v.name().parse::<LossVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("pcme++".parse::<LossVariant>().is_err());
    }
}
