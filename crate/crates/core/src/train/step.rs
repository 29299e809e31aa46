use crate::autodiff::{AdamW, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::exec::{par_map, Parallelism};
use crate::models::{Model, ModelConfig, TokenSequence, MATCH_EE, MATCH_ET};
use crate::prob_embed::{
    infonce_graph, pcme_graph, teacher_aggregate, vib_graph, MatchMatrix, MatchScalars, ProbEmbedding,
};
use crate::signal::{augment, preprocess, AugmentConfig, Signal};
use crate::synthdata::Cohort;

use super::config::TrainConfig;

/// Rate every recording is brought to before encoding.
pub const TARGET_FS: f64 = 100.0;

/// Encoder-ready inputs of one sample; the teacher embedding is computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub window: Signal,
    pub tokens: TokenSequence,
    pub teacher: ProbEmbedding,
}

/// First encoder-length window of each recording, decimated and z-scored.
pub fn prepare_samples(cohort: &Cohort, model: &ModelConfig, par: Parallelism) -> Result<Vec<PreparedSample>> {
    let window_s = model.ecg.samples as f64 / TARGET_FS;
    par_map(&cohort.samples, par, |s| {
        let len = (window_s * s.signal.fs()).round() as usize;
        let raw = s.signal.slice(0, len)?;
        let window = preprocess(&raw, TARGET_FS)?;
        Ok(PreparedSample { window, tokens: s.tokens.clone(), teacher: teacher_aggregate(&s.frames) })
    })
    .into_iter()
    .collect()
}

/// Inputs of one optimisation step, pairs aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub windows: Vec<Signal>,
    pub tokens: Vec<TokenSequence>,
    pub teacher: Vec<ProbEmbedding>,
}

fn mix(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Batch {
    /// Gathers `indices`; each window is augmented with a seed derived from
    /// `aug_seed` and its index.
    pub fn assemble(prepared: &[PreparedSample], indices: &[usize], cfg: &AugmentConfig, aug_seed: u64) -> Batch {
        let mut batch = Batch { windows: Vec::new(), tokens: Vec::new(), teacher: Vec::new() };
        for &i in indices {
            let p = &prepared[i];
            let (w, _) = augment(&p.window, mix(aug_seed, i as u64), cfg);
            batch.windows.push(w);
            batch.tokens.push(p.tokens.clone());
            batch.teacher.push(p.teacher.clone());
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Loss terms of one step plus the ECG-text calibration scalars it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub l_et: f64,
    pub l_ee: f64,
    pub l_total: f64,
    pub a: f64,
    pub b: f64,
}

fn teacher_inputs(tape: &mut Tape, teacher: &[ProbEmbedding]) -> Result<(Var, Var)> {
    let d = teacher.first().map_or(0, ProbEmbedding::dim);
    let mu = teacher.iter().flat_map(|z| z.mu.iter().copied()).collect();
    let lv = teacher.iter().flat_map(|z| z.log_var.iter().copied()).collect();
    Ok((tape.input(Tensor::matrix(teacher.len(), d, mu)?), tape.input(Tensor::matrix(teacher.len(), d, lv)?)))
}

fn teacher_term(tape: &mut Tape, model: &Model, cfg: &TrainConfig, ecg: (Var, Var), batch: &Batch, m: &MatchMatrix) -> Result<Var> {
    let teacher = teacher_inputs(tape, &batch.teacher)?;
    let mut l = if cfg.loss_variant.is_probabilistic() {
        pcme_graph(tape, &model.store, &MatchScalars::with_prefix(MATCH_EE), ecg, teacher, m)?
    } else {
        infonce_graph(tape, ecg.0, teacher.0, m, cfg.infonce_temperature)?
    };
    if cfg.vib_weight > 0.0 {
        let kl = vib_graph(tape, ecg.0, ecg.1)?;
        let kl = tape.scale(kl, cfg.vib_weight);
        l = tape.add(l, kl)?;
    }
    Ok(l)
}

/// Builds the objective on `tape`. Returns the total-loss node and the
/// logged values. With an effective `λ = 1` the teacher term is evaluated
/// for logging only, after the total, so it cannot reach any gradient.
pub fn batch_losses(tape: &mut Tape, model: &Model, batch: &Batch, cfg: &TrainConfig) -> Result<(Var, LossValues)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let windows: Vec<&Signal> = batch.windows.iter().collect();
    let seqs: Vec<&TokenSequence> = batch.tokens.iter().collect();
    let ecg = model.ecg_graph(tape, &windows)?;
    let text = model.text_graph(tape, &seqs)?;
    let m = MatchMatrix::identity(batch.len());
    let et_scalars = MatchScalars::with_prefix(MATCH_ET);
    let mut l_et = if cfg.loss_variant.is_probabilistic() {
        pcme_graph(tape, &model.store, &et_scalars, ecg, text, &m)?
    } else {
        infonce_graph(tape, ecg.0, text.0, &m, cfg.infonce_temperature)?
    };
    if cfg.vib_weight > 0.0 {
        let ke = vib_graph(tape, ecg.0, ecg.1)?;
        let kt = vib_graph(tape, text.0, text.1)?;
        let k = tape.add(ke, kt)?;
        let k = tape.scale(k, 0.5 * cfg.vib_weight);
        l_et = tape.add(l_et, k)?;
    }
    let lambda = cfg.effective_lambda();
    let uses_teacher = cfg.loss_variant.uses_teacher();
    let (total, l_ee) = if uses_teacher && lambda < 1.0 {
        let l_ee = teacher_term(tape, model, cfg, ecg, batch, &m)?;
        let a = tape.scale(l_et, lambda);
        let b = tape.scale(l_ee, 1.0 - lambda);
        (tape.add(a, b)?, Some(l_ee))
    } else {
        (l_et, None)
    };
    let l_ee_value = match l_ee {
        Some(v) => tape.scalar_value(v)?,
        None if uses_teacher => {
            let v = teacher_term(tape, model, cfg, ecg, batch, &m)?;
            tape.scalar_value(v)?
        }
        None => 0.0,
    };
    let (a, b) = et_scalars.values(&model.store)?;
    let values = LossValues {
        l_et: tape.scalar_value(l_et)?,
        l_ee: l_ee_value,
        l_total: tape.scalar_value(total)?,
        a,
        b,
    };
    Ok((total, values))
}

/// One forward/backward pass and AdamW update. A non-finite loss aborts
/// before any parameter changes.
pub fn train_step(model: &mut Model, opt: &AdamW, batch: &Batch, cfg: &TrainConfig) -> Result<LossValues> {
    let mut tape = Tape::new();
    let (total, values) = batch_losses(&mut tape, model, batch, cfg)?;
    if ![values.l_et, values.l_ee, values.l_total].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "training loss (L_et={}, L_ee={}, L_total={}, a={}, b={})",
            values.l_et, values.l_ee, values.l_total, values.a, values.b
        )));
    }
    tape.backward(total, &mut model.store)?;
    if let Some((_, p)) = model.store.iter().find(|(_, p)| p.value.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite()))) {
        return Err(Error::NonFinite(format!("gradient of `{}`", p.name)));
    }
    opt.step(&mut model.store);
    Ok(values)
}
