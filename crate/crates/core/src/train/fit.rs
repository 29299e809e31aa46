use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::make_batches;
use super::step::{batch_losses, prepare_samples, train_step, Batch, LossValues, PreparedSample};
use crate::autodiff::{save_checkpoint, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::models::Model;
use crate::signal::AugmentConfig;
use crate::synthdata::Cohort;

pub const METRICS_CSV: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.pxm";
pub const BEST_CHECKPOINT: &str = "best.pxm";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub values: LossValues,
}

#[derive(Debug)]
pub struct FitOutput {
    /// Parameters after the last step.
    pub model: Model,
    /// Parameters with the lowest validation loss (initialisation included).
    pub best: ParamStore,
    pub best_epoch: usize,
    pub metrics: Vec<StepRecord>,
    /// Validation `L_total` before training and after every epoch.
    pub val_losses: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let n_val = if n < 2 || fraction <= 0.0 { 0 } else { ((fraction * n as f64).round() as usize).clamp(1, n - 1) };
    if n_val == 0 {
        return (order, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    train.sort_unstable();
    (train, val)
}

fn validation_loss(model: &Model, prepared: &[PreparedSample], val: &[usize], cfg: &RunConfig) -> Result<f64> {
    let mut weighted = 0.0;
    for chunk in val.chunks(cfg.train.batch_size) {
        let batch = Batch::assemble(prepared, chunk, &AugmentConfig::none(), 0);
        let mut tape = Tape::new();
        let (_, v) = batch_losses(&mut tape, model, &batch, &cfg.train)?;
        weighted += v.l_total * chunk.len() as f64;
    }
    Ok(weighted / val.len() as f64)
}

/// CSV with one row per optimisation step.
pub fn write_metrics_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("epoch,step,L_et,L_ee,L_total,a,b\n");
    for r in records {
        let v = r.values;
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.epoch, r.step, v.l_et, v.l_ee, v.l_total, v.a, v.b);
    }
    out
}

/// Trains on `cohort`. When `out` is given, writes the metrics CSV and the
/// final and best checkpoints there.
pub fn fit(cohort: &Cohort, cfg: &RunConfig, out: Option<&Path>) -> Result<FitOutput> {
    cfg.validate_for(&cohort.config)?;
    if cohort.is_empty() {
        return Err(Error::invalid("cohort is empty"));
    }
    let tc = &cfg.train;
    let prepared = prepare_samples(cohort, &cfg.model, Parallelism::Auto)?;
    let (train_indices, val_indices) = split(cohort.len(), tc.val_fraction, tc.seed);
    let mut model = Model::init(&cfg.model, tc.seed)?;
    let opt = tc.optimizer();
    let mut metrics = Vec::new();
    let mut val_losses = Vec::new();
    let mut best = model.store.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    if !val_indices.is_empty() {
        best_val = validation_loss(&model, &prepared, &val_indices, cfg)?;
        val_losses.push(best_val);
    }
    let mut step = 0;
    for epoch in 1..=tc.epochs {
        let aug_seed = tc.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(epoch as u64);
        for batch_idx in make_batches(&train_indices, tc.batch_size, tc.seed, epoch)? {
            let batch = Batch::assemble(&prepared, &batch_idx, &cfg.augment, aug_seed);
            let values = train_step(&mut model, &opt, &batch, tc)
                .map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, step {step}: {msg}")),
                    other => other,
                })?;
            metrics.push(StepRecord { epoch, step, values });
            step += 1;
        }
        if !val_indices.is_empty() {
            let v = validation_loss(&model, &prepared, &val_indices, cfg)?;
            val_losses.push(v);
            if v < best_val {
                best_val = v;
                best = model.store.clone();
                best_epoch = epoch;
            }
        }
    }
    if val_indices.is_empty() {
        best = model.store.clone();
        best_epoch = tc.epochs;
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mp = dir.join(METRICS_CSV);
        std::fs::write(&mp, write_metrics_csv(&metrics)).map_err(|e| Error::io(&mp, e))?;
        save_checkpoint(&model.store, &dir.join(FINAL_CHECKPOINT))?;
        save_checkpoint(&best, &dir.join(BEST_CHECKPOINT))?;
    }
    Ok(FitOutput { model, best, best_epoch, metrics, val_losses, train_indices, val_indices })
}
