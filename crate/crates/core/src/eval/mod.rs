//! Zero-shot, linear-probe, retrieval and uncertainty protocols over a
//! trained [`Model`], plus window selection on long records and the loss
//! variant ablation grid.

mod metrics;
mod probe;
mod report;

pub use metrics::{
    balanced_accuracy, binary_entropy, cosine_matrix, mean_sd, median_split, recall_at_k, zeroshot_classify,
    MedianSplit,
};
pub use probe::{fit_probe, linear_probe, LinearProbe, ProbeOptions, ProbeOutput};
pub use report::{config_hash, trace_csv, AblationRow, AblationTable, EvalReport, MetricRow};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::exec::{par_map, Parallelism};
use crate::models::{Model, TokenSequence};
use crate::prob_embed::{uncertainty_scalar, MatchMatrix, ProbEmbedding};
use crate::signal::{preprocess, sliding_windows, Signal};
use crate::synthdata::{class_prompts, Cohort, CohortConfig};
use crate::train::{fit, prepare_samples, LossVariant, RunConfig, TARGET_FS};

/// Evaluation settings carried in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Share of the probe training half used to fit the probe; 0.1 and 1.0
    /// are the usual few-shot presets.
    pub few_shot_fraction: f64,
    /// Share of a cohort held out as probe test set.
    pub probe_test_fraction: f64,
    pub probe: ProbeOptions,
    pub ablation_seeds: Vec<u64>,
    /// Share of a cohort held out as ablation test set.
    pub ablation_test_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            few_shot_fraction: 1.0,
            probe_test_fraction: 0.5,
            probe: ProbeOptions::default(),
            ablation_seeds: vec![0, 1, 2, 3, 4],
            ablation_test_fraction: 1.0 / 3.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.few_shot_fraction) {
            return Err(Error::config("eval.few_shot_fraction", "must lie in (0, 1]"));
        }
        if !(self.probe_test_fraction > 0.0 && self.probe_test_fraction < 1.0) {
            return Err(Error::config("eval.probe_test_fraction", "must lie in (0, 1)"));
        }
        if !(self.ablation_test_fraction > 0.0 && self.ablation_test_fraction < 1.0) {
            return Err(Error::config("eval.ablation_test_fraction", "must lie in (0, 1)"));
        }
        if !(self.probe.l2 >= 0.0) || !(self.probe.tol > 0.0) {
            return Err(Error::config("eval.probe", "l2 must be >= 0 and tol > 0"));
        }
        if self.ablation_seeds.len() < 3 {
            return Err(Error::config("eval.ablation_seeds", "at least 3 seeds are required"));
        }
        Ok(())
    }
}

/// Deterministic `(rest, held_out)` partition of `0..n`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot hold out part of {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_E7A1));
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut held: Vec<usize> = order[..k].to_vec();
    let mut rest: Vec<usize> = order[k..].to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    Ok((rest, held))
}

/// Probability entropy, in bits, above which a probe prediction counts as uncertain.
pub const ENTROPY_THRESHOLD: f64 = 0.5;

/// Text prompts per class, class index = position.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    classes: Vec<Vec<TokenSequence>>,
}

impl PromptSet {
    pub fn new(classes: Vec<Vec<TokenSequence>>) -> Result<PromptSet> {
        if classes.len() < 2 {
            return Err(Error::invalid("a prompt set needs at least two classes"));
        }
        if let Some(c) = classes.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("class {c} has no prompts")));
        }
        Ok(PromptSet { classes })
    }

    pub fn for_cohort(cfg: &CohortConfig) -> Result<PromptSet> {
        PromptSet::new(class_prompts(cfg)?)
    }

    pub fn classes(&self) -> &[Vec<TokenSequence>] {
        &self.classes
    }

    pub fn embed(&self, model: &Model, par: Parallelism) -> Result<Vec<Vec<ProbEmbedding>>> {
        self.classes.iter().map(|p| model.encode_text_batch(p, par)).collect()
    }
}

/// Encoder outputs for every sample of a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCohort {
    pub ecg: Vec<ProbEmbedding>,
    pub text: Vec<ProbEmbedding>,
    pub labels: Vec<usize>,
    pub noise_grades: Vec<f64>,
}

impl EmbeddedCohort {
    pub fn len(&self) -> usize {
        self.ecg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ecg.is_empty()
    }

    /// ECG σ² averaged over dimensions.
    pub fn uncertainties(&self) -> Vec<f64> {
        self.ecg.iter().map(uncertainty_scalar).collect()
    }

    pub fn sigma2_split(&self) -> Result<MedianSplit> {
        median_split(&self.uncertainties())
    }

    pub fn mus(&self) -> Vec<Vec<f64>> {
        self.ecg.iter().map(|z| z.mu.clone()).collect()
    }
}

pub fn embed_cohort(model: &Model, cohort: &Cohort, par: Parallelism) -> Result<EmbeddedCohort> {
    if cohort.is_empty() {
        return Err(Error::invalid("cohort is empty"));
    }
    let prepared = prepare_samples(cohort, &model.config, par)?;
    let windows: Vec<Signal> = prepared.iter().map(|p| p.window.clone()).collect();
    let tokens: Vec<TokenSequence> = prepared.into_iter().map(|p| p.tokens).collect();
    Ok(EmbeddedCohort {
        ecg: model.encode_ecg_batch(&windows, par)?,
        text: model.encode_text_batch(&tokens, par)?,
        labels: cohort.samples.iter().map(|s| s.label).collect(),
        noise_grades: cohort.samples.iter().map(|s| s.noise_grade).collect(),
    })
}

pub fn zeroshot_predictions(ecg: &[ProbEmbedding], prompts: &[Vec<ProbEmbedding>]) -> Result<Vec<usize>> {
    ecg.iter().map(|z| zeroshot_classify(z, prompts)).collect()
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Seed and configuration fingerprint stamped on every report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_hash: String,
}

/// Zero-shot balanced accuracy, overall and per σ² half.
pub fn evaluate_zeroshot(emb: &EmbeddedCohort, prompts: &[Vec<ProbEmbedding>], meta: &ReportMeta) -> Result<EvalReport> {
    let preds = zeroshot_predictions(&emb.ecg, prompts)?;
    let halves = emb.sigma2_split()?;
    let row = MetricRow::split_by("balanced_accuracy", "sigma2", emb.len(), &halves, |idx| {
        balanced_accuracy(&pick(&preds, idx), &pick(&emb.labels, idx))
    })?;
    finish("zeroshot", vec![row], meta)
}

/// Deterministic subset holding `fraction` of `n` indices, at least one.
pub fn few_shot_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("few-shot fraction {fraction} is outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(((fraction * n as f64).round() as usize).max(1));
    order.sort_unstable();
    Ok(order)
}

/// Linear probe on frozen μ. Test samples are split by σ² median and by
/// prediction entropy.
pub fn evaluate_probe(
    train: &EmbeddedCohort,
    test: &EmbeddedCohort,
    fraction: f64,
    opts: &ProbeOptions,
    meta: &ReportMeta,
) -> Result<EvalReport> {
    let idx = few_shot_indices(train.len(), fraction, meta.seed)?;
    let out = linear_probe(&pick(&train.mus(), &idx), &pick(&train.labels, &idx), &test.mus(), opts)?;
    let score = |i: &[usize]| balanced_accuracy(&pick(&out.predictions, i), &pick(&test.labels, i));
    let sigma = MetricRow::split_by("balanced_accuracy", "sigma2", test.len(), &test.sigma2_split()?, score)?;
    let entropy: Vec<f64> =
        out.probabilities.iter().map(|p| binary_entropy(p.iter().cloned().fold(0.0, f64::max))).collect();
    let (low, high): (Vec<usize>, Vec<usize>) = (0..test.len()).partition(|&i| entropy[i] <= ENTROPY_THRESHOLD);
    let degenerate = low.is_empty() || high.is_empty();
    let by_entropy = MedianSplit { median: ENTROPY_THRESHOLD, low, high, degenerate };
    let ent = MetricRow::split_by("balanced_accuracy", "entropy", test.len(), &by_entropy, score)?;
    finish("probe", vec![sigma, ent], meta)
}

fn recall_subset(sim: &[Vec<f64>], rows: &[usize], k: usize) -> Result<f64> {
    let n = sim.first().map_or(0, Vec::len);
    let sub: Vec<Vec<f64>> = pick(sim, rows);
    let mut entries = vec![false; rows.len() * n];
    for (r, &i) in rows.iter().enumerate() {
        entries[r * n + i] = true;
    }
    recall_at_k(&sub, &MatchMatrix::new(rows.len(), n, entries)?, k)
}

/// Paired retrieval in both directions with μ cosine; a query's own pair is
/// its only match. Halves follow the σ² of the query's ECG.
pub fn evaluate_retrieval(emb: &EmbeddedCohort, k: usize, meta: &ReportMeta) -> Result<EvalReport> {
    let halves = emb.sigma2_split()?;
    let t2e = cosine_matrix(&emb.text, &emb.ecg)?;
    let e2t = cosine_matrix(&emb.ecg, &emb.text)?;
    let rows = vec![
        MetricRow::split_by(&format!("text_to_ecg_R@{k}"), "sigma2", emb.len(), &halves, |i| recall_subset(&t2e, i, k))?,
        MetricRow::split_by(&format!("ecg_to_text_R@{k}"), "sigma2", emb.len(), &halves, |i| recall_subset(&e2t, i, k))?,
    ];
    finish("retrieve", rows, meta)
}

/// Text-to-ECG R@1 over the whole set.
pub fn text_to_ecg_recall(emb: &EmbeddedCohort, k: usize) -> Result<f64> {
    recall_at_k(&cosine_matrix(&emb.text, &emb.ecg)?, &MatchMatrix::identity(emb.len()), k)
}

fn finish(task: &str, rows: Vec<MetricRow>, meta: &ReportMeta) -> Result<EvalReport> {
    let report = EvalReport { task: task.into(), seed: meta.seed, config_hash: meta.config_hash.clone(), rows };
    report.check()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelection {
    pub index: usize,
    pub offset_s: f64,
    /// `(window offset in seconds, uncertainty)` for every window.
    pub trace: Vec<(f64, f64)>,
}

/// Slides an encoder-length window over `signal` and keeps the one with the
/// lowest uncertainty, earliest on ties.
pub fn select_window(signal: &Signal, model: &Model, stride_s: f64, par: Parallelism) -> Result<WindowSelection> {
    let win_s = model.config.ecg.samples as f64 / TARGET_FS;
    let windows = sliding_windows(signal, win_s, stride_s)?;
    let prepared: Vec<Signal> =
        par_map(&windows, par, |w| preprocess(&w.signal, TARGET_FS)).into_iter().collect::<Result<_>>()?;
    let emb = model.encode_ecg_batch(&prepared, par)?;
    let trace: Vec<(f64, f64)> = windows.iter().zip(&emb).map(|(w, z)| (w.offset_s, uncertainty_scalar(z))).collect();
    if let Some((i, _)) = trace.iter().find(|(_, u)| !u.is_finite()) {
        return Err(Error::NonFinite(format!("uncertainty of window at {i} s")));
    }
    let index = trace.iter().enumerate().fold(0, |best, (i, t)| if t.1 < trace[best].1 { i } else { best });
    Ok(WindowSelection { index, offset_s: trace[index].0, trace })
}

/// One trained cell of the ablation grid.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: LossVariant,
    pub seed: u64,
    pub zeroshot: f64,
    pub recall_at_1: f64,
    /// Wall-clock training time.
    pub train_seconds: f64,
    /// Parameters after the last epoch.
    pub store: ParamStore,
}

impl AblationRun {
    pub fn model(&self, cfg: &RunConfig) -> Result<Model> {
        let mut model = Model::init(&cfg.model, self.seed)?;
        model.load(&self.store)?;
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub table: AblationTable,
    pub runs: Vec<AblationRun>,
}

/// Trains every `(variant, seed)` pair on `train` with `base` otherwise
/// unchanged, then scores zero-shot balanced accuracy and text-to-ECG R@1 on
/// `test`. For a given seed all variants see the same split, init and batches.
pub fn ablation_run(
    train: &Cohort,
    test: &Cohort,
    base: &RunConfig,
    variants: &[LossVariant],
    seeds: &[u64],
    par: Parallelism,
) -> Result<AblationOutput> {
    if seeds.len() < 3 {
        return Err(Error::invalid(format!("ablation needs at least 3 seeds, got {}", seeds.len())));
    }
    if variants.is_empty() {
        return Err(Error::invalid("no loss variants"));
    }
    let prompts = PromptSet::for_cohort(&test.config)?;
    let grid: Vec<(LossVariant, u64)> = variants.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let runs: Vec<AblationRun> = par_map(&grid, par, |&(variant, seed)| {
        let mut cfg = base.clone();
        cfg.train.seed = seed;
        cfg.train.loss_variant = variant;
        let started = Instant::now();
        let trained = fit(train, &cfg, None)?;
        let train_seconds = started.elapsed().as_secs_f64();
        let store = trained.model.store;
        let run = AblationRun { variant, seed, zeroshot: 0.0, recall_at_1: 0.0, train_seconds, store };
        let model = run.model(&cfg)?;
        let emb = embed_cohort(&model, test, Parallelism::Sequential)?;
        let preds = zeroshot_predictions(&emb.ecg, &prompts.embed(&model, Parallelism::Sequential)?)?;
        Ok(AblationRun {
            zeroshot: balanced_accuracy(&preds, &emb.labels)?,
            recall_at_1: text_to_ecg_recall(&emb, 1)?,
            ..run
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let rows = variants
        .iter()
        .map(|v| {
            let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.variant == *v).collect();
            AblationRow {
                variant: v.name().to_string(),
                seeds: mine.iter().map(|r| r.seed).collect(),
                zeroshot: mine.iter().map(|r| r.zeroshot).collect(),
                recall_at_1: mine.iter().map(|r| r.recall_at_1).collect(),
            }
        })
        .collect();
    Ok(AblationOutput { table: AblationTable { config_hash: config_hash(base)?, rows }, runs })
}
