//! Seeded generator of paired cohorts: a 12-lead ECG-like recording, a token
//! report, a teacher frame-embedding set and labels per sample.
//!
//! Recordings come from a three-dipole beat model projected to the leads
//! through the Kors pseudo-inverse. Each class owns a small extra deflection
//! that appears only in a configurable fraction of 10-s windows, so some
//! windows are uninformative. Heart rate, electrical axis and T-wave size are
//! drawn per sample from coarse buckets and named in the report, which gives
//! retrieval something to match beyond the class.

mod store;

pub use store::{load_cohort, read_manifest, write_cohort, CohortManifest, SampleRecord};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{par_range, Parallelism};
use crate::models::TokenSequence;
use crate::prob_embed::FrameEmbeddingSet;
use crate::signal::{derive_limb_leads, KorsMatrix, Signal};

pub const FILLER_TOKENS: usize = 16;
pub const TOKENS_PER_CLASS: usize = 4;
pub const RATE_BUCKETS: [f64; 4] = [62.0, 70.0, 78.0, 86.0];
pub const AXIS_BUCKETS: [f64; 4] = [-0.5, -0.15, 0.15, 0.5];
pub const T_RATIO_BUCKETS: [f64; 3] = [0.6, 1.0, 1.4];
const ATTRIBUTE_TOKENS: usize = RATE_BUCKETS.len() + AXIS_BUCKETS.len() + T_RATIO_BUCKETS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub fs: f64,
    pub duration_s: f64,
    /// Length of the annotation windows.
    pub window_s: f64,
    /// Fraction of windows carrying the class pattern.
    pub event_rate: f64,
    pub noise_grades: Vec<f64>,
    pub teacher_frames: usize,
    pub teacher_dim: usize,
    pub teacher_jitter: f64,
    pub vocab_size: usize,
    pub tokens_per_report: usize,
    pub class_tokens_per_report: usize,
    /// Peak amplitude of the class deflection, mV.
    pub pattern_amplitude: f64,
    /// Probability that a recording carries one noise burst.
    pub burst_rate: f64,
    pub burst_duration_s: f64,
    pub burst_amplitude: f64,
    /// Classes labelled 1 by [`label_lvef`]; `None` means the lower half.
    pub low_lvef_classes: Option<Vec<usize>>,
    /// Seeds the class patterns and teacher directions, so cohorts that
    /// differ only in `seed` share their classes.
    pub class_seed: u64,
    /// Seeds the individual samples.
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            classes: 8,
            samples_per_class: 64,
            fs: 100.0,
            duration_s: 10.0,
            window_s: 10.0,
            event_rate: 0.6,
            noise_grades: vec![0.0, 0.1, 0.3],
            teacher_frames: 16,
            teacher_dim: 256,
            teacher_jitter: 0.1,
            vocab_size: 64,
            tokens_per_report: 12,
            class_tokens_per_report: 3,
            pattern_amplitude: 0.4,
            burst_rate: 0.0,
            burst_duration_s: 2.0,
            burst_amplitude: 2.0,
            low_lvef_classes: None,
            class_seed: 0,
            seed: 0,
        }
    }
}

/// Token id ranges: pad, filler, class blocks, attribute words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub classes: usize,
}

impl TokenLayout {
    pub fn filler(&self, k: usize) -> usize {
        1 + k
    }

    pub fn class_token(&self, class: usize, k: usize) -> usize {
        1 + FILLER_TOKENS + class * TOKENS_PER_CLASS + k
    }

    fn attr_base(&self) -> usize {
        1 + FILLER_TOKENS + self.classes * TOKENS_PER_CLASS
    }

    pub fn rate_token(&self, bucket: usize) -> usize {
        self.attr_base() + bucket
    }

    pub fn axis_token(&self, bucket: usize) -> usize {
        self.attr_base() + RATE_BUCKETS.len() + bucket
    }

    pub fn t_ratio_token(&self, bucket: usize) -> usize {
        self.attr_base() + RATE_BUCKETS.len() + AXIS_BUCKETS.len() + bucket
    }

    pub fn required_vocab(&self) -> usize {
        self.attr_base() + ATTRIBUTE_TOKENS
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::config("classes", "need at least one class"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class", "must be >= 1"));
        }
        if !(self.event_rate > 0.0 && self.event_rate <= 1.0) {
            return Err(Error::config("event_rate", format!("{} outside (0, 1]", self.event_rate)));
        }
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(Error::config("fs", "must be positive"));
        }
        if !(self.window_s > 0.0) {
            return Err(Error::config("window_s", "must be positive"));
        }
        if !(self.duration_s >= self.window_s) {
            return Err(Error::config("duration_s", "must be at least one window long"));
        }
        if self.noise_grades.is_empty() || self.noise_grades.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::config("noise_grades", "need one or more non-negative grades"));
        }
        if self.teacher_frames == 0 {
            return Err(Error::config("teacher_frames", "must be >= 1"));
        }
        if self.teacher_dim < self.classes {
            return Err(Error::config("teacher_dim", "must be >= classes for orthogonal class directions"));
        }
        if !(self.teacher_jitter >= 0.0) {
            return Err(Error::config("teacher_jitter", "must be >= 0"));
        }
        let layout = self.layout();
        if self.vocab_size < layout.required_vocab() {
            return Err(Error::config(
                "vocab_size",
                format!("{} classes need a vocabulary of at least {}", self.classes, layout.required_vocab()),
            ));
        }
        if self.tokens_per_report < self.class_tokens_per_report + 3 || self.tokens_per_report > crate::models::MAX_TOKENS {
            return Err(Error::config(
                "tokens_per_report",
                "must hold the class tokens plus three attribute tokens and stay within the token limit",
            ));
        }
        if self.class_tokens_per_report == 0 {
            return Err(Error::config("class_tokens_per_report", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.burst_rate) {
            return Err(Error::config("burst_rate", "must lie in [0, 1]"));
        }
        if self.burst_rate > 0.0 && !(self.burst_duration_s > 0.0 && self.burst_duration_s <= self.duration_s) {
            return Err(Error::config("burst_duration_s", "must be positive and fit in the recording"));
        }
        if !(self.pattern_amplitude >= 0.0) || !(self.burst_amplitude >= 0.0) {
            return Err(Error::config("pattern_amplitude", "amplitudes must be >= 0"));
        }
        if let Some(low) = &self.low_lvef_classes {
            if let Some(bad) = low.iter().find(|&&c| c >= self.classes) {
                return Err(Error::config("low_lvef_classes", format!("class {bad} does not exist")));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> TokenLayout {
        TokenLayout { classes: self.classes }
    }

    pub fn sample_count(&self) -> usize {
        self.classes * self.samples_per_class
    }

    pub fn samples_per_record(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn windows_per_record(&self) -> usize {
        (self.duration_s / self.window_s + 1e-9).floor() as usize
    }
}

/// Per-sample bucket indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub rate: usize,
    pub axis: usize,
    pub t_ratio: usize,
}

/// Noise burst placement in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start_s: f64,
    pub end_s: f64,
}

impl Burst {
    pub fn overlaps(&self, from_s: f64, to_s: f64) -> bool {
        self.start_s < to_s && self.end_s > from_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: usize,
    /// 12-lead recording.
    pub signal: Signal,
    pub tokens: TokenSequence,
    pub frames: FrameEmbeddingSet,
    pub label: usize,
    pub lvef: u8,
    pub noise_grade: f64,
    pub attributes: Attributes,
    /// One flag per annotation window: does it carry the class pattern.
    pub pattern_windows: Vec<bool>,
    pub burst: Option<Burst>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub config: CohortConfig,
    pub samples: Vec<PairedSample>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples at `indices`, keeping the configuration.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort { config: self.config.clone(), samples: indices.iter().map(|&i| self.samples[i].clone()).collect() }
    }
}

/// `1` for classes configured as low ejection fraction, else `0`.
pub fn label_lvef(label: usize, cfg: &CohortConfig) -> Result<u8> {
    if label >= cfg.classes {
        return Err(Error::invalid(format!("class {label} is not mapped (only {} classes)", cfg.classes)));
    }
    let low = match &cfg.low_lvef_classes {
        Some(set) => set.contains(&label),
        None => label < cfg.classes / 2,
    };
    Ok(u8::from(low))
}

struct Wave {
    offset_s: f64,
    width_s: f64,
    dir: [f64; 3],
}

const BASE_WAVES: [(f64, f64, [f64; 3]); 5] = [
    (-0.18, 0.025, [0.10, 0.15, 0.05]),
    (-0.03, 0.008, [-0.10, -0.05, 0.10]),
    (0.0, 0.012, [0.80, 1.00, -0.30]),
    (0.035, 0.010, [-0.20, -0.30, 0.30]),
    (0.30, 0.050, [0.25, 0.30, -0.10]),
];
const T_WAVE: usize = 4;
const PATTERN_WIDTH_S: f64 = 0.05;

/// Class-level structure shared by every sample of a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    /// Per-class extra deflection: offset after the R peak (s) and direction.
    pub patterns: Vec<(f64, [f64; 3])>,
    /// Orthonormal teacher directions, one per class.
    pub teacher_directions: Vec<Vec<f64>>,
}

fn unit3<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.map(|x| x / n);
        }
    }
}

/// Gram–Schmidt on Gaussian draws.
fn orthonormal<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &out {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

impl ClassModel {
    pub fn new(cfg: &CohortConfig) -> ClassModel {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.class_seed);
        let c = cfg.classes;
        let mut corners: Vec<[f64; 3]> = (0..8)
            .map(|b| [0, 1, 2].map(|bit| if b >> bit & 1 == 1 { 1.0 } else { -1.0 } / 3f64.sqrt()))
            .collect();
        corners.shuffle(&mut rng);
        let patterns = (0..c)
            .map(|k| {
                let offset = 0.07 + 0.38 * k as f64 / (c - 1).max(1) as f64;
                (offset, if k < corners.len() { corners[k] } else { unit3(&mut rng) })
            })
            .collect();
        let teacher_directions = orthonormal(c, cfg.teacher_dim, &mut rng);
        ClassModel { patterns, teacher_directions }
    }
}

fn gaussian(t: f64, width: f64) -> f64 {
    (-0.5 * (t / width) * (t / width)).exp()
}

fn rotate_frontal(v: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Indices of the windows that carry the pattern.
fn choose_pattern_windows<R: Rng>(windows: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    if windows <= 1 {
        return vec![rng.random::<f64>() < rate; windows];
    }
    let k = if rate >= 1.0 { windows } else { ((rate * windows as f64).round() as usize).clamp(1, windows - 1) };
    let mut idx: Vec<usize> = (0..windows).collect();
    idx.shuffle(rng);
    let mut flags = vec![false; windows];
    for &i in &idx[..k] {
        flags[i] = true;
    }
    flags
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn generate_sample(cfg: &CohortConfig, model: &ClassModel, kors: &[[f64; 3]; 8], index: usize) -> Result<PairedSample> {
    let mut rng = sample_rng(cfg.seed, index);
    let label = index % cfg.classes;
    let within = index / cfg.classes;
    let noise_grade = cfg.noise_grades[within % cfg.noise_grades.len()];
    let attributes = Attributes {
        rate: rng.random_range(0..RATE_BUCKETS.len()),
        axis: rng.random_range(0..AXIS_BUCKETS.len()),
        t_ratio: rng.random_range(0..T_RATIO_BUCKETS.len()),
    };
    let bpm = RATE_BUCKETS[attributes.rate] + rng.random_range(-2.0..2.0);
    let axis = AXIS_BUCKETS[attributes.axis] + rng.random_range(-0.05..0.05);
    let t_ratio = T_RATIO_BUCKETS[attributes.t_ratio] + rng.random_range(-0.05..0.05);
    let windows = cfg.windows_per_record();
    let pattern_windows = choose_pattern_windows(windows, cfg.event_rate, &mut rng);

    let n = cfg.samples_per_record();
    let fs = cfg.fs;
    let waves: Vec<Wave> = BASE_WAVES
        .iter()
        .enumerate()
        .map(|(i, (offset_s, width_s, dir))| {
            let gain = if i == T_WAVE { t_ratio } else { 1.0 };
            Wave { offset_s: *offset_s, width_s: *width_s, dir: rotate_frontal(dir.map(|v| v * gain), axis) }
        })
        .collect();
    let (pattern_offset, pattern_dir) = model.patterns[label];
    let pattern_dir = pattern_dir.map(|v| v * cfg.pattern_amplitude);

    let rr = 60.0 / bpm;
    let mut beats = Vec::new();
    let mut t = rng.random_range(0.0..rr) - rr;
    while t < cfg.duration_s + rr {
        beats.push(t);
        t += rr * (1.0 + rng.random_range(-0.02..0.02));
    }
    let mut vcg = vec![vec![0.0; n]; 3];
    for &beat in &beats {
        let window = (beat / cfg.window_s).floor();
        let has_pattern = window >= 0.0 && (window as usize) < windows && pattern_windows[window as usize];
        for (s, slot) in (0..n).map(|s| (s, s as f64 / fs - beat)) {
            if !(-0.4..=0.8).contains(&slot) {
                continue;
            }
            for w in &waves {
                let g = gaussian(slot - w.offset_s, w.width_s);
                for ax in 0..3 {
                    vcg[ax][s] += g * w.dir[ax];
                }
            }
            if has_pattern {
                let g = gaussian(slot - pattern_offset, PATTERN_WIDTH_S);
                for ax in 0..3 {
                    vcg[ax][s] += g * pattern_dir[ax];
                }
            }
        }
    }
    let mut leads8: Vec<Vec<f64>> =
        kors.iter().map(|row| (0..n).map(|s| row[0] * vcg[0][s] + row[1] * vcg[1][s] + row[2] * vcg[2][s]).collect()).collect();
    for lead in &mut leads8 {
        for v in lead.iter_mut() {
            *v += noise_grade * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let burst = if cfg.burst_rate > 0.0 && rng.random::<f64>() < cfg.burst_rate {
        let len = cfg.burst_duration_s;
        let start = rng.random_range(0.0..=(cfg.duration_s - len));
        let phase = rng.random_range(0.0..2.0 * PI);
        let (a, b) = ((start * fs).round() as usize, (((start + len) * fs).round() as usize).min(n));
        for lead in &mut leads8 {
            for (s, v) in lead.iter_mut().enumerate().take(b).skip(a) {
                let wander = 0.75 * cfg.burst_amplitude * (2.0 * PI * 0.7 * s as f64 / fs + phase).sin();
                *v += wander + cfg.burst_amplitude * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Some(Burst { start_s: start, end_s: start + len })
    } else {
        None
    };
    let signal = derive_limb_leads(leads8, fs)?;

    let layout = cfg.layout();
    let mut ids = Vec::with_capacity(cfg.tokens_per_report);
    for _ in 0..cfg.class_tokens_per_report {
        ids.push(layout.class_token(label, rng.random_range(0..TOKENS_PER_CLASS)));
    }
    ids.push(layout.rate_token(attributes.rate));
    ids.push(layout.axis_token(attributes.axis));
    ids.push(layout.t_ratio_token(attributes.t_ratio));
    let mut k = 0;
    while ids.len() < cfg.tokens_per_report {
        ids.push(layout.filler(k % FILLER_TOKENS));
        k += 1;
    }
    ids.shuffle(&mut rng);
    let tokens = TokenSequence::new(ids, cfg.vocab_size)?;

    let dir = &model.teacher_directions[label];
    let frames = (0..cfg.teacher_frames)
        .map(|_| dir.iter().map(|m| m + cfg.teacher_jitter * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let frames = FrameEmbeddingSet::new(frames)?;

    Ok(PairedSample {
        id: index,
        signal,
        tokens,
        frames,
        label,
        lvef: label_lvef(label, cfg)?,
        noise_grade,
        attributes,
        pattern_windows,
        burst,
    })
}

/// Generates every sample; identical for every parallelism mode.
pub fn generate_cohort_with(cfg: &CohortConfig, kors: &KorsMatrix, par: Parallelism) -> Result<Cohort> {
    cfg.validate()?;
    let model = ClassModel::new(cfg);
    let pinv = kors.pseudo_inverse()?;
    let samples = par_range(cfg.sample_count(), par, |i| generate_sample(cfg, &model, &pinv, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort { config: cfg.clone(), samples })
}

pub fn generate_cohort(cfg: &CohortConfig) -> Result<Cohort> {
    generate_cohort_with(cfg, &KorsMatrix::default(), Parallelism::Auto)
}

/// Zero-shot prompts: for each class, the class block with one word left out,
/// padded with a fixed filler run.
pub fn class_prompts(cfg: &CohortConfig) -> Result<Vec<Vec<TokenSequence>>> {
    let layout = cfg.layout();
    let filler_len = cfg.tokens_per_report.saturating_sub(TOKENS_PER_CLASS - 1 + 3).max(1);
    (0..cfg.classes)
        .map(|c| {
            (0..TOKENS_PER_CLASS)
                .map(|skip| {
                    let mut ids: Vec<usize> =
                        (0..TOKENS_PER_CLASS).filter(|&k| k != skip).map(|k| layout.class_token(c, k)).collect();
                    ids.extend((0..filler_len).map(|k| layout.filler(k % FILLER_TOKENS)));
                    TokenSequence::new(ids, cfg.vocab_size)
                })
                .collect()
        })
        .collect()
}

/// Nearest-class-mean accuracy over every individual teacher frame.
pub fn teacher_centroid_accuracy(cohort: &Cohort) -> f64 {
    let c = cohort.config.classes;
    let d = cohort.config.teacher_dim;
    let mut means = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    for s in &cohort.samples {
        for f in s.frames.frames() {
            means[s.label].iter_mut().zip(f).for_each(|(m, v)| *m += v);
            counts[s.label] += 1;
        }
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= (*n).max(1) as f64);
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in &cohort.samples {
        for f in s.frames.frames() {
            let best = (0..c)
                .map(|k| (k, means[k].iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
                .fold((0, f64::INFINITY), |acc, (k, dist)| if dist < acc.1 { (k, dist) } else { acc });
            correct += usize::from(best.0 == s.label);
            total += 1;
        }
    }
    correct as f64 / total.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortConfig {
        CohortConfig { classes: 3, samples_per_class: 4, teacher_dim: 16, ..Default::default() }
    }

    #[test]
    fn rejects_zero_event_rate() {
        let cfg = CohortConfig { event_rate: 0.0, ..small() };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("event_rate"), "{err}");
    }

    #[test]
    fn lvef_lookup() {
        let cfg = CohortConfig::default();
        assert_eq!(label_lvef(0, &cfg).unwrap(), 1);
        assert_eq!(label_lvef(cfg.classes - 1, &cfg).unwrap(), 0);
        assert!(label_lvef(cfg.classes, &cfg).is_err());
    }

    #[test]
    fn shapes_and_labels() {
        let cfg = small();
        let cohort = generate_cohort_with(&cfg, &KorsMatrix::default(), Parallelism::Sequential).unwrap();
        assert_eq!(cohort.len(), 12);
        for s in &cohort.samples {
            assert!(s.label < 3);
            assert_eq!(s.signal.lead_count(), 12);
            assert_eq!(s.signal.samples(), 1000);
            assert_eq!(s.tokens.ids().len(), cfg.tokens_per_report);
            assert_eq!((s.frames.count(), s.frames.dim()), (16, 16));
            assert_eq!(s.pattern_windows.len(), 1);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = small();
        let a = generate_cohort_with(&cfg, &KorsMatrix::default(), Parallelism::Sequential).unwrap();
        let b = generate_cohort_with(&cfg, &KorsMatrix::default(), Parallelism::Auto).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn teacher_directions_orthogonal() {
        let cfg = CohortConfig { classes: 2, ..small() };
        let m = ClassModel::new(&cfg);
        let dot: f64 = m.teacher_directions[0].iter().zip(&m.teacher_directions[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() <= 0.1);
    }

    #[test]
    fn long_records_have_a_clean_window() {
        let cfg = CohortConfig { duration_s: 30.0, event_rate: 0.6, ..small() };
        let cohort = generate_cohort(&cfg).unwrap();
        for s in &cohort.samples {
            assert_eq!(s.pattern_windows.len(), 3);
            assert!(s.pattern_windows.iter().any(|p| !p));
            assert!(s.pattern_windows.iter().any(|p| *p));
        }
    }

    #[test]
    fn prompts_cover_classes() {
        let cfg = CohortConfig::default();
        let p = class_prompts(&cfg).unwrap();
        assert_eq!(p.len(), cfg.classes);
        assert!(p.iter().all(|v| v.len() == TOKENS_PER_CLASS));
    }
}
