//! Diagonal-Gaussian embeddings, the closed-form sampled distance, and the
//! matching, contrastive, bottleneck and teacher terms built on it.

mod graph;
mod sampling;

pub use graph::{
    heads_on_tape, infonce_graph, match_logits_graph, pcme_graph, project_heads, vib_graph, HeadNames,
    MatchScalars,
};
pub use sampling::sampled_sq_distance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;
/// Variance floor before the log in [`teacher_aggregate`].
pub const TEACHER_VAR_FLOOR: f64 = 1e-8;
pub const DEFAULT_DIM: usize = 256;

/// `N(mu, diag(exp(log_var)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEmbedding {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl ProbEmbedding {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() {
            return Err(Error::shape("prob_embedding", format!("mu {} vs log_var {}", mu.len(), log_var.len())));
        }
        if mu.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding has non-finite entries".into()));
        }
        Ok(ProbEmbedding { mu, log_var })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn variance(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_var.iter().map(|v| v.exp())
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `‖μ₁ − μ₂‖² + Σ(σ₁² + σ₂²)`: the expected squared distance between
/// independent draws of the two Gaussians.
pub fn csd(z1: &ProbEmbedding, z2: &ProbEmbedding) -> Result<f64> {
    if z1.dim() != z2.dim() {
        return Err(Error::shape("csd", format!("dim {} vs {}", z1.dim(), z2.dim())));
    }
    let mean_term: f64 = z1.mu.iter().zip(&z2.mu).map(|(a, b)| (a - b) * (a - b)).sum();
    let var_term: f64 = z1.variance().zip(z2.variance()).map(|(a, b)| a + b).sum();
    Ok(mean_term + var_term)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `logistic(−a·d + b)`.
pub fn match_prob(d: f64, a: f64, b: f64) -> f64 {
    logistic(-a * d + b)
}

/// Binary pairing between two batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl MatchMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<bool>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::shape("match_matrix", format!("{} entries for {rows}×{cols}", entries.len())));
        }
        Ok(MatchMatrix { rows, cols, entries })
    }

    pub fn identity(n: usize) -> Self {
        let entries = (0..n * n).map(|k| k / n.max(1) == k % n.max(1)).collect();
        MatchMatrix { rows: n, cols: n, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j]
    }

    /// Row-major 0/1 targets.
    pub fn targets(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect()
    }

    /// Column of the single positive in each row; an error unless every row
    /// has exactly one.
    pub fn single_positive_per_row(&self) -> Result<Vec<usize>> {
        (0..self.rows)
            .map(|i| {
                let mut pos = (0..self.cols).filter(|&j| self.get(i, j));
                match (pos.next(), pos.next()) {
                    (Some(j), None) => Ok(j),
                    (None, _) => Err(Error::invalid(format!("row {i} has no positive"))),
                    _ => Err(Error::invalid(format!("row {i} has more than one positive"))),
                }
            })
            .collect()
    }

    pub fn transposed(&self) -> MatchMatrix {
        let mut entries = vec![false; self.entries.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                entries[j * self.rows + i] = self.get(i, j);
            }
        }
        MatchMatrix { rows: self.cols, cols: self.rows, entries }
    }
}

/// Weights and calibration constants of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda: f64,
    pub sigmoid_scale: f64,
    pub sigmoid_shift: f64,
    pub vib_weight: f64,
    pub infonce_temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 0.9, sigmoid_scale: 10.0, sigmoid_shift: 0.0, vib_weight: 0.0, infonce_temperature: 0.07 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", format!("{} outside [0, 1]", self.lambda)));
        }
        if !(self.sigmoid_scale > 0.0) {
            return Err(Error::config("sigmoid_scale", "must be > 0"));
        }
        if !self.sigmoid_shift.is_finite() {
            return Err(Error::config("sigmoid_shift", "must be finite"));
        }
        if !(self.vib_weight >= 0.0) {
            return Err(Error::config("vib_weight", "must be >= 0"));
        }
        if !(self.infonce_temperature > 0.0) {
            return Err(Error::config("infonce_temperature", "must be > 0"));
        }
        Ok(())
    }
}

fn check_batches(op: &'static str, a: usize, b: usize, m: &MatchMatrix) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(Error::invalid(format!("{op}: empty batch")));
    }
    if m.rows() != a || m.cols() != b {
        return Err(Error::shape(op, format!("batches {a}×{b} vs match matrix {}×{}", m.rows(), m.cols())));
    }
    Ok(())
}

/// Mean binary cross-entropy over every (i, j) between
/// `match_prob(csd(Aᵢ, Bⱼ))` and the pairing.
pub fn pcme_matching_loss(a: &[ProbEmbedding], b: &[ProbEmbedding], m: &MatchMatrix, w: &LossWeights) -> Result<f64> {
    check_batches("pcme_matching_loss", a.len(), b.len(), m)?;
    let mut total = 0.0;
    for (i, za) in a.iter().enumerate() {
        for (j, zb) in b.iter().enumerate() {
            let z = -w.sigmoid_scale * csd(za, zb)? + w.sigmoid_shift;
            let y = if m.get(i, j) { 1.0 } else { 0.0 };
            total += softplus(z) - y * z;
        }
    }
    Ok(total / (a.len() * b.len()) as f64)
}

fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv))
}

/// Cosine similarity; an error for zero vectors or unequal lengths.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine", format!("{} vs {}", u.len(), v.len())));
    }
    cosine(u, v)
}

fn mean_cross_entropy(logits: &[f64], n: usize, targets: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (row, &t) in logits.chunks(n).zip(targets) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - row[t];
    }
    loss / targets.len() as f64
}

/// Symmetric InfoNCE over cosine logits divided by `temperature`.
pub fn infonce_loss(a_mu: &[Vec<f64>], b_mu: &[Vec<f64>], m: &MatchMatrix, temperature: f64) -> Result<f64> {
    check_batches("infonce_loss", a_mu.len(), b_mu.len(), m)?;
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let rows = m.single_positive_per_row()?;
    let cols = m.transposed().single_positive_per_row()?;
    let (na, nb) = (a_mu.len(), b_mu.len());
    let mut logits = vec![0.0; na * nb];
    for (i, u) in a_mu.iter().enumerate() {
        for (j, v) in b_mu.iter().enumerate() {
            logits[i * nb + j] = cosine_similarity(u, v)? / temperature;
        }
    }
    let mut logits_t = vec![0.0; na * nb];
    for i in 0..na {
        for j in 0..nb {
            logits_t[j * na + i] = logits[i * nb + j];
        }
    }
    Ok(0.5 * (mean_cross_entropy(&logits, nb, &rows) + mean_cross_entropy(&logits_t, na, &cols)))
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn vib_regularizer(z: &ProbEmbedding) -> f64 {
    0.5 * z.mu.iter().zip(&z.log_var).map(|(m, lv)| lv.exp() + m * m - 1.0 - lv).sum::<f64>()
}

/// Per-frame embeddings of one teacher-modality item.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingSet {
    frames: Vec<Vec<f64>>,
}

impl FrameEmbeddingSet {
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::invalid("frame set needs at least one frame"));
        };
        let d = first.len();
        if d == 0 || frames.iter().any(|f| f.len() != d) {
            return Err(Error::shape("frame_set", "frames must share a nonzero dimension"));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame set has non-finite entries".into()));
        }
        Ok(FrameEmbeddingSet { frames })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn count(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }
}

/// Frame mean and population variance as a Gaussian. The mean is left
/// unnormalized.
pub fn teacher_aggregate(frames: &FrameEmbeddingSet) -> ProbEmbedding {
    let n = frames.count() as f64;
    let d = frames.dim();
    let mut mu = vec![0.0; d];
    for f in frames.frames() {
        mu.iter_mut().zip(f).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in frames.frames() {
        var.iter_mut().zip(f.iter().zip(&mu)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    let log_var = var.iter().map(|s| (s / n + TEACHER_VAR_FLOOR).ln()).collect();
    ProbEmbedding { mu, log_var }
}

/// `λ·L_et + (1 − λ)·L_ee`.
pub fn combined_loss(l_et: f64, l_ee: f64, lambda: f64) -> f64 {
    lambda * l_et + (1.0 - lambda) * l_ee
}

/// Mean of the variance vector.
pub fn uncertainty_scalar(z: &ProbEmbedding) -> f64 {
    if z.dim() == 0 {
        return 0.0;
    }
    z.variance().sum::<f64>() / z.dim() as f64
}
