use rand::Rng;

use super::{MatchMatrix, ProbEmbedding, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Parameter names of a (μ, log σ²) head pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadNames {
    pub mu_weight: String,
    pub mu_bias: String,
    pub log_var_weight: String,
    pub log_var_bias: String,
}

impl HeadNames {
    pub fn with_prefix(prefix: &str) -> Self {
        HeadNames {
            mu_weight: format!("{prefix}.mu.weight"),
            mu_bias: format!("{prefix}.mu.bias"),
            log_var_weight: format!("{prefix}.log_var.weight"),
            log_var_bias: format!("{prefix}.log_var.bias"),
        }
    }

    /// Registers both heads: Gaussian weights scaled by `1/√in`, zero μ bias,
    /// constant log-variance bias.
    pub fn init<R: Rng>(
        &self,
        store: &mut ParamStore,
        in_dim: usize,
        out_dim: usize,
        log_var_bias: f64,
        rng: &mut R,
    ) -> Result<()> {
        let std = 1.0 / (in_dim as f64).sqrt();
        store.insert_normal(&self.mu_weight, &[in_dim, out_dim], std, rng)?;
        store.insert_normal(&self.mu_bias, &[out_dim], 0.1 * std, rng)?;
        store.insert_normal(&self.log_var_weight, &[in_dim, out_dim], 0.1 * std, rng)?;
        store.insert(&self.log_var_bias, Tensor::filled(&[out_dim], log_var_bias))?;
        Ok(())
    }
}

/// Heads over an `m × F` feature matrix: row-normalized μ and clamped log σ².
pub fn heads_on_tape(tape: &mut Tape, store: &ParamStore, names: &HeadNames, features: Var) -> Result<(Var, Var)> {
    let wm = tape.param_by_name(store, &names.mu_weight)?;
    let bm = tape.param_by_name(store, &names.mu_bias)?;
    let wl = tape.param_by_name(store, &names.log_var_weight)?;
    let bl = tape.param_by_name(store, &names.log_var_bias)?;
    let raw_mu = tape.matmul(features, wm)?;
    let raw_mu = tape.add_row_bias(raw_mu, bm)?;
    let mu = tape.l2_normalize_rows(raw_mu)?;
    let raw_lv = tape.matmul(features, wl)?;
    let raw_lv = tape.add_row_bias(raw_lv, bl)?;
    let lv = tape.clamp(raw_lv, LOG_VAR_MIN, LOG_VAR_MAX);
    Ok((mu, lv))
}

/// Applies the heads to one feature vector.
pub fn project_heads(features: &[f64], store: &ParamStore, names: &HeadNames) -> Result<ProbEmbedding> {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::matrix(1, features.len(), features.to_vec())?);
    let (mu, lv) = heads_on_tape(&mut tape, store, names, x)?;
    ProbEmbedding::new(tape.value(mu).data().to_vec(), tape.value(lv).data().to_vec())
}

/// Names of the trainable calibration scalars `a = softplus(a_raw)` and `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchScalars {
    pub a_raw: String,
    pub b: String,
}

impl MatchScalars {
    pub fn with_prefix(prefix: &str) -> Self {
        MatchScalars { a_raw: format!("{prefix}.a_raw"), b: format!("{prefix}.b") }
    }

    /// Registers the scalars so that `softplus(a_raw) = scale`. Both are
    /// exempt from weight decay.
    pub fn init(&self, store: &mut ParamStore, scale: f64, shift: f64) -> Result<()> {
        if !(scale > 0.0) {
            return Err(Error::invalid("match scale must be positive"));
        }
        let a_raw = if scale > 30.0 { scale } else { scale.exp_m1().ln() };
        let a = store.insert(&self.a_raw, Tensor::scalar(a_raw))?;
        let b = store.insert(&self.b, Tensor::scalar(shift))?;
        store.set_decay(a, false);
        store.set_decay(b, false);
        Ok(())
    }

    /// Current `(a, b)`.
    pub fn values(&self, store: &ParamStore) -> Result<(f64, f64)> {
        let get = |n: &str| {
            store
                .by_name(n)
                .ok_or_else(|| Error::invalid(format!("unknown parameter `{n}`")))
                .and_then(|t| t.item())
        };
        let a_raw = get(&self.a_raw)?;
        let a = if a_raw > 30.0 { a_raw } else { a_raw.exp().ln_1p() };
        Ok((a, get(&self.b)?))
    }
}

/// `−a·CSD(Aᵢ, Bⱼ) + b` for every pair, as an `m × n` matrix.
pub fn match_logits_graph(
    tape: &mut Tape,
    store: &ParamStore,
    scalars: &MatchScalars,
    (mu_a, lv_a): (Var, Var),
    (mu_b, lv_b): (Var, Var),
) -> Result<Var> {
    let mean_term = tape.pairwise_sq_dist(mu_a, mu_b)?;
    let var_a = tape.exp(lv_a);
    let var_a = tape.row_sum(var_a)?;
    let var_b = tape.exp(lv_b);
    let var_b = tape.row_sum(var_b)?;
    let var_term = tape.outer_add(var_a, var_b);
    let d = tape.add(mean_term, var_term)?;
    let a_raw = tape.param_by_name(store, &scalars.a_raw)?;
    let a = tape.softplus(a_raw);
    let b = tape.param_by_name(store, &scalars.b)?;
    let scaled = tape.mul_scalar(d, a)?;
    let neg = tape.scale(scaled, -1.0);
    tape.add_scalar(neg, b)
}

/// Mean binary cross-entropy of the match logits against `m`.
pub fn pcme_graph(
    tape: &mut Tape,
    store: &ParamStore,
    scalars: &MatchScalars,
    a: (Var, Var),
    b: (Var, Var),
    m: &MatchMatrix,
) -> Result<Var> {
    let logits = match_logits_graph(tape, store, scalars, a, b)?;
    if tape.shape(logits) != [m.rows(), m.cols()] {
        return Err(Error::shape(
            "pcme_matching_loss",
            format!("logits {:?} vs match matrix {}×{}", tape.shape(logits), m.rows(), m.cols()),
        ));
    }
    tape.bce_with_logits(logits, &m.targets())
}

/// Symmetric InfoNCE over cosine similarities of the μ rows.
pub fn infonce_graph(tape: &mut Tape, mu_a: Var, mu_b: Var, m: &MatchMatrix, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let rows = m.single_positive_per_row()?;
    let cols = m.transposed().single_positive_per_row()?;
    let a = tape.l2_normalize_rows(mu_a)?;
    let b = tape.l2_normalize_rows(mu_b)?;
    let sim = tape.matmul_nt(a, b)?;
    let logits = tape.scale(sim, 1.0 / temperature);
    let forward = tape.cross_entropy_rows(logits, &rows)?;
    let logits_t = tape.transpose(logits)?;
    let backward = tape.cross_entropy_rows(logits_t, &cols)?;
    let both = tape.add(forward, backward)?;
    Ok(tape.scale(both, 0.5))
}

/// Mean over rows of `KL(N(μ, σ²) ‖ N(0, I))`.
pub fn vib_graph(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var> {
    let rows = match tape.shape(mu) {
        [m, _] => *m,
        _ => 1,
    };
    let count = tape.value(mu).len();
    let var = tape.exp(log_var);
    let mu2 = tape.square(mu);
    let s = tape.add(var, mu2)?;
    let s = tape.sub(s, log_var)?;
    let total = tape.sum(s);
    let total = tape.add_const(total, -(count as f64));
    Ok(tape.scale(total, 0.5 / rows as f64))
}
