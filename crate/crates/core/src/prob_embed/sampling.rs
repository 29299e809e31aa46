use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ProbEmbedding;
use crate::error::{Error, Result};
use crate::exec::{par_range, Parallelism};

const CHUNK: usize = 8192;

/// Monte-Carlo estimate of `E‖z₁ − z₂‖²` for independent draws. Draws are
/// split into fixed chunks with their own streams, so the estimate does not
/// depend on the parallelism mode.
pub fn sampled_sq_distance(
    z1: &ProbEmbedding,
    z2: &ProbEmbedding,
    draws: usize,
    seed: u64,
    par: Parallelism,
) -> Result<f64> {
    if z1.dim() != z2.dim() {
        return Err(Error::shape("sampled_sq_distance", format!("dim {} vs {}", z1.dim(), z2.dim())));
    }
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let sd1: Vec<f64> = z1.log_var.iter().map(|v| (0.5 * v).exp()).collect();
    let sd2: Vec<f64> = z2.log_var.iter().map(|v| (0.5 * v).exp()).collect();
    let chunks = draws.div_ceil(CHUNK);
    let partial = par_range(chunks, par, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(draws - c * CHUNK);
        let mut acc = 0.0;
        for _ in 0..n {
            let mut s = 0.0;
            for d in 0..z1.dim() {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let diff = (z1.mu[d] + sd1[d] * e1) - (z2.mu[d] + sd2[d] * e2);
                s += diff * diff;
            }
            acc += s;
        }
        acc
    });
    Ok(partial.iter().sum::<f64>() / draws as f64)
}
