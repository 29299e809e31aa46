use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Which coordinates of each parameter are probed.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Probe at most this many coordinates per parameter (seeded sample).
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, max_coords_per_param: None, seed: 0 }
    }
}

fn eval_loss<F>(build: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    let v = tape.scalar_value(loss)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("gradient check loss".into()));
    }
    Ok(v)
}

/// Max over probed coordinates of `|analytic − numeric| / max(1, |numeric|)`
/// using central differences.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    grad_check_with(store, GradCheckOptions { eps, ..Default::default() }, build)
}

pub fn grad_check_with<F>(store: &mut ParamStore, opts: GradCheckOptions, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(opts.eps > 0.0) {
        return Err(Error::invalid("gradient check eps must be positive"));
    }
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    if let Some(i) = tape.first_non_finite() {
        return Err(Error::NonFinite(format!("tape node {i} during gradient check")));
    }
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = store.value(id).data()[c];
            store.value_mut(id).data_mut()[c] = orig + opts.eps;
            let up = eval_loss(&build, store);
            store.value_mut(id).data_mut()[c] = orig - opts.eps;
            let down = eval_loss(&build, store);
            store.value_mut(id).data_mut()[c] = orig;
            let numeric = (up? - down?) / (2.0 * opts.eps);
            let a = analytic[id.index()][c];
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

impl Tape {
    /// Index of the first node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| !self.value(super::tape::var_from_index(i)).all_finite())
    }
}
