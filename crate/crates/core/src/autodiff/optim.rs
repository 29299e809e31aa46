use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// AdamW hyperparameters. Weight decay is decoupled: it scales the weights
/// directly instead of entering the moment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW { lr: 4e-4, weight_decay: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamW {
    /// One update of every non-frozen parameter from its current gradient.
    /// Parameters marked `decay = false` skip weight decay.
    pub fn step(&self, store: &mut ParamStore) {
        let no_decay = AdamW { weight_decay: 0.0, ..*self };
        for p in store.params_mut() {
            if p.frozen {
                continue;
            }
            let cfg = if p.decay { self } else { &no_decay };
            let grad = p.value.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.value.len()]);
            adamw_update(
                p.value.data_mut(),
                &grad,
                &mut p.state.first,
                &mut p.state.second,
                &mut p.state.step,
                cfg,
            );
        }
    }
}

/// AdamW on flat buffers. `step` is incremented before bias correction.
pub fn adamw_update(
    weights: &mut [f64],
    grads: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    step: &mut u64,
    cfg: &AdamW,
) {
    *step += 1;
    let t = *step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for i in 0..weights.len() {
        let g = grads[i];
        first[i] = cfg.beta1 * first[i] + (1.0 - cfg.beta1) * g;
        second[i] = cfg.beta2 * second[i] + (1.0 - cfg.beta2) * g * g;
        weights[i] *= decay;
        let denom = (second[i] / bc2).sqrt() + cfg.eps;
        weights[i] -= cfg.lr * (first[i] / bc1) / denom;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn default_hyperparameters() {
        let c = AdamW::default();
        assert_eq!(c.lr, 4e-4);
        assert_eq!(c.weight_decay, 0.1);
        assert_eq!((c.beta1, c.beta2, c.eps), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![1.5, -2.0])).unwrap();
        let cfg = AdamW { weight_decay: 0.0, ..AdamW::default() };
        for _ in 0..5 {
            cfg.step(&mut s);
        }
        assert_eq!(s.value(id).data(), &[1.5, -2.0]);
        assert_eq!(s.get(id).state.step, 5);
    }

    #[test]
    fn zero_grad_decay_shrinks_by_factor() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![1.5, -2.0])).unwrap();
        let cfg = AdamW { lr: 0.01, weight_decay: 0.5, ..AdamW::default() };
        let f = 1.0 - 0.01 * 0.5;
        let mut expect = [1.5, -2.0];
        for _ in 0..10 {
            cfg.step(&mut s);
            expect.iter_mut().for_each(|v| *v *= f);
            let got = s.value(id).data();
            assert_eq!(got, &expect);
        }
    }

    #[test]
    fn frozen_params_untouched() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![1.0])).unwrap();
        s.get_mut(id).value.grad_mut()[0] = 3.0;
        s.set_frozen(id, true);
        AdamW::default().step(&mut s);
        assert_eq!(s.value(id).data(), &[1.0]);
    }
}
