use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    /// Penalty `l2/2·‖W‖²`; the bias is not penalised.
    pub l2: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { l2: 1e-3, max_iters: 10_000, tol: 1e-6 }
    }
}

/// Softmax regression weights, `classes × features`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LinearProbe {
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        softmax(&logits)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.probabilities(x))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc }).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutput {
    pub predictions: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
    pub probe: LinearProbe,
}

/// Fits a softmax regression on `(train_x, train_y)` by full-batch gradient
/// descent with step `1/L` and predicts `test_x`.
pub fn fit_probe(train_x: &[Vec<f64>], train_y: &[usize], opts: &ProbeOptions) -> Result<LinearProbe> {
    if train_x.len() != train_y.len() || train_x.is_empty() {
        return Err(Error::shape("linear_probe", format!("{} rows, {} labels", train_x.len(), train_y.len())));
    }
    let f = train_x[0].len();
    if train_x.iter().any(|x| x.len() != f) {
        return Err(Error::shape("linear_probe", "rows have different lengths"));
    }
    let k = train_y.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; k];
    train_y.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::invalid("linear probe needs at least two classes in the training set"));
    }
    let n = train_x.len() as f64;
    let mean_sq = train_x.iter().map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
    let lr = 1.0 / (0.5 * mean_sq + opts.l2);
    let mut w = vec![vec![0.0; f]; k];
    let mut b = vec![0.0; k];
    let mut gw = vec![vec![0.0; f]; k];
    let mut gb = vec![0.0; k];
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    while iterations < opts.max_iters {
        gw.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        gb.iter_mut().for_each(|v| *v = 0.0);
        for (x, &y) in train_x.iter().zip(train_y) {
            let logits: Vec<f64> =
                w.iter().zip(&b).map(|(wr, bc)| bc + wr.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect();
            let p = softmax(&logits);
            for c in 0..k {
                let r = p[c] - f64::from(u8::from(c == y));
                gb[c] += r / n;
                gw[c].iter_mut().zip(x).for_each(|(g, xv)| *g += r * xv / n);
            }
        }
        for c in 0..k {
            gw[c].iter_mut().zip(&w[c]).for_each(|(g, wv)| *g += opts.l2 * wv);
        }
        grad_norm = (gw.iter().flatten().chain(&gb).map(|g| g * g).sum::<f64>()).sqrt();
        if grad_norm < opts.tol {
            break;
        }
        for c in 0..k {
            w[c].iter_mut().zip(&gw[c]).for_each(|(wv, g)| *wv -= lr * g);
            b[c] -= lr * gb[c];
        }
        iterations += 1;
    }
    Ok(LinearProbe { weights: w, bias: b, iterations, grad_norm })
}

pub fn linear_probe(train_x: &[Vec<f64>], train_y: &[usize], test_x: &[Vec<f64>], opts: &ProbeOptions) -> Result<ProbeOutput> {
    let probe = fit_probe(train_x, train_y, opts)?;
    let f = probe.weights[0].len();
    if test_x.iter().any(|x| x.len() != f) {
        return Err(Error::shape("linear_probe", "test rows differ in length from training rows"));
    }
    let probabilities: Vec<Vec<f64>> = test_x.iter().map(|x| probe.probabilities(x)).collect();
    let predictions = probabilities.iter().map(|p| argmax(p)).collect();
    Ok(ProbeOutput { predictions, probabilities, probe })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_train_accuracy() {
        let x = vec![vec![-2.0, 0.1], vec![-1.0, -0.3], vec![1.0, 0.2], vec![2.5, -0.1]];
        let y = vec![0, 0, 1, 1];
        let out = linear_probe(&x, &y, &x, &ProbeOptions::default()).unwrap();
        assert_eq!(out.predictions, y);
    }

    #[test]
    fn uninformative_features_give_priors() {
        let x = vec![vec![0.7, -0.2]; 8];
        let y = vec![0, 1, 1, 1, 0, 1, 1, 1];
        let out = linear_probe(&x, &y, &x[..1], &ProbeOptions::default()).unwrap();
        assert!((out.probabilities[0][1] - 0.75).abs() < 1e-5, "{:?}", out.probabilities[0]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(fit_probe(&[vec![1.0], vec![2.0]], &[1, 1], &ProbeOptions::default()).is_err());
    }
}
