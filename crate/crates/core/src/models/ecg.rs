use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::signal::Signal;

/// 1D-ResNet layout. Each residual block is conv(k3, stride) → layer norm →
/// ReLU → conv(k1), added to a 1×1 projection of its input when the shape
/// changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcgEncoderConfig {
    pub leads: usize,
    pub samples: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub widths: Vec<usize>,
    pub block_stride: usize,
}

impl Default for EcgEncoderConfig {
    fn default() -> Self {
        EcgEncoderConfig {
            leads: 12,
            samples: 1000,
            stem_channels: 32,
            stem_kernel: 7,
            stem_stride: 2,
            widths: vec![32, 64, 128, 256],
            block_stride: 2,
        }
    }
}

struct BlockNames {
    conv1_w: String,
    conv1_b: String,
    ln_gain: String,
    ln_bias: String,
    conv2_w: String,
    conv2_b: String,
    proj_w: String,
    proj_b: String,
}

impl BlockNames {
    fn new(prefix: &str, i: usize) -> Self {
        let p = format!("{prefix}.block{i}");
        BlockNames {
            conv1_w: format!("{p}.conv1.weight"),
            conv1_b: format!("{p}.conv1.bias"),
            ln_gain: format!("{p}.ln.gain"),
            ln_bias: format!("{p}.ln.bias"),
            conv2_w: format!("{p}.conv2.weight"),
            conv2_b: format!("{p}.conv2.bias"),
            proj_w: format!("{p}.proj.weight"),
            proj_b: format!("{p}.proj.bias"),
        }
    }
}

fn he_conv<R: Rng>(store: &mut ParamStore, name: &str, c_out: usize, c_in: usize, k: usize, rng: &mut R) -> Result<()> {
    let std = (2.0 / (c_in * k) as f64).sqrt();
    store.insert_normal(name, &[c_out, c_in, k], std, rng)?;
    Ok(())
}

impl EcgEncoderConfig {
    /// Narrow, aggressively strided variant for quick experiments.
    pub fn desk() -> Self {
        EcgEncoderConfig { stem_channels: 16, stem_stride: 4, widths: vec![16, 32, 64], ..Self::default() }
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&self.stem_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("model.ecg.leads", self.leads),
            ("model.ecg.samples", self.samples),
            ("model.ecg.stem_channels", self.stem_channels),
            ("model.ecg.stem_kernel", self.stem_kernel),
            ("model.ecg.stem_stride", self.stem_stride),
            ("model.ecg.block_stride", self.block_stride),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.widths.iter().any(|w| *w == 0) {
            return Err(Error::config("model.ecg.widths", "every width must be >= 1"));
        }
        if self.stem_kernel > self.samples + 2 * (self.stem_kernel / 2) {
            return Err(Error::config("model.ecg.stem_kernel", "longer than the padded input"));
        }
        Ok(())
    }

    fn needs_projection(&self, c_in: usize, c_out: usize) -> bool {
        c_in != c_out || self.block_stride != 1
    }

    pub(crate) fn init<R: Rng>(&self, store: &mut ParamStore, prefix: &str, rng: &mut R) -> Result<()> {
        let c = self.stem_channels;
        he_conv(store, &format!("{prefix}.stem.weight"), c, self.leads, self.stem_kernel, rng)?;
        store.insert(format!("{prefix}.stem.bias"), Tensor::zeros(&[c]))?;
        store.insert(format!("{prefix}.stem.ln.gain"), Tensor::filled(&[c], 1.0))?;
        store.insert(format!("{prefix}.stem.ln.bias"), Tensor::zeros(&[c]))?;
        let mut c_in = c;
        for (i, &c_out) in self.widths.iter().enumerate() {
            let n = BlockNames::new(prefix, i);
            he_conv(store, &n.conv1_w, c_out, c_in, 3, rng)?;
            store.insert(&n.conv1_b, Tensor::zeros(&[c_out]))?;
            store.insert(&n.ln_gain, Tensor::filled(&[c_out], 1.0))?;
            store.insert(&n.ln_bias, Tensor::zeros(&[c_out]))?;
            he_conv(store, &n.conv2_w, c_out, c_out, 1, rng)?;
            store.insert(&n.conv2_b, Tensor::zeros(&[c_out]))?;
            if self.needs_projection(c_in, c_out) {
                he_conv(store, &n.proj_w, c_out, c_in, 1, rng)?;
                store.insert(&n.proj_b, Tensor::zeros(&[c_out]))?;
            }
            c_in = c_out;
        }
        Ok(())
    }

    /// Pooled `1 × F` features of one `leads × samples` window.
    pub(crate) fn forward(&self, tape: &mut Tape, store: &ParamStore, prefix: &str, window: &Signal) -> Result<Var> {
        if window.lead_count() != self.leads || window.samples() != self.samples {
            return Err(Error::shape(
                "ecg_encode",
                format!(
                    "window is {}×{}, encoder expects {}×{}",
                    window.lead_count(),
                    window.samples(),
                    self.leads,
                    self.samples
                ),
            ));
        }
        let x = tape.input(Tensor::matrix(self.leads, self.samples, window.to_flat())?);
        let p = |tape: &mut Tape, name: &str| tape.param_by_name(store, name);
        let w = p(tape, &format!("{prefix}.stem.weight"))?;
        let b = p(tape, &format!("{prefix}.stem.bias"))?;
        let mut h = tape.conv1d(x, w, Some(b), self.stem_stride, self.stem_kernel / 2)?;
        let g = p(tape, &format!("{prefix}.stem.ln.gain"))?;
        let bb = p(tape, &format!("{prefix}.stem.ln.bias"))?;
        h = tape.layer_norm_cols(h, g, bb, LAYER_NORM_EPS)?;
        h = tape.relu(h);
        let mut c_in = self.stem_channels;
        for (i, &c_out) in self.widths.iter().enumerate() {
            let n = BlockNames::new(prefix, i);
            let w1 = p(tape, &n.conv1_w)?;
            let b1 = p(tape, &n.conv1_b)?;
            let mut y = tape.conv1d(h, w1, Some(b1), self.block_stride, 1)?;
            let g = p(tape, &n.ln_gain)?;
            let bb = p(tape, &n.ln_bias)?;
            y = tape.layer_norm_cols(y, g, bb, LAYER_NORM_EPS)?;
            y = tape.relu(y);
            let w2 = p(tape, &n.conv2_w)?;
            let b2 = p(tape, &n.conv2_b)?;
            y = tape.conv1d(y, w2, Some(b2), 1, 0)?;
            let shortcut = if self.needs_projection(c_in, c_out) {
                let wp = p(tape, &n.proj_w)?;
                let bp = p(tape, &n.proj_b)?;
                tape.conv1d(h, wp, Some(bp), self.block_stride, 0)?
            } else {
                h
            };
            h = tape.add(shortcut, y)?;
            c_in = c_out;
        }
        tape.mean_cols(h)
    }
}
