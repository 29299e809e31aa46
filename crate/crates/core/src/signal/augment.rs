use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

/// Probabilities and magnitudes of the training-time signal transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub crop_prob: f64,
    /// Largest shift, as a fraction of the window, for crop-and-pad.
    pub max_crop_fraction: f64,
    pub scale_prob: f64,
    /// Amplitude factor drawn from `[1 − α, 1 + α]`.
    pub scale_alpha: f64,
    pub noise_prob: f64,
    pub noise_sd: f64,
    pub wander_prob: f64,
    pub wander_max_hz: f64,
    pub wander_amplitude: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_prob: 0.5,
            max_crop_fraction: 0.1,
            scale_prob: 0.5,
            scale_alpha: 0.2,
            noise_prob: 0.5,
            noise_sd: 0.05,
            wander_prob: 0.5,
            wander_max_hz: 0.5,
            wander_amplitude: 0.1,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        AugmentConfig { crop_prob: 0.0, scale_prob: 0.0, noise_prob: 0.0, wander_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("augment.crop_prob", self.crop_prob),
            ("augment.scale_prob", self.scale_prob),
            ("augment.noise_prob", self.noise_prob),
            ("augment.wander_prob", self.wander_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability {p} outside [0, 1]")));
            }
        }
        let mags = [
            ("augment.max_crop_fraction", self.max_crop_fraction),
            ("augment.scale_alpha", self.scale_alpha),
            ("augment.noise_sd", self.noise_sd),
            ("augment.wander_max_hz", self.wander_max_hz),
            ("augment.wander_amplitude", self.wander_amplitude),
        ];
        for (name, m) in mags {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::config(name, format!("magnitude {m} must be >= 0")));
            }
        }
        if self.max_crop_fraction >= 1.0 {
            return Err(Error::config("augment.max_crop_fraction", "must be below 1"));
        }
        Ok(())
    }
}

/// Which transforms fired and with what parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentRecord {
    pub crop_shift: Option<usize>,
    pub scale: Option<f64>,
    pub wander_hz: Option<f64>,
    pub noise: bool,
}

/// Applies crop-and-pad, amplitude scaling, baseline wander and additive
/// Gaussian noise, each with its configured probability. Deterministic in
/// `seed`; the random stream does not depend on which transforms fire.
pub fn augment(s: &Signal, seed: u64, cfg: &AugmentConfig) -> (Signal, AugmentRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = s.clone();
    let mut rec = AugmentRecord::default();
    let n = s.samples();
    let fs = s.fs();

    let (u_crop, u_scale, u_wander, u_noise): (f64, f64, f64, f64) =
        (rng.random(), rng.random(), rng.random(), rng.random());
    let crop_draw: f64 = rng.random();
    let scale_draw: f64 = rng.random();
    let wander_hz_draw: f64 = rng.random();

    if u_crop < cfg.crop_prob && n > 1 {
        let max_shift = ((cfg.max_crop_fraction.max(0.0) * n as f64) as usize).min(n - 1);
        if max_shift >= 1 {
            let shift = 1 + ((crop_draw * max_shift as f64) as usize).min(max_shift - 1);
            for lead in out.leads_mut() {
                lead.copy_within(shift.., 0);
                lead[n - shift..].iter_mut().for_each(|v| *v = 0.0);
            }
            rec.crop_shift = Some(shift);
        }
    }
    if u_scale < cfg.scale_prob {
        let a = cfg.scale_alpha.max(0.0);
        let factor = 1.0 - a + 2.0 * a * scale_draw;
        for lead in out.leads_mut() {
            lead.iter_mut().for_each(|v| *v *= factor);
        }
        rec.scale = Some(factor);
    }
    if u_wander < cfg.wander_prob && cfg.wander_amplitude > 0.0 {
        let hz = (wander_hz_draw * cfg.wander_max_hz.max(0.0)).max(1e-3);
        for lead in out.leads_mut() {
            let phase: f64 = rng.random::<f64>() * 2.0 * PI;
            let amp: f64 = cfg.wander_amplitude * rng.random::<f64>();
            for (t, v) in lead.iter_mut().enumerate() {
                *v += amp * (2.0 * PI * hz * t as f64 / fs + phase).sin();
            }
        }
        rec.wander_hz = Some(hz);
    }
    if u_noise < cfg.noise_prob && cfg.noise_sd > 0.0 {
        for lead in out.leads_mut() {
            for v in lead.iter_mut() {
                *v += cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        rec.noise = true;
    }
    (out, rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Signal {
        let leads = (0..3).map(|l| (0..200).map(|t| ((t + l * 7) as f64 * 0.1).sin()).collect()).collect();
        Signal::with_leads(leads, 100.0, &["I", "II", "V1"]).unwrap()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let s = sig();
        let (out, rec) = augment(&s, 9, &AugmentConfig::none());
        assert_eq!(out, s);
        assert_eq!(rec, AugmentRecord::default());
    }

    #[test]
    fn scaling_only() {
        let s = sig();
        let cfg = AugmentConfig { scale_prob: 1.0, ..AugmentConfig::none() };
        let (out, rec) = augment(&s, 4, &cfg);
        let f = rec.scale.unwrap();
        assert!((0.8..=1.2).contains(&f));
        for (a, b) in out.leads().iter().flatten().zip(s.leads().iter().flatten()) {
            assert_eq!(*a, b * f);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let s = sig();
        let cfg = AugmentConfig { crop_prob: 1.0, scale_prob: 1.0, noise_prob: 1.0, wander_prob: 1.0, ..Default::default() };
        assert_eq!(augment(&s, 77, &cfg), augment(&s, 77, &cfg));
        assert_ne!(augment(&s, 77, &cfg).0, augment(&s, 78, &cfg).0);
    }

    #[test]
    fn crop_shifts_and_pads() {
        let s = sig();
        let cfg = AugmentConfig { crop_prob: 1.0, ..AugmentConfig::none() };
        let (out, rec) = augment(&s, 1, &cfg);
        let k = rec.crop_shift.unwrap();
        assert!(k >= 1 && k <= 20);
        assert_eq!(&out.lead(0)[..200 - k], &s.lead(0)[k..]);
        assert!(out.lead(0)[200 - k..].iter().all(|v| *v == 0.0));
        assert_eq!(out.lead_count(), 3);
    }

    #[test]
    fn validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig { noise_sd: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
