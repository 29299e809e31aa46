//! ECG/VCG preprocessing: decimation, VCG to 12-lead reconstruction,
//! normalization, augmentation and windowing.

mod augment;
mod fir;
mod io;
mod kors;
mod normalize;
mod window;

pub use augment::{augment, AugmentConfig, AugmentRecord};
pub use fir::{decimate, design_lowpass_fir, frequency_response, FirFilter, DEFAULT_TAPS};
pub use io::{parse_signal_csv, read_signal_csv, signal_to_csv, write_signal_csv};
pub use kors::{derive_limb_leads, kors_vcg_to_12lead, KorsMatrix, INDEPENDENT_LEADS, TWELVE_LEADS, VCG_LEADS};
pub use normalize::zscore_normalize;
pub use window::{sliding_windows, Window};

use crate::error::{Error, Result};

/// Multi-lead recording, `leads × samples`, in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<Vec<f64>>,
    fs: f64,
    lead_names: Vec<String>,
}

impl Signal {
    pub fn new(data: Vec<Vec<f64>>, fs: f64, lead_names: Vec<String>) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::invalid(format!("sampling rate must be positive, got {fs}")));
        }
        if data.len() != lead_names.len() {
            return Err(Error::invalid(format!(
                "{} leads but {} lead names",
                data.len(),
                lead_names.len()
            )));
        }
        if let Some(first) = data.first() {
            if data.iter().any(|l| l.len() != first.len()) {
                return Err(Error::invalid("leads have different lengths"));
            }
        }
        Ok(Signal { data, fs, lead_names })
    }

    /// Convenience constructor taking `&str` lead names.
    pub fn with_leads(data: Vec<Vec<f64>>, fs: f64, names: &[&str]) -> Result<Self> {
        Signal::new(data, fs, names.iter().map(|s| s.to_string()).collect())
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn lead_count(&self) -> usize {
        self.data.len()
    }

    pub fn samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples() as f64 / self.fs
    }

    pub fn lead_names(&self) -> &[String] {
        &self.lead_names
    }

    pub fn leads(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn lead(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn lead_by_name(&self, name: &str) -> Option<&[f64]> {
        self.lead_names.iter().position(|n| n == name).map(|i| self.data[i].as_slice())
    }

    pub(crate) fn leads_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.data
    }

    pub fn into_leads(self) -> Vec<Vec<f64>> {
        self.data
    }

    /// Samples `[start, start + len)` of every lead.
    pub fn slice(&self, start: usize, len: usize) -> Result<Signal> {
        if start + len > self.samples() {
            return Err(Error::invalid(format!(
                "slice {start}..{} beyond {} samples",
                start + len,
                self.samples()
            )));
        }
        let data = self.data.iter().map(|l| l[start..start + len].to_vec()).collect();
        Ok(Signal { data, fs: self.fs, lead_names: self.lead_names.clone() })
    }

    /// Row-major `leads × samples` buffer.
    pub fn to_flat(&self) -> Vec<f64> {
        self.data.concat()
    }
}

/// Preprocessing applied before encoding: decimate to `target_fs` when the
/// rate differs, then per-lead z-score.
pub fn preprocess(s: &Signal, target_fs: f64) -> Result<Signal> {
    let resampled = if (s.fs() - target_fs).abs() > 1e-9 { decimate(s, target_fs)? } else { s.clone() };
    Ok(zscore_normalize(&resampled))
}
