use std::f64::consts::PI;

use super::Signal;
use crate::error::{Error, Result};

pub const DEFAULT_TAPS: usize = 101;

/// Cutoff as a fraction of the output rate.
const CUTOFF_FRACTION: f64 = 0.4;

/// Linear-phase low-pass FIR with unit DC gain.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub coefficients: Vec<f64>,
    pub cutoff_hz: f64,
    pub fs: f64,
}

/// Hamming-windowed sinc with cutoff `0.4 · fs_out`, normalized to unit DC gain.
pub fn design_lowpass_fir(fs_in: f64, fs_out: f64, taps: usize) -> Result<FirFilter> {
    if !(fs_out > 0.0) || !(fs_out < fs_in) {
        return Err(Error::invalid(format!("output rate {fs_out} must be below input rate {fs_in}")));
    }
    if taps < 31 || taps % 2 == 0 {
        return Err(Error::invalid(format!("tap count must be odd and >= 31, got {taps}")));
    }
    let cutoff_hz = CUTOFF_FRACTION * fs_out;
    let fc = cutoff_hz / fs_in;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - mid;
            let sinc = if x == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * x).sin() / (PI * x) };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    // exact symmetry after rounding
    for i in 0..taps / 2 {
        let avg = 0.5 * (h[i] + h[taps - 1 - i]);
        h[i] = avg;
        h[taps - 1 - i] = avg;
    }
    Ok(FirFilter { coefficients: h, cutoff_hz, fs: fs_in })
}

/// Magnitude of the filter's response at `freq_hz`, by direct DFT of the taps.
pub fn frequency_response(filter: &FirFilter, freq_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / filter.fs;
    let (re, im) = filter
        .coefficients
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, h)| (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin()));
    (re * re + im * im).sqrt()
}

/// Mirror index into `[0, len)` with the edge sample included once.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Anti-alias filter (zero phase, symmetric edge padding) then keep every
/// `fs_in / fs_out`-th sample.
pub fn decimate(s: &Signal, fs_out: f64) -> Result<Signal> {
    let ratio_f = s.fs() / fs_out;
    let ratio = ratio_f.round();
    if !(fs_out > 0.0) || (ratio_f - ratio).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::invalid(format!(
            "input rate {} is not an integer multiple of output rate {fs_out}",
            s.fs()
        )));
    }
    let ratio = ratio as usize;
    if ratio == 1 {
        return Ok(s.clone());
    }
    let filter = design_lowpass_fir(s.fs(), fs_out, DEFAULT_TAPS)?;
    let h = &filter.coefficients;
    let half = (h.len() / 2) as isize;
    let n = s.samples();
    let n_out = n.div_ceil(ratio);
    let data = s
        .leads()
        .iter()
        .map(|lead| {
            (0..n_out)
                .map(|o| {
                    let center = (o * ratio) as isize;
                    h.iter()
                        .enumerate()
                        .map(|(k, c)| c * lead[reflect(center + half - k as isize, n)])
                        .sum()
                })
                .collect()
        })
        .collect();
    Signal::new(data, fs_out, s.lead_names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_dc_gain_and_symmetry() {
        for (fi, fo, taps) in [(500.0, 100.0, 101), (1000.0, 100.0, 101), (500.0, 250.0, 31)] {
            let f = design_lowpass_fir(fi, fo, taps).unwrap();
            let sum: f64 = f.coefficients.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let n = f.coefficients.len();
            for i in 0..n {
                assert_eq!(f.coefficients[i], f.coefficients[n - 1 - i]);
            }
        }
    }

    #[test]
    fn fivefold_decimation_cutoff() {
        let f = design_lowpass_fir(500.0, 100.0, 101).unwrap();
        assert_eq!(f.cutoff_hz, 40.0);
    }

    #[test]
    fn invalid_designs() {
        assert!(design_lowpass_fir(100.0, 100.0, 101).is_err());
        assert!(design_lowpass_fir(100.0, 200.0, 101).is_err());
        assert!(design_lowpass_fir(500.0, 100.0, 100).is_err());
        assert!(design_lowpass_fir(500.0, 100.0, 29).is_err());
    }

    #[test]
    fn response_by_direct_dft() {
        let f = design_lowpass_fir(500.0, 100.0, 101).unwrap();
        assert!((frequency_response(&f, 5.0) - 1.0).abs() < 0.01);
        assert!(20.0 * frequency_response(&f, 200.0).log10() <= -40.0);
        assert!((frequency_response(&f, 0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn non_integer_ratio_rejected() {
        let s = Signal::with_leads(vec![vec![0.0; 30]], 500.0, &["I"]).unwrap();
        assert!(decimate(&s, 300.0).is_err());
    }
}
