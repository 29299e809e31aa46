use super::Signal;
use crate::error::{Error, Result};

/// One window cut from a longer recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub offset_s: f64,
    pub start: usize,
    pub signal: Signal,
}

/// Fixed-length windows at a fixed stride; a trailing partial window is dropped.
pub fn sliding_windows(s: &Signal, win_seconds: f64, stride_seconds: f64) -> Result<Vec<Window>> {
    if !(win_seconds > 0.0) || !(stride_seconds > 0.0) {
        return Err(Error::invalid("window and stride must be positive"));
    }
    let win = (win_seconds * s.fs()).round() as usize;
    let stride = ((stride_seconds * s.fs()).round() as usize).max(1);
    let n = s.samples();
    if win == 0 || n < win {
        return Err(Error::invalid(format!(
            "signal of {:.3} s is shorter than the {win_seconds} s window",
            s.duration_s()
        )));
    }
    let count = (n - win) / stride + 1;
    (0..count)
        .map(|i| {
            let start = i * stride;
            Ok(Window { offset_s: start as f64 / s.fs(), start, signal: s.slice(start, win)? })
        })
        .collect()
}
