use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::metrics::{mean_sd, MedianSplit};

/// Hex sha256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One metric over the whole set and its two uncertainty halves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    /// What the halves were split on: `sigma2`, `entropy` or `none`.
    pub split: String,
    pub all: f64,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub n_all: usize,
    pub n_low: usize,
    pub n_high: usize,
}

impl MetricRow {
    pub fn whole(metric: &str, value: f64, n: usize) -> MetricRow {
        MetricRow {
            metric: metric.into(),
            split: "none".into(),
            all: value,
            low: None,
            high: None,
            n_all: n,
            n_low: 0,
            n_high: 0,
        }
    }

    /// Evaluates `f` on all indices and on each half; an empty half yields `None`.
    pub fn split_by<F>(metric: &str, split: &str, n: usize, halves: &MedianSplit, f: F) -> Result<MetricRow>
    where
        F: Fn(&[usize]) -> Result<f64>,
    {
        let all: Vec<usize> = (0..n).collect();
        let side = |idx: &[usize]| if idx.is_empty() { Ok(None) } else { f(idx).map(Some) };
        Ok(MetricRow {
            metric: metric.into(),
            split: split.into(),
            all: f(&all)?,
            low: side(&halves.low)?,
            high: side(&halves.high)?,
            n_all: n,
            n_low: halves.low.len(),
            n_high: halves.high.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl EvalReport {
    /// Metrics lie in `[0, 1]` and split halves add up to the whole.
    pub fn check(&self) -> Result<()> {
        for r in &self.rows {
            for v in [Some(r.all), r.low, r.high].into_iter().flatten() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invariant(format!("{} = {v} outside [0, 1]", r.metric)));
                }
            }
            if r.split != "none" && r.n_low + r.n_high != r.n_all {
                return Err(Error::Invariant(format!(
                    "{} subgroups {} + {} != {}",
                    r.metric, r.n_low, r.n_high, r.n_all
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,metric,split,all,low,high,n_all,n_low,n_high,seed,config_hash\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.task,
                r.metric,
                r.split,
                r.all,
                opt(r.low),
                opt(r.high),
                r.n_all,
                r.n_low,
                r.n_high,
                self.seed,
                self.config_hash
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("task {}  seed {}  config {}\n", self.task, self.seed, &self.config_hash);
        let _ = writeln!(out, "{:<24} {:<8} {:>8} {:>8} {:>8} {:>14}", "metric", "split", "all", "low", "high", "n (low/high)");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:<8} {:>8} {:>8} {:>8} {:>14}",
                r.metric,
                r.split,
                format!("{:.4}", r.all),
                cell(r.low),
                cell(r.high),
                format!("{} ({}/{})", r.n_all, r.n_low, r.n_high)
            );
        }
        out
    }
}

/// Mean ± sample sd over seeds for one variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seeds: Vec<u64>,
    pub zeroshot: Vec<f64>,
    pub recall_at_1: Vec<f64>,
}

impl AblationRow {
    pub fn zeroshot_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.zeroshot)
    }

    pub fn recall_mean_sd(&self) -> (f64, f64) {
        mean_sd(&self.recall_at_1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub config_hash: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seeds,zs_bacc_mean,zs_bacc_sd,r1_mean,r1_sd,config_hash\n");
        for r in &self.rows {
            let (zm, zs) = r.zeroshot_mean_sd();
            let (rm, rs) = r.recall_mean_sd();
            let _ = writeln!(out, "{},{},{zm},{zs},{rm},{rs},{}", r.variant, r.seeds.len(), self.config_hash);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>18} {:>18}\n", "variant", "ZS bal. acc.", "text->ECG R@1");
        for r in &self.rows {
            let (zm, zs) = r.zeroshot_mean_sd();
            let (rm, rs) = r.recall_mean_sd();
            let _ = writeln!(out, "{:<16} {:>18} {:>18}", r.variant, format!("{zm:.3} ± {zs:.3}"), format!("{rm:.3} ± {rs:.3}"));
        }
        out
    }
}

/// `window_offset_s,uncertainty` rows.
pub fn trace_csv(trace: &[(f64, f64)]) -> String {
    let mut out = String::from("window_offset_s,uncertainty\n");
    for (t, u) in trace {
        let _ = writeln!(out, "{t},{u}");
    }
    out
}
