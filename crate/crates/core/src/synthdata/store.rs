use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{teacher_centroid_accuracy, Attributes, Burst, Cohort, CohortConfig, PairedSample};
use crate::error::{Error, Result};
use crate::models::TokenSequence;
use crate::prob_embed::FrameEmbeddingSet;
use crate::signal::{read_signal_csv, write_signal_csv, Signal, INDEPENDENT_LEADS};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "pxm-cohort-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: usize,
    pub label: usize,
    pub lvef: u8,
    pub noise_grade: f64,
    pub attributes: Attributes,
    pub tokens: Vec<usize>,
    pub pattern_windows: Vec<bool>,
    pub burst: Option<Burst>,
    pub signal_file: String,
    pub frames_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub format: String,
    pub config: CohortConfig,
    /// Nearest-class-mean accuracy on the raw teacher frames.
    pub teacher_centroid_accuracy: f64,
    pub samples: Vec<SampleRecord>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn independent_leads(s: &Signal) -> Result<Signal> {
    let data = INDEPENDENT_LEADS
        .iter()
        .map(|name| {
            s.lead_by_name(name)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::invalid(format!("recording has no lead {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Signal::with_leads(data, s.fs(), &INDEPENDENT_LEADS)
}

fn frames_to_bytes(frames: &FrameEmbeddingSet) -> Vec<u8> {
    frames.frames().iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
}

fn frames_from_bytes(bytes: &[u8], n: usize, d: usize, path: &Path) -> Result<FrameEmbeddingSet> {
    if bytes.len() != n * d * 8 {
        return Err(Error::parse(path, format!("expected {} bytes for {n}×{d} frames, found {}", n * d * 8, bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    FrameEmbeddingSet::new(values.chunks(d).map(<[f64]>::to_vec).collect())
}

/// Writes `manifest.json`, `signals/sample_NNNNN.csv` (the 8 independent
/// leads) and `frames/sample_NNNNN.bin` (raw little-endian f64, n × d).
/// Returns the paths written, manifest last.
pub fn write_cohort(dir: &Path, cohort: &Cohort) -> Result<Vec<PathBuf>> {
    create_dir(&dir.join("signals"))?;
    create_dir(&dir.join("frames"))?;
    let mut written = Vec::with_capacity(2 * cohort.len() + 1);
    let mut records = Vec::with_capacity(cohort.len());
    for s in &cohort.samples {
        let signal_file = format!("signals/sample_{:05}.csv", s.id);
        let frames_file = format!("frames/sample_{:05}.bin", s.id);
        let sp = dir.join(&signal_file);
        write_signal_csv(&sp, &independent_leads(&s.signal)?)?;
        let fp = dir.join(&frames_file);
        fs::write(&fp, frames_to_bytes(&s.frames)).map_err(|e| Error::io(&fp, e))?;
        written.push(sp);
        written.push(fp);
        records.push(SampleRecord {
            id: s.id,
            label: s.label,
            lvef: s.lvef,
            noise_grade: s.noise_grade,
            attributes: s.attributes,
            tokens: s.tokens.ids().to_vec(),
            pattern_windows: s.pattern_windows.clone(),
            burst: s.burst,
            signal_file,
            frames_file,
        });
    }
    let manifest = CohortManifest {
        format: FORMAT.to_string(),
        config: cohort.config.clone(),
        teacher_centroid_accuracy: teacher_centroid_accuracy(cohort),
        samples: records,
    };
    let mp = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&mp, text + "\n").map_err(|e| Error::io(&mp, e))?;
    written.push(mp);
    Ok(written)
}

pub fn read_manifest(dir: &Path) -> Result<CohortManifest> {
    let mp = dir.join(MANIFEST);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: CohortManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&mp, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(Error::parse(&mp, format!("unknown cohort format `{}`", manifest.format)));
    }
    manifest.config.validate()?;
    Ok(manifest)
}

/// Reads a cohort directory written by [`write_cohort`].
pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    let manifest = read_manifest(dir)?;
    let cfg = &manifest.config;
    let samples = manifest
        .samples
        .iter()
        .map(|r| {
            let signal = read_signal_csv(&dir.join(&r.signal_file))?;
            let fp = dir.join(&r.frames_file);
            let bytes = fs::read(&fp).map_err(|e| Error::io(&fp, e))?;
            let frames = frames_from_bytes(&bytes, cfg.teacher_frames, cfg.teacher_dim, &fp)?;
            Ok(PairedSample {
                id: r.id,
                signal,
                tokens: TokenSequence::new(r.tokens.clone(), cfg.vocab_size)?,
                frames,
                label: r.label,
                lvef: r.lvef,
                noise_grade: r.noise_grade,
                attributes: r.attributes,
                pattern_windows: r.pattern_windows.clone(),
                burst: r.burst,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort { config: manifest.config, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::generate_cohort;

    #[test]
    fn disk_round_trip() {
        let cfg = CohortConfig { classes: 2, samples_per_class: 2, teacher_dim: 8, teacher_frames: 3, ..Default::default() };
        let cohort = generate_cohort(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_cohort(dir.path(), &cohort).unwrap();
        assert_eq!(files.len(), 9);
        let back = load_cohort(dir.path()).unwrap();
        assert_eq!(back, cohort);
    }

    #[test]
    fn truncated_frames_rejected() {
        assert!(frames_from_bytes(&[0u8; 20], 1, 3, Path::new("f")).is_err());
    }
}
