use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pxm_core::train::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Record of one command invocation: enough to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Flags as given, after defaulting.
    pub args: BTreeMap<String, String>,
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// sha256 of every written file, keyed by path relative to `out_dir`.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, config: RunConfig, seed: u64, out_dir: &Path) -> Self {
        RunManifest {
            command: command.into(),
            args: BTreeMap::new(),
            config_path: config_path.map(Path::to_path_buf),
            config,
            seed,
            out_dir: out_dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.insert(key.into(), value.to_string());
    }

    pub fn hash_artifacts<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<(), Failure> {
        for p in paths {
            let key = p.strip_prefix(&self.out_dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
            self.artifacts.insert(key, sha256_file(p)?);
        }
        Ok(())
    }

    pub fn write(&self) -> Result<PathBuf, Failure> {
        let path = self.out_dir.join(RUN_MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(|e| Failure::usage(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<RunManifest, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}
