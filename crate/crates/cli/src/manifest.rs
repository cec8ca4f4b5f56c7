use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

/// `manifest.txt`: what ran, with which resolved settings, on which files.
/// Everything except `wall_clock_s` is a pure function of the inputs.
#[derive(Debug)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub seed: u64,
    pub settings: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(subcommand: &'static str, seed: u64) -> Self {
        RunManifest {
            subcommand,
            seed,
            settings: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self, wall_clock_s: f64) -> Result<String, CliError> {
        let mut s = String::new();
        let _ = writeln!(s, "subcommand={}", self.subcommand);
        let _ = writeln!(s, "seed={}", self.seed);
        for (k, v) in &self.settings {
            let _ = writeln!(s, "{k}={v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "input={} sha256={}", p.display(), sha256_file(p)?);
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output={} sha256={}", p.display(), sha256_file(p)?);
        }
        let _ = writeln!(s, "wall_clock_s={wall_clock_s:.3}");
        Ok(s)
    }

    pub fn write(&self, out: &Path, wall_clock_s: f64) -> Result<PathBuf, CliError> {
        let path = out.join("manifest.txt");
        let text = self.to_text(wall_clock_s)?;
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
