//! Per-run manifests: what ran, on which inputs, and how long each phase
//! took.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    pub timings: Vec<Timing>,
    pub total_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            tool: "bounded",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            seed,
            timings: Vec::new(),
            total_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = file.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    /// Runs `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing {
            phase: phase.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn seconds(&self, phase: &str) -> f64 {
        self.timings
            .iter()
            .filter(|t| t.phase == phase)
            .map(|t| t.seconds)
            .sum()
    }

    pub fn finish(&mut self, path: &Path) -> Result<()> {
        if let Some(t) = self.started {
            self.total_seconds = t.elapsed().as_secs_f64();
        }
        let json = serde_json::to_vec_pretty(self)?;
        bounded::io::write_atomic(path, &json).with_context(|| format!("writing {}", path.display()))
    }
}

/// `model.bndm` becomes `model.bndm.run.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    output.with_file_name(name)
}
