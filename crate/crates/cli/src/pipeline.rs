//! Pipeline execution and the run manifest.
//!
//! Stages run in config order (validation has already established that every
//! input exists or is produced earlier). The manifest records the config
//! hash, the seed, and a checksum for every input and output of every stage;
//! re-running an unchanged config must reproduce the same checksums, while
//! timings are informational only.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::stages;

#[derive(Debug, Clone)]
pub struct ArtifactRecord {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub name: String,
    pub kind: String,
    pub artifacts: Vec<ArtifactRecord>,
    pub millis: u128,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file, or of a directory's sorted relative names and contents.
pub fn checksum_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for entry in entries {
            hasher.update(entry.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(std::fs::read(&entry)?);
        }
    } else {
        hasher.update(std::fs::read(path)?);
    }
    Ok(hex(&hasher.finalize()))
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("manifest\n");
        let _ = writeln!(out, "config-sha256 {}", self.config_sha256);
        let _ = writeln!(out, "seed {}", self.seed);
        for stage in &self.stages {
            let _ = writeln!(out, "stage {} {} {}ms", stage.name, stage.kind, stage.millis);
            for artifact in &stage.artifacts {
                let _ = writeln!(out, "  {} {} {}", artifact.role, artifact.path, artifact.sha256);
            }
        }
        out
    }

    /// The manifest minus timings: the part that must be identical across
    /// re-runs of the same config and inputs.
    pub fn checksum_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config-sha256 {}", self.config_sha256);
        let _ = writeln!(out, "seed {}", self.seed);
        for stage in &self.stages {
            let _ = writeln!(out, "stage {} {}", stage.name, stage.kind);
            for artifact in &stage.artifacts {
                let _ = writeln!(out, "  {} {} {}", artifact.role, artifact.path, artifact.sha256);
            }
        }
        out
    }
}

/// Runs every stage in order and writes the manifest next to the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest {
        config_sha256: hex(&Sha256::digest(config.source.as_bytes())),
        seed: config.seed,
        stages: Vec::with_capacity(config.stages.len()),
    };
    for stage in &config.stages {
        let started = Instant::now();
        let artifacts = stages::execute(config, stage)?;
        let millis = started.elapsed().as_millis();
        let mut records = Vec::new();
        for path in &artifacts.inputs {
            records.push(ArtifactRecord {
                role: "input",
                path: display_relative(path, &config.base_dir),
                sha256: checksum_path(path)?,
            });
        }
        for path in &artifacts.outputs {
            records.push(ArtifactRecord {
                role: "output",
                path: display_relative(path, &config.base_dir),
                sha256: checksum_path(path)?,
            });
        }
        manifest.stages.push(StageRecord {
            name: stage.name.clone(),
            kind: stage.kind.clone(),
            artifacts: records,
            millis,
        });
    }
    if let Some(parent) = config.manifest_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&config.manifest_path, manifest.to_text())?;
    Ok(manifest)
}

fn display_relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}
