//! Line-oriented pipeline configuration.
//!
//! Format: optional global `key = value` lines (`seed`, `manifest`), then one
//! `[<kind> <name>]` section per stage with its `key = value` parameters.
//! `#` starts a comment. Relative paths resolve against the config file's
//! directory. Validation runs before any stage executes: unknown kinds,
//! missing or unknown keys, unparseable values, duplicate stage names or
//! outputs, and inputs that are neither existing files nor earlier stages'
//! outputs all fail the whole run up front. Because an input must come from
//! an *earlier* stage, the stage graph is acyclic by construction.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{PipelineError, Result};
use crate::stages::{schema_for, KNOWN_KINDS};

#[derive(Debug, Clone)]
pub struct StageConfig {
    pub kind: String,
    pub name: String,
    pub params: HashMap<String, String>,
    /// 1-based line of the section header, for error messages.
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub manifest_path: PathBuf,
    pub base_dir: PathBuf,
    pub stages: Vec<StageConfig>,
    /// Canonical bytes of the config, hashed into the manifest.
    pub source: String,
}

impl PipelineConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<PipelineConfig> {
        let source = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Self::parse(&source, base_dir, seed_override)
    }

    pub fn parse(source: &str, base_dir: PathBuf, seed_override: Option<u64>) -> Result<PipelineConfig> {
        let mut seed: Option<u64> = None;
        let mut manifest: Option<String> = None;
        let mut stages: Vec<StageConfig> = Vec::new();

        for (i, raw) in source.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let header = header.strip_suffix(']').ok_or_else(|| {
                    PipelineError::validation(format!("line {ln}: unterminated section header"))
                })?;
                let mut parts = header.split_whitespace();
                let (kind, name) = match (parts.next(), parts.next(), parts.next()) {
                    (Some(k), Some(n), None) => (k.to_owned(), n.to_owned()),
                    _ => {
                        return Err(PipelineError::validation(format!(
                            "line {ln}: section header must be [<kind> <name>]"
                        )))
                    }
                };
                if !KNOWN_KINDS.contains(&kind.as_str()) {
                    return Err(PipelineError::validation(format!(
                        "line {ln}: unknown stage kind {kind:?}"
                    )));
                }
                if stages.iter().any(|s| s.name == name) {
                    return Err(PipelineError::validation(format!(
                        "line {ln}: duplicate stage name {name:?}"
                    )));
                }
                stages.push(StageConfig { kind, name, params: HashMap::new(), line: ln });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::validation(format!("line {ln}: expected key = value"))
            })?;
            let (key, value) = (key.trim().to_owned(), value.trim().to_owned());
            match stages.last_mut() {
                None => match key.as_str() {
                    "seed" => {
                        seed = Some(value.parse().map_err(|_| {
                            PipelineError::validation(format!("line {ln}: seed must be an integer"))
                        })?)
                    }
                    "manifest" => manifest = Some(value),
                    other => {
                        return Err(PipelineError::validation(format!(
                            "line {ln}: unknown global key {other:?}"
                        )))
                    }
                },
                Some(stage) => {
                    if stage.params.insert(key.clone(), value).is_some() {
                        return Err(PipelineError::validation(format!(
                            "line {ln}: duplicate key {key:?} in stage {:?}",
                            stage.name
                        )));
                    }
                }
            }
        }

        let config = PipelineConfig {
            seed: seed_override.or(seed).unwrap_or(0),
            manifest_path: base_dir.join(manifest.unwrap_or_else(|| "run-manifest.txt".into())),
            base_dir,
            stages,
            source: source.to_owned(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Schema validation plus the input/output wiring rules.
    fn validate(&self) -> Result<()> {
        let mut produced: Vec<PathBuf> = Vec::new();
        for stage in &self.stages {
            let schema = schema_for(&stage.kind).expect("kind checked at parse");
            let at = |msg: String| {
                PipelineError::validation(format!("stage {:?} (line {}): {msg}", stage.name, stage.line))
            };
            for key in schema.required {
                if !stage.params.contains_key(*key) {
                    return Err(at(format!("missing required key {key:?}")));
                }
            }
            for key in stage.params.keys() {
                if !schema.required.contains(&key.as_str()) && !schema.optional.contains(&key.as_str()) {
                    return Err(at(format!("unknown key {key:?} for kind {:?}", stage.kind)));
                }
            }
            (schema.check)(&stage.params).map_err(|m| at(m))?;
            for key in schema.inputs {
                let Some(value) = stage.params.get(*key) else { continue };
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let path = self.resolve(item);
                    if !path.exists() && !produced.contains(&path) {
                        return Err(at(format!(
                            "input {item:?} is neither an existing file nor an earlier stage's output"
                        )));
                    }
                }
            }
            for key in schema.outputs {
                let Some(value) = stage.params.get(*key) else { continue };
                let path = self.resolve(value);
                if produced.contains(&path) {
                    return Err(at(format!("output {value:?} already produced by an earlier stage")));
                }
                produced.push(path);
            }
        }
        Ok(())
    }
}

impl StageConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            PipelineError::validation(format!("stage {:?}: missing key {key:?}", self.name))
        })
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                PipelineError::validation(format!(
                    "stage {:?}: cannot parse {key} = {raw:?}",
                    self.name
                ))
            }),
        }
    }

    pub fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| {
            PipelineError::validation(format!("stage {:?}: cannot parse {key} = {raw:?}", self.name))
        })
    }
}
