//! Artifact bookkeeping: every run writes one `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub struct Run {
    command: &'static str,
    out_dir: PathBuf,
    config: Value,
    inputs: Value,
    seeds: Value,
    artifacts: Vec<String>,
    started: Instant,
    timings: bool,
}

impl Run {
    pub fn new(command: &'static str, out_dir: &Path, timings: bool) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        Ok(Self {
            command,
            out_dir: out_dir.to_path_buf(),
            config: Value::Null,
            inputs: json!({}),
            seeds: json!({}),
            artifacts: Vec::new(),
            started: Instant::now(),
            timings,
        })
    }

    pub fn set_config(&mut self, config: Value) {
        self.config = config;
    }

    pub fn set_input(&mut self, key: &str, path: &Path) {
        self.inputs[key] = json!(path.display().to_string());
    }

    pub fn set_seed(&mut self, key: &str, seed: u64) {
        self.seeds[key] = json!(seed);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` with the final status.
    pub fn finish(self, status: &str) -> Result<()> {
        let mut manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "config": self.config,
            "artifacts": self.artifacts,
        });
        if self.timings {
            manifest["timings"] = json!({ "wall_seconds": self.started.elapsed().as_secs_f64() });
        }
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}
