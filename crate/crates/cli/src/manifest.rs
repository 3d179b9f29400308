//! Run manifest: every command finishes by writing `manifest.json` into its
//! output directory, atomically, whether it succeeded or not. Data files
//! are byte-stable across reruns; wall-clock timestamps live only here.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rftlab_core::fmt::{json_array, json_escape, JsonObject};

pub const ARTIFACT_VERSION: u64 = 1;

/// Records artifacts as they are produced so the manifest can list them
/// even after a mid-run failure.
pub struct RunContext {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub config_digest: String,
    started_ms: u128,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(
        command: &'static str,
        out_dir: PathBuf,
        seed: u64,
        config_digest: String,
    ) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Self { command, out_dir, seed, config_digest, started_ms: now_ms(), outputs: Vec::new() })
    }

    /// Absolute path for a named artifact.
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write a data file and record it in the manifest's output list.
    pub fn write_file(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    /// Record a file produced by a writer that took the path directly.
    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Write the manifest; called exactly once, at the end of the run.
    pub fn finish(&self, status: RunStatus) -> Result<()> {
        let status_name = match status {
            RunStatus::Ok => "ok",
            RunStatus::GateFailed(_) => "gate_failed",
            RunStatus::Failed(_) => "failed",
        };
        let mut object = JsonObject::new()
            .string("command", self.command)
            .uint("artifact_version", ARTIFACT_VERSION)
            .string("config_digest", &self.config_digest)
            .uint("seed", self.seed)
            .uint("started_unix_ms", self.started_ms as u64)
            .uint("finished_unix_ms", now_ms() as u64)
            .string("status", status_name);
        match &status {
            RunStatus::Ok => {}
            RunStatus::GateFailed(message) | RunStatus::Failed(message) => {
                object = object.string("error", message);
            }
        }
        let object = object.raw(
            "outputs",
            json_array(self.outputs.iter().map(|name| format!("\"{}\"", json_escape(name)))),
        );
        write_atomic(&self.path("manifest.json"), &(object.render() + "\n"))
    }
}

pub enum RunStatus {
    /// Run completed and every checked property held.
    Ok,
    /// Run completed with full artifacts, but a checked property failed
    /// (the command exits 2).
    GateFailed(String),
    /// Run aborted; only the manifest records what happened.
    Failed(String),
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Write via a sibling temp file and rename, so a torn write can never look
/// like a finished manifest.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}
