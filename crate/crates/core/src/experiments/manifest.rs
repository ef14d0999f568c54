//! Run manifests and the append-only run index.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "runs.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the run directory.
    pub path: String,
    /// CSV records, excluding the header if there is one.
    pub rows: usize,
    pub has_header: bool,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `generate`, `train`, `suite`, `sweep_nmk`, `sweep_pareto` or `ablate_<kind>`.
    pub kind: String,
    /// Complete configuration; enough to re-execute the run.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of the canonical JSON of `kind` and `config`.
    pub input_hash: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub outputs: Vec<OutputFile>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn input_hash(kind: &str, config: &serde_json::Value) -> String {
    // serde_json maps are sorted, so this rendering is canonical
    let canonical = serde_json::to_string(&serde_json::json!({ "kind": kind, "config": config }))
        .expect("json value");
    sha256_hex(canonical.as_bytes())
}

impl RunManifest {
    pub fn begin(kind: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(RunManifest {
            kind: kind.to_string(),
            input_hash: input_hash(kind, &config),
            config,
            seeds,
            code_version: CODE_VERSION.to_string(),
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            outputs: Vec::new(),
        })
    }

    /// Records `rel` (relative to `dir`), counting its CSV records and hashing it.
    pub fn add_output(
        &mut self,
        dir: &Path,
        rel: impl AsRef<Path>,
        has_header: bool,
    ) -> Result<()> {
        let rel = rel.as_ref();
        let bytes = fs::read(dir.join(rel))?;
        let rows = count_rows(&bytes, has_header)?;
        self.outputs.push(OutputFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            rows,
            has_header,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish<T, E: std::fmt::Display>(&mut self, outcome: &std::result::Result<T, E>) {
        self.finished_at = Some(now());
        self.status = match outcome {
            Ok(_) => RunStatus::Completed,
            Err(e) => RunStatus::Failed {
                error: e.to_string(),
            },
        };
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join(MANIFEST_FILE),
        )?)?)
    }

    /// Checks that every listed output exists with the recorded row count.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let bytes = fs::read(dir.join(&out.path))
                .map_err(|e| Error::Parse(format!("{}: {e}", out.path)))?;
            let rows = count_rows(&bytes, out.has_header)?;
            if rows != out.rows {
                return Err(Error::Parse(format!(
                    "{}: {} rows, manifest says {}",
                    out.path, rows, out.rows
                )));
            }
        }
        Ok(())
    }
}

fn count_rows(bytes: &[u8], has_header: bool) -> Result<usize> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(bytes);
    let mut n = 0;
    for rec in r.records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

/// Appends one JSON line describing the run to `root/runs.jsonl`, holding an
/// exclusive file lock while writing.
pub fn append_index(root: &Path, run_dir: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(root)?;
    let line = serde_json::to_string(&serde_json::json!({
        "run_dir": run_dir.to_string_lossy(),
        "kind": manifest.kind,
        "input_hash": manifest.input_hash,
        "status": manifest.status,
        "started_at": manifest.started_at,
        "finished_at": manifest.finished_at,
    }))?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(root.join(INDEX_FILE))?;
    file.lock()?;
    let written = writeln!(file, "{line}");
    file.unlock()?;
    written?;
    Ok(())
}

/// Writes the manifest into `dir` and indexes it under `root`.
pub fn seal<T, E: std::fmt::Display>(
    mut manifest: RunManifest,
    outcome: &std::result::Result<T, E>,
    root: &Path,
    dir: &Path,
) -> Result<RunManifest> {
    manifest.finish(outcome);
    manifest.write(dir)?;
    append_index(root, dir, &manifest)?;
    Ok(manifest)
}
