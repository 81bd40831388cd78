//! Run manifests: a JSON record of what a command did, written atomically
//! when it ends.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Resolved training config as key/value pairs (empty when the command
    /// has none).
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// SHA-256 of the checkpoint read or written by the run.
    pub checkpoint_sha256: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
    /// "ok", "interrupted" or "failed".
    pub status: String,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            argv: std::env::args().collect(),
            config: BTreeMap::new(),
            seed: None,
            checkpoint_sha256: None,
            started_at: timestamp(Utc::now()),
            finished_at: String::new(),
            outputs: Vec::new(),
            status: "ok".into(),
        }
    }

    /// Records a `key=value` config dump.
    pub fn set_config(&mut self, text: &str) {
        self.config = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect();
    }

    pub fn hash_checkpoint(&mut self, path: &Path) -> std::io::Result<()> {
        self.checkpoint_sha256 = Some(sha256_file(path)?);
        Ok(())
    }

    /// Stamps the end time and writes the manifest via a temporary file in
    /// the target directory.
    pub fn finish(mut self, path: &Path) -> std::io::Result<()> {
        self.finished_at = timestamp(Utc::now());
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        let json = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        tmp.write_all(json.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
