//! Append-only JSONL cache of expensive results.
//!
//! Each line is a [`CacheRecord`]. Lookups take a shared lock and appends an
//! exclusive one, so concurrent processes never interleave partial lines.
//! Records stamped with another tool version are skipped, never removed.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CACHE_ENV: &str = "SOLVGEO_CACHE";
pub const DEFAULT_CACHE_PATH: &str = "solvgeo-cache.jsonl";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub command: String,
    pub params_hash: String,
    pub payload: Value,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone)]
pub struct Cache {
    path: Option<PathBuf>,
}

/// Stable digest of a command and its canonical request. `serde_json` maps
/// keep their keys sorted, so equal requests serialise identically.
pub fn cache_key(command: &str, request: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update(b"\n");
    hasher.update(request.to_string().as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Cache {
    pub fn disabled() -> Self {
        Self { path: None }
    }

    pub fn at(path: impl Into<PathBuf>) -> Self {
        Self { path: Some(path.into()) }
    }

    /// Path from `SOLVGEO_CACHE`, else `./solvgeo-cache.jsonl`.
    pub fn from_env() -> Self {
        Self::at(std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_PATH)))
    }

    /// Most recent payload stored under `key` by this tool version.
    pub fn get(&self, key: &str) -> Result<Option<Value>, CliError> {
        let Some(path) = &self.path else { return Ok(None) };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        file.lock_shared()?;
        let mut found = None;
        for line in BufReader::new(&file).lines() {
            let line = line?;
            // A torn or foreign line is skipped rather than failing the run.
            let Ok(record) = serde_json::from_str::<CacheRecord>(&line) else { continue };
            if record.key == key && record.tool_version == TOOL_VERSION {
                found = Some(record.payload);
            }
        }
        file.unlock()?;
        Ok(found)
    }

    pub fn put(&self, key: &str, command: &str, params_hash: &str, payload: &Value) -> Result<(), CliError> {
        let Some(path) = &self.path else { return Ok(()) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let record = CacheRecord {
            key: key.to_string(),
            command: command.to_string(),
            params_hash: params_hash.to_string(),
            payload: payload.clone(),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            tool_version: TOOL_VERSION.to_string(),
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.lock()?;
        let written = file.write_all(line.as_bytes()).and_then(|_| file.flush());
        file.unlock()?;
        written?;
        Ok(())
    }

    /// Cached payload for `(command, request)`, computing and storing it on
    /// a miss.
    pub fn get_or_compute<T, F>(&self, command: &str, request: &Value, params_hash: &str, compute: F) -> Result<T, CliError>
    where
        T: Serialize + for<'de> Deserialize<'de>,
        F: FnOnce() -> Result<T, CliError>,
    {
        let key = cache_key(command, request);
        if let Some(payload) = self.get(&key)? {
            if let Ok(value) = serde_json::from_value(payload) {
                return Ok(value);
            }
        }
        let value = compute()?;
        self.put(&key, command, params_hash, &serde_json::to_value(&value)?)?;
        Ok(value)
    }
}
