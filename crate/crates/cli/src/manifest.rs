use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sfr_core::io::{sha256_hex, write_atomic};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one invocation, written next to its outputs whether the run
/// succeeded or not.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub effective_config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub failures: Vec<String>,
    pub details: Value,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub path: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            status: "running".into(),
            exit_code: 0,
            error: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            config_hash: String::new(),
            effective_config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
            details: Value::Object(Default::default()),
            wall_clock_s: 0.0,
            path: None,
        }
    }

    /// Hashes an input file and records it.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `bytes` atomically and records the output.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn set_config<T: Serialize>(&mut self, config: &T) {
        self.effective_config = serde_json::to_value(config).expect("config serializes");
        self.config_hash = sfr_core::eval::config_hash(config);
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        if let Value::Object(map) = &mut self.details {
            map.insert(key.into(), serde_json::to_value(value).expect("detail serializes"));
        }
    }

    pub fn finish(&mut self, result: &Result<(), CliError>, seconds: f64) {
        self.wall_clock_s = seconds;
        match result {
            Ok(()) => {
                self.status = "ok".into();
                self.exit_code = 0;
            }
            Err(e) => {
                self.status = "failed".into();
                self.exit_code = e.code;
                self.error = Some(e.message.clone());
            }
        }
    }

    pub fn save(&self) -> Result<(), CliError> {
        if let Some(path) = &self.path {
            let text = serde_json::to_string_pretty(self).expect("manifest serializes");
            write_atomic(path, text.as_bytes())?;
        }
        Ok(())
    }
}
