use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{read_to_string, sha256_hex, write_atomic};

use super::metric::{format_db, parse_db};

pub const TABLE_HEADER: &str = "f_hz,method,variant,nmse_db,n_pairs";

#[derive(Debug, Clone, PartialEq)]
pub struct NMSERow {
    pub frequency: f64,
    pub method: String,
    pub variant: String,
    pub nmse_db: f64,
    pub n_pairs: usize,
}

/// Per-frequency scores with the provenance of the test set and config.
///
/// The CSV form starts with `#`-prefixed provenance lines, then the header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NMSETable {
    pub rows: Vec<NMSERow>,
    pub dataset_checksum: String,
    pub config_hash: String,
}

/// SHA-256 of a value's canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

impl NMSETable {
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.frequency).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn find(&self, frequency: f64, method: &str, variant: &str) -> Option<&NMSERow> {
        self.rows
            .iter()
            .find(|r| r.frequency == frequency && r.method == method && r.variant == variant)
    }

    /// Rows sorted by frequency, keeping the relative order of rows that
    /// share a frequency.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    }

    /// Appends another table scored on the same test set.
    pub fn merge(&mut self, other: NMSETable) -> Result<()> {
        if self.rows.is_empty() && self.dataset_checksum.is_empty() {
            self.dataset_checksum = other.dataset_checksum;
        } else if self.dataset_checksum != other.dataset_checksum {
            return Err(Error::Dataset(format!(
                "tables were scored on different test sets ({} vs {})",
                self.dataset_checksum, other.dataset_checksum
            )));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# dataset_sha256={}\n# config_sha256={}\n{TABLE_HEADER}\n",
            self.dataset_checksum, self.config_hash
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.frequency,
                r.method,
                r.variant,
                format_db(r.nmse_db),
                r.n_pairs
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut table = NMSETable::default();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k {
                        "dataset_sha256" => table.dataset_checksum = v.to_string(),
                        "config_sha256" => table.config_hash = v.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line != TABLE_HEADER {
                    return Err(Error::Schema(format!("line {}: expected header `{TABLE_HEADER}`", i + 1)));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::Schema(format!("line {}: {what}", i + 1));
            if cols.len() != 5 {
                return Err(bad("expected 5 columns"));
            }
            let row = NMSERow {
                frequency: cols[0].parse().map_err(|_| bad("bad f_hz"))?,
                method: cols[1].to_string(),
                variant: cols[2].to_string(),
                nmse_db: parse_db(cols[3]).map_err(|_| bad("bad nmse_db"))?,
                n_pairs: cols[4].parse().map_err(|_| bad("bad n_pairs"))?,
            };
            if row.n_pairs == 0 {
                return Err(bad("n_pairs must be positive"));
            }
            table.rows.push(row);
        }
        if !header_seen {
            return Err(Error::Schema("missing table header".into()));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_to_string(path)?)
    }
}
