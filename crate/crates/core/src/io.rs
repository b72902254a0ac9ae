//! Dataset file format and small filesystem helpers.
//!
//! A dataset file is a single JSON header line followed by a CSV body:
//!
//! ```text
//! {"format":"sfr-atf","version":1,"speed_of_sound":343.0,"label":"...","columns":[...]}
//! rx,ry,rz,sx,sy,sz,f_hz,p_re,p_im
//! 0.1,0,0,1.5,0,0,500,0.012,-0.05
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting so files reload bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{ATFDataset, ATFSample, ComplexPressure, Position3};

pub const DATASET_FORMAT: &str = "sfr-atf";
pub const DATASET_VERSION: u32 = 1;
pub const DATASET_COLUMNS: [&str; 9] = ["rx", "ry", "rz", "sx", "sy", "sz", "f_hz", "p_re", "p_im"];

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    speed_of_sound: f64,
    label: String,
    columns: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn dataset_to_string(dataset: &ATFDataset) -> String {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        speed_of_sound: dataset.speed_of_sound,
        label: dataset.label.clone(),
        columns: DATASET_COLUMNS.iter().map(|c| c.to_string()).collect(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    out.push_str(&DATASET_COLUMNS.join(","));
    out.push('\n');
    for s in &dataset.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.receiver.x,
            s.receiver.y,
            s.receiver.z,
            s.source.x,
            s.source.y,
            s.source.z,
            s.frequency,
            s.pressure.re,
            s.pressure.im
        );
    }
    out
}

pub fn dataset_from_str(text: &str) -> Result<ATFDataset> {
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Schema("empty dataset file".into()))?;
    let header: DatasetHeader = serde_json::from_str(header_line)?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Schema(format!(
            "unexpected format tag `{}`",
            header.format
        )));
    }
    if header.version != DATASET_VERSION {
        return Err(Error::Schema(format!(
            "unsupported dataset version {} (expected {DATASET_VERSION})",
            header.version
        )));
    }
    if header.columns != DATASET_COLUMNS {
        return Err(Error::Schema(format!(
            "unexpected column schema {:?}",
            header.columns
        )));
    }
    let csv_header = lines
        .next()
        .ok_or_else(|| Error::Schema("missing CSV header row".into()))?;
    if csv_header.trim() != DATASET_COLUMNS.join(",") {
        return Err(Error::Schema(format!("bad CSV header `{csv_header}`")));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schema(format!("row {}: {e}", lineno + 3)))?;
        if vals.len() != DATASET_COLUMNS.len() {
            return Err(Error::Schema(format!(
                "row {}: expected {} columns, found {}",
                lineno + 3,
                DATASET_COLUMNS.len(),
                vals.len()
            )));
        }
        samples.push(ATFSample {
            receiver: Position3::new(vals[0], vals[1], vals[2]),
            source: Position3::new(vals[3], vals[4], vals[5]),
            frequency: vals[6],
            pressure: ComplexPressure::new(vals[7], vals[8]),
        });
    }
    ATFDataset::new(samples, header.speed_of_sound, header.label)
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(dataset: &ATFDataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_string(dataset).as_bytes())
}

/// Loads a dataset file; the frequency grid must be consistent across pairs.
pub fn load_dataset(path: &Path) -> Result<ATFDataset> {
    let ds = dataset_from_str(&read_to_string(path)?)?;
    let report = crate::types::validate_dataset(&ds);
    if report.has(crate::types::ViolationKind::InconsistentFrequencyGrid) {
        return Err(Error::Dataset(format!(
            "{}: samples do not share a common frequency grid",
            path.display()
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e3..1e3f64,
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
        ]
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(vals in proptest::collection::vec((arb_f64(), arb_f64(), 1e-3..1e5f64), 1..20)) {
            let samples: Vec<_> = vals.iter().map(|&(a, b, f)| ATFSample {
                receiver: Position3::new(a, b, a * 0.5),
                source: Position3::new(b, a, 1.0),
                frequency: f,
                pressure: ComplexPressure::new(a / 3.0, b / 7.0),
            }).collect();
            let ds = ATFDataset::new(samples, 343.0, "prop").unwrap();
            let back = dataset_from_str(&dataset_to_string(&ds)).unwrap();
            prop_assert_eq!(back.samples.len(), ds.samples.len());
            for (x, y) in back.samples.iter().zip(&ds.samples) {
                prop_assert_eq!(x.pressure.re.to_bits(), y.pressure.re.to_bits());
                prop_assert_eq!(x.pressure.im.to_bits(), y.pressure.im.to_bits());
                prop_assert_eq!(x.receiver.x.to_bits(), y.receiver.x.to_bits());
                prop_assert_eq!(x.frequency.to_bits(), y.frequency.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(dataset_from_str(""), Err(Error::Schema(_))));
        assert!(matches!(dataset_from_str("{not json"), Err(Error::Json(_))));
        let wrong = r#"{"format":"other","version":1,"speed_of_sound":343,"label":"","columns":[]}"#;
        assert!(matches!(dataset_from_str(wrong), Err(Error::Schema(_))));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"hello");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
