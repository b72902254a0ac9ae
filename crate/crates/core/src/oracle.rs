//! Closed-form sound fields, dataset synthesis and impulse-response
//! ingestion.
//!
//! Time convention is `e^{+jωt}`, so outgoing waves carry `e^{-jkd}`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Expr, ExprBuilder, NodeId, ScalarField};
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::types::{
    wavenumber_of, ATFDataset, ATFSample, ComplexPressure, Part, Position3, RoomKind, ScenarioConfig, Split,
};

/// Oracle fields refuse to evaluate closer than this to the source (m).
pub const MIN_DISTANCE: f64 = 1e-6;

/// Length of impulse response kept before transforming (s).
pub const DEFAULT_TRUNCATION_S: f64 = 0.5;

fn check_k(k: f64) -> Result<()> {
    if k >= 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("wavenumber must be finite and >= 0, got {k}")))
    }
}

/// `e^{-jkd}/(4πd)` with `d = |r - s|`.
pub fn green_free_field(r: &Position3, s: &Position3, k: f64) -> Result<ComplexPressure> {
    check_k(k)?;
    let d = r.distance(s);
    if !(d >= MIN_DISTANCE) {
        return Err(Error::Singular(format!("source-receiver distance {d} m")));
    }
    Ok(ComplexPressure::from_polar(1.0 / (4.0 * PI * d), -k * d))
}

/// Free field plus one image source mirrored in the plane `z = floor_z`,
/// weighted by the reflection coefficient `beta`.
pub fn green_floor_reflection(
    r: &Position3,
    s: &Position3,
    k: f64,
    floor_z: f64,
    beta: f64,
) -> Result<ComplexPressure> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("reflection coefficient {beta} outside [0, 1]")));
    }
    if !(r.z > floor_z && s.z > floor_z) {
        return Err(Error::Domain(format!(
            "positions must lie strictly above the floor at z = {floor_z}"
        )));
    }
    let direct = green_free_field(r, s, k)?;
    if beta == 0.0 {
        return Ok(direct);
    }
    Ok(direct + green_free_field(r, &s.mirrored_z(floor_z), k)?.scale(beta))
}

/// An environment with a closed-form transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Oracle {
    FreeField,
    FloorReflection { floor_z: f64, beta: f64 },
}

impl Oracle {
    pub fn from_scenario(scenario: &ScenarioConfig) -> Self {
        match scenario.room_kind {
            RoomKind::FreeField => Oracle::FreeField,
            RoomKind::FloorReflection => Oracle::FloorReflection {
                floor_z: scenario.floor_z,
                beta: scenario.reflection_coeff,
            },
        }
    }

    pub fn evaluate(&self, r: &Position3, s: &Position3, k: f64) -> Result<ComplexPressure> {
        match *self {
            Oracle::FreeField => green_free_field(r, s, k),
            Oracle::FloorReflection { floor_z, beta } => green_floor_reflection(r, s, k, floor_z, beta),
        }
    }

    /// One component of the field as a differentiable function of the six
    /// pair coordinates `(rx, ry, rz, sx, sy, sz)`.
    pub fn field(&self, k: f64, part: Part) -> Expr {
        let mut b = ExprBuilder::new(6, 0);
        let r: Vec<NodeId> = (0..3).map(|i| b.input(i)).collect();
        let s: Vec<NodeId> = (3..6).map(|i| b.input(i)).collect();
        let direct = green_term(&mut b, &r, &s, k, part, 1.0);
        let out = match *self {
            Oracle::FreeField => direct,
            Oracle::FloorReflection { floor_z, beta } => {
                // image source: (sx, sy, 2·floor_z - sz)
                let two_floor = b.constant(2.0 * floor_z);
                let neg_sz = b.scale(-1.0, s[2]);
                let img_z = b.add(two_floor, neg_sz);
                let image = green_term(&mut b, &r, &[s[0], s[1], img_z], k, part, beta);
                b.add(direct, image)
            }
        };
        b.finish(out)
    }
}

fn green_term(b: &mut ExprBuilder, r: &[NodeId], s: &[NodeId], k: f64, part: Part, weight: f64) -> NodeId {
    let sq: Vec<NodeId> = (0..3)
        .map(|i| {
            let d = b.sub(r[i], s[i]);
            b.mul(d, d)
        })
        .collect();
    let d2 = b.sum(&sq);
    let d = b.sqrt(d2);
    let inv = b.recip(d);
    let kd = b.scale(k, d);
    let wave = match part {
        Part::Real => b.cos(kd),
        Part::Imag => {
            let s = b.sin(kd);
            b.scale(-1.0, s)
        }
    };
    let amp = b.mul(wave, inv);
    b.scale(weight / (4.0 * PI), amp)
}

/// `|∇²P + k²P|` of a real field at `inputs`, Laplacian over `axes`.
pub fn helmholtz_residual(field: &dyn ScalarField, params: &[f64], inputs: &[f64], k: f64, axes: &[usize]) -> Result<f64> {
    let v = autodiff::eval(field, inputs, params)?;
    let lap = autodiff::laplacian(field, inputs, params, axes)?;
    Ok((lap + k * k * v).abs())
}

/// Complex-magnitude Helmholtz residual of an oracle in the receiver
/// coordinates, computed by differentiating its closed form.
pub fn helmholtz_residual_numeric(oracle: &Oracle, r: &Position3, s: &Position3, k: f64) -> Result<f64> {
    oracle.evaluate(r, s, k)?;
    if let Oracle::FloorReflection { floor_z, .. } = oracle {
        if r.distance(&s.mirrored_z(*floor_z)) < MIN_DISTANCE {
            return Err(Error::Singular("receiver on the image source".into()));
        }
    }
    let x = [r.x, r.y, r.z, s.x, s.y, s.z];
    let mut sq = 0.0;
    for part in Part::BOTH {
        let f = oracle.field(k, part);
        sq += helmholtz_residual(&f, &[], &x, k, &[0, 1, 2])?.powi(2);
    }
    Ok(sq.sqrt())
}

/// Evaluates the scenario's environment on every pair of the split:
/// training = training sources × training receivers, test = test sources ×
/// test receivers. Samples are ordered by frequency, then source, then
/// receiver.
pub fn synth_dataset(scenario: &ScenarioConfig, split: Split) -> Result<ATFDataset> {
    scenario.validate()?;
    let oracle = Oracle::from_scenario(scenario);
    let rx = scenario.receiver_positions();
    let src = scenario.source_positions();
    let (src_idx, rx_idx) = match split {
        Split::Train => (&scenario.train_source_indices, &scenario.train_receiver_indices),
        Split::Test => (&scenario.test_source_indices, &scenario.test_receiver_indices),
    };
    if src_idx.is_empty() || rx_idx.is_empty() {
        return Err(Error::Config(format!("{split:?} split has no pairs")));
    }
    let jobs: Vec<(f64, usize)> = scenario
        .frequencies
        .iter()
        .flat_map(|&f| src_idx.iter().map(move |&s| (f, s)))
        .collect();
    let chunks: Vec<Result<Vec<ATFSample>>> = jobs
        .par_iter()
        .map(|&(f, si)| {
            let k = wavenumber_of(f, scenario.speed_of_sound)?;
            let s = src[si];
            rx_idx
                .iter()
                .map(|&ri| {
                    let r = rx[ri];
                    let p = oracle.evaluate(&r, &s, k).map_err(|e| match e {
                        Error::Singular(_) => Error::Dataset(format!(
                            "receiver {ri} and source {si} coincide"
                        )),
                        other => other,
                    })?;
                    ATFSample::new(r, s, f, p)
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(jobs.len() * rx_idx.len());
    for c in chunks {
        samples.extend(c?);
    }
    let label = match split {
        Split::Train => "synthetic-train",
        Split::Test => "synthetic-test",
    };
    ATFDataset::new(samples, scenario.speed_of_sound, label)
}

/// A sampled room impulse response between two positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RIRRecord {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub receiver: Position3,
    pub source: Position3,
}

/// Number of samples kept when truncating to `seconds` at `sample_rate`.
pub fn truncation_len(seconds: f64, sample_rate: f64) -> usize {
    let x = seconds * sample_rate;
    let near = x.round();
    if (x - near).abs() <= 1e-9 * near.max(1.0) {
        near as usize
    } else {
        x.floor() as usize
    }
}

/// Direct Fourier sums `Σ h[n]·e^{-j2πfn/fs}` over the first
/// `truncation_s` seconds, one per requested frequency.
pub fn rir_to_atf(rir: &RIRRecord, frequencies: &[f64], truncation_s: f64) -> Result<Vec<ComplexPressure>> {
    let fs = rir.sample_rate;
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::Domain(format!("sample rate must be positive, got {fs}")));
    }
    if rir.samples.is_empty() {
        return Err(Error::Domain("impulse response is empty".into()));
    }
    if !(truncation_s > 0.0) {
        return Err(Error::Domain(format!("truncation must be positive, got {truncation_s}")));
    }
    if let Some(&f) = frequencies.iter().find(|&&f| !(f > 0.0 && f < fs / 2.0)) {
        return Err(Error::Domain(format!(
            "frequency {f} Hz outside (0, {}) Hz",
            fs / 2.0
        )));
    }
    let n = truncation_len(truncation_s, fs).min(rir.samples.len());
    Ok(frequencies
        .iter()
        .map(|&f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &h) in rir.samples[..n].iter().enumerate() {
                // reduce f·n modulo fs first to keep the phase accurate
                let cycles = (f * i as f64) % fs / fs;
                let (s, c) = (2.0 * PI * cycles).sin_cos();
                re += h * c;
                im -= h * s;
            }
            ComplexPressure::new(re, im)
        })
        .collect())
}

/// One RIR file listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
}

/// Index of RIR files. File paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    pub entries: Vec<ManifestEntry>,
}

/// Frequencies and processing options for ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub frequencies: Vec<f64>,
    pub truncation_s: f64,
    pub speed_of_sound: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            frequencies: (1..=20).map(|i| 100.0 * i as f64).collect(),
            truncation_s: DEFAULT_TRUNCATION_S,
            speed_of_sound: crate::types::DEFAULT_SPEED_OF_SOUND,
        }
    }
}

/// Reads a single-column CSV of amplitudes. Blank lines are skipped.
pub fn read_rir_csv(path: &Path) -> Result<Vec<f64>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("{}:{}: not a number: `{}`", path.display(), i + 1, l.trim())))
        })
        .collect()
}

/// Formats amplitudes as a single-column CSV.
pub fn rir_csv(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 12);
    for v in samples {
        out.push_str(&format!("{v}\n"));
    }
    out
}

/// Loads every RIR in the manifest and converts it into transfer-function
/// samples at the requested frequencies.
pub fn ingest_rir_directory(manifest_path: &Path, options: &IngestOptions) -> Result<ATFDataset> {
    let text = read_to_string(manifest_path)?;
    let manifest: RirManifest = serde_json::from_str(&text).map_err(|e| Error::Ingest {
        entry: manifest_path.display().to_string(),
        reason: format!("malformed manifest: {e}"),
    })?;
    if manifest.entries.is_empty() {
        return Err(Error::Ingest {
            entry: manifest_path.display().to_string(),
            reason: "manifest lists no entries".into(),
        });
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut rate: Option<f64> = manifest.sample_rate;
    for e in &manifest.entries {
        match (rate, e.sample_rate) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Ingest {
                    entry: e.file.display().to_string(),
                    reason: format!("sample rate {b} Hz differs from {a} Hz"),
                })
            }
            (None, Some(b)) => rate = Some(b),
            _ => {}
        }
    }
    let fs = rate.ok_or_else(|| Error::Ingest {
        entry: manifest_path.display().to_string(),
        reason: "no sample rate given".into(),
    })?;
    let mut freqs = options.frequencies.clone();
    freqs.sort_by(f64::total_cmp);
    let mut per_entry = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let name = e.file.display().to_string();
        let wrap = |err: Error| match err {
            Error::Io { .. } => err,
            other => Error::Ingest {
                entry: name.clone(),
                reason: other.to_string(),
            },
        };
        let samples = read_rir_csv(&base.join(&e.file)).map_err(wrap)?;
        let rir = RIRRecord {
            samples,
            sample_rate: fs,
            receiver: Position3::new(e.rx, e.ry, e.rz),
            source: Position3::new(e.sx, e.sy, e.sz),
        };
        let atf = rir_to_atf(&rir, &freqs, options.truncation_s).map_err(wrap)?;
        per_entry.push((rir.receiver, rir.source, atf));
    }
    let mut out = Vec::with_capacity(freqs.len() * per_entry.len());
    for (fi, &f) in freqs.iter().enumerate() {
        for (e, (r, s, atf)) in manifest.entries.iter().zip(&per_entry) {
            out.push(ATFSample::new(*r, *s, f, atf[fi]).map_err(|err| Error::Ingest {
                entry: e.file.display().to_string(),
                reason: err.to_string(),
            })?);
        }
    }
    ATFDataset::new(out, options.speed_of_sound, manifest_path.display().to_string())
}
