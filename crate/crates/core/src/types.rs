//! Shared domain vocabulary: positions, pressures, datasets and geometry.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of sound in air at 20 °C, m/s.
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// A point in room coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Position3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        (*self - *other).norm()
    }

    /// Mirror image across the horizontal plane `z = plane_z`.
    pub fn mirrored_z(&self, plane_z: f64) -> Position3 {
        Position3::new(self.x, self.y, 2.0 * plane_z - self.z)
    }
}

impl Add for Position3 {
    type Output = Position3;
    fn add(self, o: Position3) -> Position3 {
        Position3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Position3 {
    type Output = Position3;
    fn sub(self, o: Position3) -> Position3 {
        Position3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Position3 {
    type Output = Position3;
    fn mul(self, a: f64) -> Position3 {
        Position3::new(self.x * a, self.y * a, self.z * a)
    }
}

/// Complex transfer-function value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexPressure {
    pub re: f64,
    pub im: f64,
}

impl ComplexPressure {
    pub const ZERO: ComplexPressure = ComplexPressure { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        ComplexPressure { re, im }
    }

    /// `magnitude · e^{j·phase}`.
    pub fn from_polar(magnitude: f64, phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        ComplexPressure::new(magnitude * c, magnitude * s)
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn scale(self, a: f64) -> Self {
        ComplexPressure::new(self.re * a, self.im * a)
    }

    pub fn part(&self, part: Part) -> f64 {
        match part {
            Part::Real => self.re,
            Part::Imag => self.im,
        }
    }
}

impl Add for ComplexPressure {
    type Output = ComplexPressure;
    fn add(self, o: Self) -> Self {
        ComplexPressure::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for ComplexPressure {
    type Output = ComplexPressure;
    fn sub(self, o: Self) -> Self {
        ComplexPressure::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for ComplexPressure {
    type Output = ComplexPressure;
    fn mul(self, o: Self) -> Self {
        ComplexPressure::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Which component of a complex pressure a scalar model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imag,
}

impl Part {
    pub const BOTH: [Part; 2] = [Part::Real, Part::Imag];

    pub fn as_str(&self) -> &'static str {
        match self {
            Part::Real => "real",
            Part::Imag => "imag",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Part {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" | "re" => Ok(Part::Real),
            "imag" | "im" => Ok(Part::Imag),
            other => Err(Error::Config(format!("unknown part `{other}`"))),
        }
    }
}

/// One transfer-function value for a (receiver, source, frequency) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ATFSample {
    pub receiver: Position3,
    pub source: Position3,
    pub frequency: f64,
    pub pressure: ComplexPressure,
}

impl ATFSample {
    pub fn new(
        receiver: Position3,
        source: Position3,
        frequency: f64,
        pressure: ComplexPressure,
    ) -> Result<Self> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::Domain(format!(
                "frequency must be positive, got {frequency}"
            )));
        }
        if receiver.distance(&source) <= 0.0 {
            return Err(Error::Domain("receiver and source coincide".into()));
        }
        Ok(ATFSample {
            receiver,
            source,
            frequency,
            pressure,
        })
    }
}

/// A collection of transfer-function samples with its propagation medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ATFDataset {
    pub samples: Vec<ATFSample>,
    pub speed_of_sound: f64,
    pub label: String,
}

impl ATFDataset {
    /// Builds a dataset, rejecting empty sample lists and invalid media.
    pub fn new(samples: Vec<ATFSample>, speed_of_sound: f64, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
            return Err(Error::Dataset(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        Ok(ATFDataset {
            samples,
            speed_of_sound,
            label: label.into(),
        })
    }

    /// Distinct frequencies in ascending order.
    pub fn frequencies(&self) -> Vec<f64> {
        let set: BTreeSet<u64> = self
            .samples
            .iter()
            .map(|s| OrderedBits::from(s.frequency).0)
            .collect();
        set.into_iter().map(f64::from_bits).collect()
    }

    /// Samples at exactly the given frequency, in dataset order.
    pub fn at_frequency(&self, frequency: f64) -> Vec<ATFSample> {
        self.samples
            .iter()
            .filter(|s| s.frequency == frequency)
            .copied()
            .collect()
    }

    /// Sub-dataset holding only `frequency`.
    pub fn restrict_to(&self, frequency: f64) -> Result<ATFDataset> {
        let samples = self.at_frequency(frequency);
        if samples.is_empty() {
            return Err(Error::Coverage(format!(
                "dataset `{}` has no samples at {frequency} Hz",
                self.label
            )));
        }
        ATFDataset::new(samples, self.speed_of_sound, self.label.clone())
    }

    /// SHA-256 of the canonical file serialization.
    pub fn checksum(&self) -> String {
        crate::io::sha256_hex(crate::io::dataset_to_string(self).as_bytes())
    }
}

/// Sort key for finite positive frequencies (bit order matches numeric order).
struct OrderedBits(u64);

impl From<f64> for OrderedBits {
    fn from(f: f64) -> Self {
        OrderedBits(f.to_bits())
    }
}

/// Returns `2πf/c`.
pub fn wavenumber_of(frequency: f64, speed_of_sound: f64) -> Result<f64> {
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
        return Err(Error::Domain(format!(
            "speed of sound must be positive, got {speed_of_sound}"
        )));
    }
    Ok(2.0 * PI * frequency / speed_of_sound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    CoincidentPair,
    NonFinite,
    NonPositiveFrequency,
    InconsistentFrequencyGrid,
    InvalidMedium,
    Empty,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::CoincidentPair => "coincident pair",
            ViolationKind::NonFinite => "non-finite",
            ViolationKind::NonPositiveFrequency => "non-positive frequency",
            ViolationKind::InconsistentFrequencyGrid => "inconsistent frequency grid",
            ViolationKind::InvalidMedium => "invalid speed of sound",
            ViolationKind::Empty => "empty dataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sample {
            Some(i) => write!(f, "sample {i}: {}", self.kind.as_str()),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// Checks a dataset for coincident pairs, non-finite values and a ragged
/// frequency grid. Never fails; problems are listed in the report.
pub fn validate_dataset(dataset: &ATFDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if dataset.samples.is_empty() {
        violations.push(Violation {
            sample: None,
            kind: ViolationKind::Empty,
        });
    }
    if !(dataset.speed_of_sound > 0.0 && dataset.speed_of_sound.is_finite()) {
        violations.push(Violation {
            sample: None,
            kind: ViolationKind::InvalidMedium,
        });
    }

    type PairKey = [u64; 6];
    let mut grid: BTreeMap<PairKey, BTreeSet<u64>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let finite = s.receiver.is_finite()
            && s.source.is_finite()
            && s.frequency.is_finite()
            && s.pressure.is_finite();
        if !finite {
            violations.push(Violation {
                sample: Some(i),
                kind: ViolationKind::NonFinite,
            });
            continue;
        }
        if s.frequency <= 0.0 {
            violations.push(Violation {
                sample: Some(i),
                kind: ViolationKind::NonPositiveFrequency,
            });
        }
        if s.receiver.distance(&s.source) <= 0.0 {
            violations.push(Violation {
                sample: Some(i),
                kind: ViolationKind::CoincidentPair,
            });
        }
        let key = [
            s.receiver.x.to_bits(),
            s.receiver.y.to_bits(),
            s.receiver.z.to_bits(),
            s.source.x.to_bits(),
            s.source.y.to_bits(),
            s.source.z.to_bits(),
        ];
        grid.entry(key).or_default().insert(s.frequency.to_bits());
    }
    let mut sets = grid.values();
    if let Some(first) = sets.next() {
        if sets.any(|s| s != first) {
            violations.push(Violation {
                sample: None,
                kind: ViolationKind::InconsistentFrequencyGrid,
            });
        }
    }
    ValidationReport { violations }
}

/// Axis-aligned box, possibly flat along some (but not all) axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub min_corner: Position3,
    pub max_corner: Position3,
}

impl DomainBox {
    pub fn new(min_corner: Position3, max_corner: Position3) -> Result<Self> {
        let lo = min_corner.to_array();
        let hi = max_corner.to_array();
        if !(min_corner.is_finite() && max_corner.is_finite()) {
            return Err(Error::Domain("box corners must be finite".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Domain(
                "box min corner exceeds max corner on some axis".into(),
            ));
        }
        if lo.iter().zip(&hi).all(|(a, b)| a == b) {
            return Err(Error::Domain("box is degenerate on every axis".into()));
        }
        Ok(DomainBox {
            min_corner,
            max_corner,
        })
    }

    /// Smallest box containing all points.
    pub fn bounding(points: &[Position3]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Domain("no points to bound".into()))?;
        let (mut lo, mut hi) = (first.to_array(), first.to_array());
        for p in points {
            for (a, v) in p.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        DomainBox::new(Position3::from_array(lo), Position3::from_array(hi))
    }

    pub fn contains(&self, p: &Position3) -> bool {
        let (lo, hi, v) = (
            self.min_corner.to_array(),
            self.max_corner.to_array(),
            p.to_array(),
        );
        (0..3).all(|a| lo[a] <= v[a] && v[a] <= hi[a])
    }

    pub fn center(&self) -> Position3 {
        (self.min_corner + self.max_corner) * 0.5
    }

    pub fn half_extents(&self) -> [f64; 3] {
        ((self.max_corner - self.min_corner) * 0.5).to_array()
    }

    /// Union with another box.
    pub fn union(&self, other: &DomainBox) -> DomainBox {
        let (a, b) = (self.min_corner.to_array(), other.min_corner.to_array());
        let (c, d) = (self.max_corner.to_array(), other.max_corner.to_array());
        DomainBox {
            min_corner: Position3::from_array([a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])]),
            max_corner: Position3::from_array([c[0].max(d[0]), c[1].max(d[1]), c[2].max(d[2])]),
        }
    }
}

/// Regular receiver grid: `counts[a]` points spaced `spacing` apart from `corner`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub corner: Position3,
    pub spacing: f64,
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points with x varying fastest, then y, then z.
    pub fn points(&self) -> Vec<Position3> {
        let [nx, ny, nz] = self.counts;
        let mut out = Vec::with_capacity(self.len());
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    out.push(Position3::new(
                        self.corner.x + ix as f64 * self.spacing,
                        self.corner.y + iy as f64 * self.spacing,
                        self.corner.z + iz as f64 * self.spacing,
                    ));
                }
            }
        }
        out
    }

    /// Indices of points on the x/y perimeter of the grid (every z layer).
    pub fn edge_indices(&self) -> Vec<usize> {
        let [nx, ny, nz] = self.counts;
        let mut out = Vec::new();
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    if ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny {
                        out.push(ix + nx * (iy + ny * iz));
                    }
                }
            }
        }
        out
    }
}

/// Loudspeakers evenly spaced on a horizontal circle, starting at angle zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSpec {
    pub center: Position3,
    pub radius: f64,
    pub count: usize,
}

impl CircleSpec {
    pub fn points(&self) -> Vec<Position3> {
        (0..self.count)
            .map(|i| {
                let angle = 2.0 * PI * i as f64 / self.count as f64;
                let (s, c) = angle.sin_cos();
                self.center + Position3::new(self.radius * c, self.radius * s, 0.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomKind {
    FreeField,
    FloorReflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Geometry of a measurement campaign: receiver grid, loudspeaker circle,
/// splits, frequencies and the environment used for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub receiver_grid: GridSpec,
    pub source_circle: CircleSpec,
    pub train_source_indices: Vec<usize>,
    pub test_source_indices: Vec<usize>,
    pub train_receiver_indices: Vec<usize>,
    pub test_receiver_indices: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub room_kind: RoomKind,
    pub floor_z: f64,
    pub reflection_coeff: f64,
    pub speed_of_sound: f64,
}

impl Default for ScenarioConfig {
    /// 60 loudspeakers on a 1.5 m circle around an 8×8 grid at 0.04 m pitch
    /// centered on the origin; even loudspeakers × edge microphones for
    /// training, odd loudspeakers × all microphones for testing.
    fn default() -> Self {
        let receiver_grid = GridSpec {
            corner: Position3::new(-0.14, -0.14, 0.0),
            spacing: 0.04,
            counts: [8, 8, 1],
        };
        let train_receiver_indices = receiver_grid.edge_indices();
        let test_receiver_indices = (0..receiver_grid.len()).collect();
        ScenarioConfig {
            receiver_grid,
            source_circle: CircleSpec {
                center: Position3::ORIGIN,
                radius: 1.5,
                count: 60,
            },
            train_source_indices: (0..60).step_by(2).collect(),
            test_source_indices: (1..60).step_by(2).collect(),
            train_receiver_indices,
            test_receiver_indices,
            frequencies: (1..=20).map(|i| 100.0 * i as f64).collect(),
            room_kind: RoomKind::FreeField,
            floor_z: -1.0,
            reflection_coeff: 1.0,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let n_rx = self.receiver_grid.len();
        let n_src = self.source_circle.count;
        if !(self.receiver_grid.spacing > 0.0) {
            return Err(Error::Config("receiver grid spacing must be positive".into()));
        }
        if n_rx == 0 {
            return Err(Error::Config("receiver grid is empty".into()));
        }
        if !(self.source_circle.radius > 0.0) {
            return Err(Error::Config("source circle radius must be positive".into()));
        }
        let check = |name: &str, idx: &[usize], n: usize| -> Result<()> {
            if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!(
                    "{name} contains index {bad} but only {n} positions exist"
                )));
            }
            Ok(())
        };
        check("train_source_indices", &self.train_source_indices, n_src)?;
        check("test_source_indices", &self.test_source_indices, n_src)?;
        check("train_receiver_indices", &self.train_receiver_indices, n_rx)?;
        check("test_receiver_indices", &self.test_receiver_indices, n_rx)?;
        let train: BTreeSet<_> = self.train_source_indices.iter().collect();
        if self.test_source_indices.iter().any(|i| train.contains(i)) {
            return Err(Error::Config(
                "train and test source index sets overlap".into(),
            ));
        }
        if self.frequencies.is_empty() {
            return Err(Error::Config("no frequencies configured".into()));
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("frequency {f} is not positive")));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reflection_coeff) {
            return Err(Error::Config("reflection coefficient must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn receiver_positions(&self) -> Vec<Position3> {
        self.receiver_grid.points()
    }

    pub fn source_positions(&self) -> Vec<Position3> {
        self.source_circle.points()
    }

    /// Bounding box of the receiver grid.
    pub fn receiver_domain(&self) -> Result<DomainBox> {
        DomainBox::bounding(&self.receiver_positions())
    }

    /// Bounding box of the loudspeaker circle.
    pub fn source_domain(&self) -> Result<DomainBox> {
        let c = self.source_circle.center;
        let r = self.source_circle.radius;
        DomainBox::new(
            c - Position3::new(r, r, 0.0),
            c + Position3::new(r, r, 0.0),
        )
    }

    /// Box enclosing every source and receiver; drives input normalization.
    pub fn bounding_domain(&self) -> Result<DomainBox> {
        Ok(self.receiver_domain()?.union(&self.source_domain()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rx: Position3, sx: Position3, f: f64, p: ComplexPressure) -> ATFSample {
        ATFSample {
            receiver: rx,
            source: sx,
            frequency: f,
            pressure: p,
        }
    }

    #[test]
    fn wavenumber_examples() {
        let k = wavenumber_of(1500.0, 343.0).unwrap();
        // 2π·1500/343
        assert!((k - 27.477_486_766_091_48).abs() < 1e-12, "{k}");
        let c = 343.0;
        let k1 = wavenumber_of(c / (2.0 * PI), c).unwrap();
        assert!((k1 - 1.0).abs() < 1e-15);
        assert!(matches!(wavenumber_of(0.0, 343.0), Err(Error::Domain(_))));
        assert!(wavenumber_of(100.0, -1.0).is_err());
    }

    #[test]
    fn wavenumber_is_linear_in_frequency() {
        for f in [1.0, 37.5, 440.0, 1500.0, 19_999.0] {
            let k = wavenumber_of(f, 343.0).unwrap();
            let k2 = wavenumber_of(2.0 * f, 343.0).unwrap();
            assert_eq!(k2, 2.0 * k);
        }
    }

    #[test]
    fn validation_reports_each_violation() {
        let a = Position3::new(0.0, 0.0, 0.0);
        let b = Position3::new(1.0, 0.0, 0.0);
        let p = ComplexPressure::new(1.0, 0.0);
        let ok = ATFDataset::new(vec![sample(a, b, 100.0, p)], 343.0, "ok").unwrap();
        assert!(validate_dataset(&ok).is_ok());

        let coincident = ATFDataset::new(vec![sample(a, a, 100.0, p)], 343.0, "c").unwrap();
        let report = validate_dataset(&coincident);
        assert!(report.has(ViolationKind::CoincidentPair));
        assert_eq!(report.violations[0].to_string(), "sample 0: coincident pair");

        let nan = ATFDataset::new(
            vec![sample(a, b, 100.0, ComplexPressure::new(f64::NAN, 0.0))],
            343.0,
            "nan",
        )
        .unwrap();
        assert!(validate_dataset(&nan).has(ViolationKind::NonFinite));

        let ragged = ATFDataset::new(
            vec![
                sample(a, b, 100.0, p),
                sample(a, b, 200.0, p),
                sample(b * 2.0, a, 100.0, p),
            ],
            343.0,
            "ragged",
        )
        .unwrap();
        assert!(validate_dataset(&ragged).has(ViolationKind::InconsistentFrequencyGrid));
    }

    #[test]
    fn sample_constructor_enforces_invariants() {
        let a = Position3::ORIGIN;
        let b = Position3::new(0.0, 1.0, 0.0);
        assert!(ATFSample::new(a, a, 100.0, ComplexPressure::ZERO).is_err());
        assert!(ATFSample::new(a, b, 0.0, ComplexPressure::ZERO).is_err());
        assert!(ATFSample::new(a, b, 10.0, ComplexPressure::ZERO).is_ok());
        assert!(ATFDataset::new(vec![], 343.0, "").is_err());
    }

    #[test]
    fn default_scenario_geometry() {
        let sc = ScenarioConfig::default();
        sc.validate().unwrap();
        assert_eq!(sc.receiver_grid.len(), 64);
        assert_eq!(sc.train_receiver_indices.len(), 28);
        assert_eq!(sc.train_source_indices.len(), 30);
        assert_eq!(sc.test_source_indices.len(), 30);
        let rx = sc.receiver_positions();
        let mid = rx.iter().fold(Position3::ORIGIN, |a, p| a + *p) * (1.0 / 64.0);
        assert!(mid.norm() < 1e-12);
        let b = sc.receiver_domain().unwrap();
        assert!((b.max_corner.x - b.min_corner.x - 0.28).abs() < 1e-12);
        for s in sc.source_positions() {
            assert!((s.norm() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_points_lie_in_derived_boxes() {
        let sc = ScenarioConfig::default();
        let rbox = sc.receiver_domain().unwrap();
        let sbox = sc.source_domain().unwrap();
        let all = sc.bounding_domain().unwrap();
        for p in sc.receiver_positions() {
            assert!(rbox.contains(&p) && all.contains(&p));
        }
        for p in sc.source_positions() {
            assert!(sbox.contains(&p) && all.contains(&p));
        }
    }

    #[test]
    fn scenario_rejects_overlap_and_out_of_range() {
        let mut sc = ScenarioConfig::default();
        sc.test_source_indices.push(0);
        assert!(sc.validate().is_err());
        let mut sc = ScenarioConfig::default();
        sc.train_receiver_indices.push(64);
        assert!(sc.validate().is_err());
        let mut sc = ScenarioConfig::default();
        sc.receiver_grid.spacing = 0.0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn degenerate_boxes() {
        let p = Position3::new(1.0, 1.0, 1.0);
        assert!(DomainBox::new(p, p).is_err());
        assert!(DomainBox::new(p, Position3::ORIGIN).is_err());
        assert!(DomainBox::new(Position3::ORIGIN, Position3::new(1.0, 1.0, 0.0)).is_ok());
    }
}
