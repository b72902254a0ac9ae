//! Kernel ridge regression baseline with a reciprocity-symmetrized
//! spherical-Bessel kernel.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::nmse;
use crate::io::{read_to_string, write_atomic};
use crate::types::{ATFSample, ComplexPressure, Position3};

pub const KRR_FORMAT: &str = "sfr-krr";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub wavenumber: f64,
    #[serde(default = "yes")]
    pub symmetrize: bool,
    #[serde(default)]
    pub regularization: f64,
}

fn yes() -> bool {
    true
}

impl KernelConfig {
    pub fn new(wavenumber: f64, regularization: f64) -> Self {
        KernelConfig {
            wavenumber,
            symmetrize: true,
            regularization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavenumber > 0.0 && self.wavenumber.is_finite()) {
            return Err(Error::Config(format!(
                "kernel wavenumber must be positive, got {}",
                self.wavenumber
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Config(format!(
                "regularization must be >= 0, got {}",
                self.regularization
            )));
        }
        Ok(())
    }
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn base_kernel(k: f64, a: &(Position3, Position3), b: &(Position3, Position3)) -> f64 {
    sinc_j0(k * a.0.distance(&b.0)) * sinc_j0(k * a.1.distance(&b.1))
}

/// Kernel between two (receiver, source) pairs.
pub fn kernel_eval(config: &KernelConfig, a: &(Position3, Position3), b: &(Position3, Position3)) -> f64 {
    let k = config.wavenumber;
    if config.symmetrize {
        0.5 * (base_kernel(k, a, b) + base_kernel(k, a, &(b.1, b.0)))
    } else {
        base_kernel(k, a, b)
    }
}

/// Dense Gram matrix over `anchors`.
pub fn gram_matrix(config: &KernelConfig, anchors: &[(Position3, Position3)]) -> DMatrix<f64> {
    let n = anchors.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(config, &anchors[i], &anchors[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRRModel {
    pub config: KernelConfig,
    pub frequency: f64,
    pub anchors: Vec<(Position3, Position3)>,
    pub dual_weights: Vec<ComplexPressure>,
    /// Condition estimate of the regularized Gram matrix (squared ratio of
    /// the extreme Cholesky pivots).
    pub gram_conditioning: f64,
    /// Diagonal shift actually added beyond the regularization.
    pub jitter: f64,
}

struct Factor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    conditioning: f64,
}

/// Cholesky factorization that also rejects numerically rank-deficient
/// matrices (a pivot below `n·ε` of the largest diagonal entry).
fn factor(a: DMatrix<f64>) -> Option<Factor> {
    let n = a.nrows();
    let max_diag = a.diagonal().iter().cloned().fold(0.0, f64::max);
    let chol = a.cholesky()?;
    let d = chol.l_dirty().diagonal();
    let lo = d.iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    let hi = d.iter().map(|v| v * v).fold(0.0, f64::max);
    if !(lo > n as f64 * f64::EPSILON * max_diag) {
        return None;
    }
    Some(Factor {
        chol,
        conditioning: hi / lo,
    })
}

/// Fits dual weights on the samples of one frequency bin.
pub fn fit(samples: &[ATFSample], config: &KernelConfig) -> Result<KRRModel> {
    config.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::Dataset("kernel fit needs at least one sample".into()))?;
    if let Some(s) = samples.iter().find(|s| s.frequency != first.frequency) {
        return Err(Error::FrequencyMismatch(first.frequency, s.frequency));
    }
    let anchors: Vec<(Position3, Position3)> = samples.iter().map(|s| (s.receiver, s.source)).collect();
    let n = anchors.len();
    let mut gram = gram_matrix(config, &anchors);
    for i in 0..n {
        gram[(i, i)] += config.regularization;
    }
    let mut jitter = 0.0;
    let f = match factor(gram.clone()) {
        Some(f) => f,
        None if config.regularization > 0.0 => {
            jitter = 1e-12 * gram.trace() / n as f64;
            for i in 0..n {
                gram[(i, i)] += jitter;
            }
            factor(gram).ok_or(Error::SingularSystem)?
        }
        None => return Err(Error::SingularSystem),
    };
    let re = f.chol.solve(&DVector::from_iterator(n, samples.iter().map(|s| s.pressure.re)));
    let im = f.chol.solve(&DVector::from_iterator(n, samples.iter().map(|s| s.pressure.im)));
    let dual_weights: Vec<ComplexPressure> = re.iter().zip(im.iter()).map(|(&a, &b)| ComplexPressure::new(a, b)).collect();
    if dual_weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(KRRModel {
        config: *config,
        frequency: first.frequency,
        anchors,
        dual_weights,
        gram_conditioning: f.conditioning,
        jitter,
    })
}

impl KRRModel {
    pub fn predict(&self, r: &Position3, s: &Position3) -> ComplexPressure {
        let q = (*r, *s);
        let mut out = ComplexPressure::ZERO;
        for (a, w) in self.anchors.iter().zip(&self.dual_weights) {
            out = out + w.scale(kernel_eval(&self.config, &q, a));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("model serializes");
        v.as_object_mut()
            .expect("object")
            .insert("format".into(), KRR_FORMAT.into());
        serde_json::to_string(&v).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("kernel model: {e}")))?;
        if v.get("format").and_then(|f| f.as_str()) != Some(KRR_FORMAT) {
            return Err(Error::Schema("not a kernel model file".into()));
        }
        let m: KRRModel =
            serde_json::from_value(v).map_err(|e| Error::Schema(format!("kernel model: {e}")))?;
        if m.anchors.len() != m.dual_weights.len() {
            return Err(Error::Schema(format!(
                "{} anchors but {} dual weights",
                m.anchors.len(),
                m.dual_weights.len()
            )));
        }
        m.config.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}

/// Picks the candidate regularization with the lowest held-out NMSE on a
/// seeded 80/20 split. Candidates whose fit fails are skipped.
pub fn select_regularization(
    samples: &[ATFSample],
    config: &KernelConfig,
    candidates: &[f64],
    seed: u64,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Config("regularization grid is empty".into()));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    if samples.len() < 5 {
        return Err(Error::Dataset("need at least 5 samples to hold out 20%".into()));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = (samples.len() / 5).max(1);
    let (hold, fit_idx) = idx.split_at(n_hold);
    let train: Vec<ATFSample> = fit_idx.iter().map(|&i| samples[i]).collect();
    let held: Vec<ATFSample> = hold.iter().map(|&i| samples[i]).collect();
    let truths: Vec<ComplexPressure> = held.iter().map(|s| s.pressure).collect();

    let mut best: Option<(f64, f64)> = None;
    for &sigma in candidates {
        let cfg = KernelConfig {
            regularization: sigma,
            ..*config
        };
        let Ok(model) = fit(&train, &cfg) else { continue };
        let preds: Vec<ComplexPressure> = held.iter().map(|s| model.predict(&s.receiver, &s.source)).collect();
        let Ok(score) = nmse(&preds, &truths) else { continue };
        if best.map_or(true, |(b, _)| score < b) {
            best = Some((score, sigma));
        }
    }
    best.map(|(_, s)| s).ok_or(Error::SingularSystem)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::Rng;

    use super::*;

    fn green(k: f64, r: &Position3, s: &Position3) -> ComplexPressure {
        let d = r.distance(s);
        ComplexPressure::from_polar(1.0 / (4.0 * PI * d), -k * d)
    }

    /// Receivers spread over a 0.6 m square, sources on a 1.5 m circle.
    fn anchor_set(n: usize, k: f64, seed: u64) -> Vec<ATFSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = Position3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
                let a = rng.gen_range(0.0..2.0 * PI);
                let s = Position3::new(1.5 * a.cos(), 1.5 * a.sin(), 0.0);
                ATFSample::new(r, s, 300.0, green(k, &r, &s)).unwrap()
            })
            .collect()
    }

    #[test]
    fn kernel_values() {
        let cfg = KernelConfig::new(3.0, 0.0);
        let a = (Position3::new(0.1, 0.2, 0.0), Position3::new(1.0, -0.5, 0.3));
        assert_eq!(kernel_eval(&cfg, &a, &a), 0.5 * (1.0 + base_kernel(3.0, &a, &(a.1, a.0))));
        let p = (Position3::ORIGIN, Position3::ORIGIN);
        assert_eq!(kernel_eval(&cfg, &p, &p), 1.0);
        // k·|r - r'| = π with the sources coincident.
        let raw = KernelConfig {
            symmetrize: false,
            ..cfg
        };
        let b = (a.0 + Position3::new(PI / 3.0, 0.0, 0.0), a.1);
        assert!(kernel_eval(&raw, &a, &b).abs() < 1e-16);
        assert!((sinc_j0(PI) - 0.0).abs() < 1e-16);
        assert!((sinc_j0(1e-5) - (1e-5f64).sin() / 1e-5).abs() <= f64::EPSILON);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pt = || Position3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for _ in 0..100 {
            let (x, y) = ((pt(), pt()), (pt(), pt()));
            assert_eq!(kernel_eval(&cfg, &x, &y), kernel_eval(&cfg, &y, &x));
            assert_eq!(kernel_eval(&raw, &x, &y), kernel_eval(&raw, &y, &x));
        }
    }

    #[test]
    fn gram_is_symmetric_and_swap_invariant_per_anchor() {
        let cfg = KernelConfig::new(5.0, 0.0);
        let s = anchor_set(12, 5.0, 2);
        let mut anchors: Vec<_> = s.iter().map(|x| (x.receiver, x.source)).collect();
        let g = gram_matrix(&cfg, &anchors);
        assert_eq!(g, g.transpose());
        anchors[3] = (anchors[3].1, anchors[3].0);
        let g2 = gram_matrix(&cfg, &anchors);
        assert!((g - g2).abs().max() <= 1e-15);
    }

    #[test]
    fn interpolates_anchor_targets_without_regularization() {
        let k = wavenumber(300.0);
        let set = anchor_set(50, k, 3);
        let m = fit(&set, &KernelConfig::new(k, 0.0)).unwrap();
        assert_eq!(m.jitter, 0.0);
        assert!(m.gram_conditioning.is_finite() && m.gram_conditioning >= 1.0);
        for s in &set {
            let p = m.predict(&s.receiver, &s.source);
            assert!((p - s.pressure).abs() <= 1e-6 * s.pressure.abs(), "{p:?} vs {:?}", s.pressure);
        }
    }

    fn wavenumber(f: f64) -> f64 {
        2.0 * PI * f / 343.0
    }

    #[test]
    fn predictions_are_reciprocal() {
        let k = wavenumber(300.0);
        let m = fit(&anchor_set(30, k, 4), &KernelConfig::new(k, 1e-6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let r = Position3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.1);
            let s = Position3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), -0.2);
            assert_eq!(m.predict(&r, &s), m.predict(&s, &r));
        }
    }

    #[test]
    fn duplicate_anchors_without_regularization_are_singular() {
        let k = wavenumber(300.0);
        let mut set = anchor_set(10, k, 5);
        set.push(set[4]);
        assert!(matches!(fit(&set, &KernelConfig::new(k, 0.0)), Err(Error::SingularSystem)));
        assert!(fit(&set, &KernelConfig::new(k, 1e-3)).is_ok());
        let msg = Error::SingularSystem.to_string();
        assert!(msg.contains("sigma > 0"));
    }

    #[test]
    fn heavy_regularization_shrinks_to_zero() {
        let k = wavenumber(300.0);
        let set = anchor_set(20, k, 6);
        let m = fit(&set, &KernelConfig::new(k, 1e12)).unwrap();
        let p = m.predict(&set[0].receiver, &set[0].source);
        assert!(p.abs() <= 1e-9 * set[0].pressure.abs());
        let zero = KRRModel {
            dual_weights: vec![ComplexPressure::ZERO; m.anchors.len()],
            ..m
        };
        assert_eq!(zero.predict(&set[1].receiver, &set[1].source), ComplexPressure::ZERO);
    }

    #[test]
    fn fit_is_linear_in_targets() {
        let k = wavenumber(300.0);
        let a = anchor_set(25, k, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b: Vec<ATFSample> = a
            .iter()
            .map(|s| ATFSample {
                pressure: ComplexPressure::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ..*s
            })
            .collect();
        let sum: Vec<ATFSample> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ATFSample {
                pressure: x.pressure + y.pressure,
                ..*x
            })
            .collect();
        let cfg = KernelConfig::new(k, 1e-4);
        let (ma, mb, ms) = (fit(&a, &cfg).unwrap(), fit(&b, &cfg).unwrap(), fit(&sum, &cfg).unwrap());
        let q = (Position3::new(0.05, -0.1, 0.0), Position3::new(1.2, 0.4, 0.0));
        let lhs = ms.predict(&q.0, &q.1);
        let rhs = ma.predict(&q.0, &q.1) + mb.predict(&q.0, &q.1);
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(lhs.abs()));
    }

    #[test]
    fn rejects_invalid_requests() {
        assert!(fit(&[], &KernelConfig::new(1.0, 0.0)).is_err());
        let set = anchor_set(3, 1.0, 1);
        assert!(fit(&set, &KernelConfig::new(0.0, 0.0)).is_err());
        assert!(fit(&set, &KernelConfig::new(1.0, -1.0)).is_err());
        let mut mixed = set.clone();
        mixed[1].frequency = 400.0;
        assert!(matches!(fit(&mixed, &KernelConfig::new(1.0, 0.1)), Err(Error::FrequencyMismatch(..))));
    }

    #[test]
    fn regularization_selection() {
        let k = wavenumber(300.0);
        let set = anchor_set(60, k, 10);
        let cfg = KernelConfig::new(k, 0.0);
        assert_eq!(select_regularization(&set, &cfg, &[0.3], 1).unwrap(), 0.3);
        let grid = [1e-10, 1e-6, 1e-2, 1.0];
        let a = select_regularization(&set, &cfg, &grid, 4).unwrap();
        assert_eq!(a, select_regularization(&set, &cfg, &grid, 4).unwrap());
        assert_eq!(a, 1e-10);
        assert!(select_regularization(&set, &cfg, &[], 4).is_err());
    }

    #[test]
    fn json_round_trip() {
        let k = wavenumber(300.0);
        let m = fit(&anchor_set(8, k, 11), &KernelConfig::new(k, 1e-3)).unwrap();
        let back = KRRModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(KRRModel::from_json("{}").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        assert_eq!(KRRModel::load(&p).unwrap(), m);
    }
}
