use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krr::{self, KRRModel, KernelConfig};
use crate::model::{predict_complex, Model};
use crate::oracle::Oracle;
use crate::types::{wavenumber_of, ATFDataset, ComplexPressure, Part, Position3};

/// Anything that maps a source-receiver pair at a frequency to a pressure.
pub trait Predictor: Sync {
    fn predict(&self, r: &Position3, s: &Position3, frequency: f64) -> Result<ComplexPressure>;

    /// Whether `frequency` can be predicted at all.
    fn covers(&self, _frequency: f64) -> bool {
        true
    }
}

impl<F> Predictor for F
where
    F: Fn(&Position3, &Position3, f64) -> Result<ComplexPressure> + Sync,
{
    fn predict(&self, r: &Position3, s: &Position3, frequency: f64) -> Result<ComplexPressure> {
        self(r, s, frequency)
    }
}

/// Predicts zero everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, _: &Position3, _: &Position3, _: f64) -> Result<ComplexPressure> {
        Ok(ComplexPressure::ZERO)
    }
}

/// Closed-form ground truth.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor {
    pub oracle: Oracle,
    pub speed_of_sound: f64,
}

impl Predictor for OraclePredictor {
    fn predict(&self, r: &Position3, s: &Position3, frequency: f64) -> Result<ComplexPressure> {
        self.oracle.evaluate(r, s, wavenumber_of(frequency, self.speed_of_sound)?)
    }
}

fn key(f: f64) -> u64 {
    f.to_bits()
}

/// Trained networks paired into complex predictors, one pair per frequency.
#[derive(Debug, Clone, Default)]
pub struct PinnBank {
    bins: BTreeMap<u64, (Model, Model)>,
}

impl PinnBank {
    /// Pairs real and imaginary models by frequency. Every frequency needs
    /// exactly one model of each part.
    pub fn from_models(models: impl IntoIterator<Item = Model>) -> Result<Self> {
        let mut re: BTreeMap<u64, Model> = BTreeMap::new();
        let mut im: BTreeMap<u64, Model> = BTreeMap::new();
        for m in models {
            let (f, part) = (m.meta().frequency, m.meta().part);
            let slot = match part {
                Part::Real => &mut re,
                Part::Imag => &mut im,
            };
            if slot.insert(key(f), m).is_some() {
                return Err(Error::Dataset(format!("two {part} models at {f} Hz")));
            }
        }
        let mut bins = BTreeMap::new();
        for (k, m_re) in re {
            let f = f64::from_bits(k);
            let m_im = im
                .remove(&k)
                .ok_or_else(|| Error::Coverage(format!("no imag model at {f} Hz")))?;
            if m_re.kind() != m_im.kind() {
                return Err(Error::ModelKind {
                    expected: m_re.kind().as_str().into(),
                    found: m_im.kind().as_str().into(),
                });
            }
            bins.insert(k, (m_re, m_im));
        }
        if let Some(&k) = im.keys().next() {
            return Err(Error::Coverage(format!("no real model at {} Hz", f64::from_bits(k))));
        }
        Ok(PinnBank { bins })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.keys().map(|&k| f64::from_bits(k)).collect()
    }

    pub fn get(&self, frequency: f64) -> Option<&(Model, Model)> {
        self.bins.get(&key(frequency))
    }

    pub fn models(&self) -> impl Iterator<Item = &Model> {
        self.bins.values().flat_map(|(a, b)| [a, b])
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

impl Predictor for PinnBank {
    fn predict(&self, r: &Position3, s: &Position3, frequency: f64) -> Result<ComplexPressure> {
        let (re, im) = self
            .get(frequency)
            .ok_or_else(|| Error::Coverage(format!("no model at {frequency} Hz")))?;
        predict_complex(re, im, r, s)
    }

    fn covers(&self, frequency: f64) -> bool {
        self.bins.contains_key(&key(frequency))
    }
}

/// Default regularization grid searched when fitting the baseline.
pub const DEFAULT_SIGMA_GRID: [f64; 6] = [1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1];

/// Kernel ridge regressors, one per frequency.
#[derive(Debug, Clone, Default)]
pub struct KrrBank {
    bins: BTreeMap<u64, KRRModel>,
}

impl KrrBank {
    pub fn from_models(models: impl IntoIterator<Item = KRRModel>) -> Result<Self> {
        let mut bins = BTreeMap::new();
        for m in models {
            let f = m.frequency;
            if bins.insert(key(f), m).is_some() {
                return Err(Error::Dataset(format!("two baseline models at {f} Hz")));
            }
        }
        Ok(KrrBank { bins })
    }

    /// Fits every frequency of `train`, picking σ from `sigmas` on a seeded
    /// hold-out split. Bins run in parallel on at most `jobs` threads.
    pub fn fit(train: &ATFDataset, sigmas: &[f64], seed: u64, jobs: usize) -> Result<Self> {
        let freqs = train.frequencies();
        if freqs.is_empty() {
            return Err(Error::Dataset("dataset has no frequency bins".into()));
        }
        let run = |&f: &f64| -> Result<KRRModel> {
            let samples = train.at_frequency(f);
            let k = wavenumber_of(f, train.speed_of_sound)?;
            let base = KernelConfig::new(k, sigmas.first().copied().unwrap_or(0.0));
            let sigma = krr::select_regularization(&samples, &base, sigmas, seed)?;
            krr::fit(&samples, &KernelConfig::new(k, sigma))
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let fitted: Vec<Result<KRRModel>> = pool.install(|| freqs.par_iter().map(run).collect());
        Self::from_models(fitted.into_iter().collect::<Result<Vec<_>>>()?)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.keys().map(|&k| f64::from_bits(k)).collect()
    }

    pub fn get(&self, frequency: f64) -> Option<&KRRModel> {
        self.bins.get(&key(frequency))
    }

    pub fn models(&self) -> impl Iterator<Item = &KRRModel> {
        self.bins.values()
    }
}

impl Predictor for KrrBank {
    fn predict(&self, r: &Position3, s: &Position3, frequency: f64) -> Result<ComplexPressure> {
        self.get(frequency)
            .map(|m| m.predict(r, s))
            .ok_or_else(|| Error::Coverage(format!("no baseline model at {frequency} Hz")))
    }

    fn covers(&self, frequency: f64) -> bool {
        self.bins.contains_key(&key(frequency))
    }
}
