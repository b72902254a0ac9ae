//! Scoring, ablation and comparison tables, and heatmap export.

mod heatmap;
mod metric;
mod predict;
mod table;

pub use heatmap::{default_heatmap_grid, export_heatmap, Heatmap, HEATMAP_POINTS};
pub use metric::{format_db, nmse, parse_db, NEG_INF_SENTINEL};
pub use predict::{KrrBank, OraclePredictor, PinnBank, Predictor, ZeroPredictor, DEFAULT_SIGMA_GRID};
pub use table::{config_hash, NMSERow, NMSETable, TABLE_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::oracle::synth_dataset;
use crate::train::{train_all_bins, TrainConfig, Variant};
use crate::types::{ATFDataset, ComplexPressure, Position3, ScenarioConfig, Split};

/// A labelled predictor for comparison tables.
pub struct Method<'a> {
    pub method: &'a str,
    pub variant: &'a str,
    pub predictor: &'a dyn Predictor,
}

fn score(predictor: &dyn Predictor, dataset: &ATFDataset, frequency: f64) -> Result<(f64, usize)> {
    let samples = dataset.at_frequency(frequency);
    let preds: Vec<ComplexPressure> = samples
        .iter()
        .map(|s| predictor.predict(&s.receiver, &s.source, frequency))
        .collect::<Result<_>>()?;
    let truths: Vec<ComplexPressure> = samples.iter().map(|s| s.pressure).collect();
    Ok((nmse(&preds, &truths)?, samples.len()))
}

/// Scores every method at every frequency of `dataset`. Rows are grouped by
/// frequency, ascending, with methods in the order given.
pub fn compare_methods(dataset: &ATFDataset, methods: &[Method<'_>]) -> Result<NMSETable> {
    let freqs = dataset.frequencies();
    if freqs.is_empty() {
        return Err(Error::Dataset("test set is empty".into()));
    }
    for m in methods {
        if let Some(f) = freqs.iter().find(|&&f| !m.predictor.covers(f)) {
            return Err(Error::Coverage(format!(
                "{}/{} has no model at {f} Hz",
                m.method, m.variant
            )));
        }
    }
    let jobs: Vec<(f64, &Method)> = freqs
        .iter()
        .flat_map(|&f| methods.iter().map(move |m| (f, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(f, m)| {
            let (db, n) = score(m.predictor, dataset, f)?;
            Ok(NMSERow {
                frequency: f,
                method: m.method.to_string(),
                variant: m.variant.to_string(),
                nmse_db: db,
                n_pairs: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NMSETable {
        rows,
        dataset_checksum: dataset.checksum(),
        config_hash: String::new(),
    })
}

/// One NMSE row per frequency of `dataset`.
pub fn evaluate_method(
    predictor: &dyn Predictor,
    dataset: &ATFDataset,
    method: &str,
    variant: &str,
) -> Result<NMSETable> {
    compare_methods(
        dataset,
        &[Method {
            method,
            variant,
            predictor,
        }],
    )
}

/// Deterministic receiver/source pairs spread over the scenario's regions.
pub fn probe_pairs(scenario: &ScenarioConfig, n: usize, seed: u64) -> Result<Vec<(Position3, Position3)>> {
    let rd = scenario.receiver_domain()?;
    let c = &scenario.source_circle;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (rd.min_corner.to_array(), rd.max_corner.to_array());
    Ok((0..n)
        .map(|_| {
            let r: [f64; 3] = std::array::from_fn(|a| lo[a] + (hi[a] - lo[a]) * rng.gen::<f64>());
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = c.center + Position3::new(c.radius * t.cos(), c.radius * t.sin(), 0.0);
            (Position3::from_array(r), s)
        })
        .collect())
}

/// True when swapping source and receiver leaves every output bit unchanged.
pub fn swap_invariance_probe(model: &Model, pairs: &[(Position3, Position3)]) -> bool {
    let swapped: Vec<(Position3, Position3)> = pairs.iter().map(|&(r, s)| (s, r)).collect();
    let a = model.forward_batch(pairs);
    let b = model.forward_batch(&swapped);
    a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Method label used for trained networks in tables.
pub const PINN_METHOD: &str = "pinn";
/// Method label used for the kernel baseline in tables.
pub const KRR_METHOD: &str = "krr";

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub bank: PinnBank,
    /// Every model of the variant passed the swap probe.
    pub swap_invariant: bool,
    pub laplacian_evaluations: u64,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub table: NMSETable,
    pub outcomes: Vec<VariantOutcome>,
}

impl Ablation {
    pub fn outcome(&self, variant: Variant) -> Option<&VariantOutcome> {
        self.outcomes.iter().find(|o| o.variant == variant)
    }
}

/// Trains every model variant on `train` with the same seeds and scores
/// each on `test`.
pub fn run_ablation_on(
    train: &ATFDataset,
    test: &ATFDataset,
    scenario: &ScenarioConfig,
    base: &TrainConfig,
    variants: &[Variant],
    jobs: usize,
) -> Result<Ablation> {
    let probes = probe_pairs(scenario, 256, base.seed)?;
    let mut table = NMSETable {
        config_hash: config_hash(&(base, scenario)),
        ..Default::default()
    };
    let mut outcomes = Vec::new();
    for &variant in variants {
        let annotate = |e: Error| Error::Variant {
            variant: variant.as_str().into(),
            source: Box::new(e),
        };
        let config = TrainConfig {
            variant,
            ..base.clone()
        };
        let mut models = Vec::new();
        let mut evaluations = 0;
        for bin in train_all_bins(train, scenario, &config, jobs).map_err(annotate)? {
            let (model, report) = bin.outcome.map_err(annotate)?;
            evaluations += report.laplacian_evaluations;
            models.push(model);
        }
        let bank = PinnBank::from_models(models).map_err(annotate)?;
        let scored = evaluate_method(&bank, test, PINN_METHOD, variant.as_str()).map_err(annotate)?;
        table.merge(scored)?;
        let swap_invariant = bank.models().all(|m| swap_invariance_probe(m, &probes));
        outcomes.push(VariantOutcome {
            swap_invariant,
            variant,
            bank,
            laplacian_evaluations: evaluations,
        });
    }
    table.sort();
    Ok(Ablation { table, outcomes })
}

/// Synthesizes the scenario's splits and runs all four variants.
pub fn run_ablation(scenario: &ScenarioConfig, base: &TrainConfig, jobs: usize) -> Result<Ablation> {
    let train = synth_dataset(scenario, Split::Train)?;
    let test = synth_dataset(scenario, Split::Test)?;
    run_ablation_on(&train, &test, scenario, base, &Variant::ALL, jobs)
}

#[cfg(test)]
mod tests;
