//! Physics-informed training of per-bin models.

mod adam;
mod collocation;
mod loss;

pub use adam::Adam;
pub use collocation::{sample_collocation, CollocationSet, Region};
pub use loss::{data_loss, pde_loss, pde_loss_field, pde_loss_on_axes, total_loss, LaplacianMode, LossTerms};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{ArchConfig, Model, ModelKind, ModelMeta, Normalization};
use crate::types::{wavenumber_of, ATFDataset, Part, Position3, ScenarioConfig};
use loss::{Objective, PdePlan};

/// The four ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Deep set with the Helmholtz term.
    #[default]
    Full,
    /// Deep set, data term only.
    NoPde,
    /// Plain network with the Helmholtz term.
    PlainPinn,
    /// Plain network, data term only.
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoPde, Variant::PlainPinn, Variant::Plain];

    pub fn uses_pde(&self) -> bool {
        matches!(self, Variant::Full | Variant::PlainPinn)
    }

    pub fn model_kind(&self) -> ModelKind {
        match self {
            Variant::Full | Variant::NoPde => ModelKind::DeepSet,
            Variant::PlainPinn | Variant::Plain => ModelKind::Plain,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPde => "no_pde",
            Variant::PlainPinn => "plain_pinn",
            Variant::Plain => "plain",
        }
    }

    /// Builds an untrained model of this variant's architecture.
    pub fn build(&self, arch: &ArchConfig, norm: Normalization, meta: ModelMeta, seed: u64) -> Result<Model> {
        Ok(match self.model_kind() {
            ModelKind::DeepSet => Model::DeepSet(arch.deepset(norm, meta, seed)?),
            ModelKind::Plain => Model::Plain(arch.plain(norm, meta, seed)?),
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// How the residual term is scaled inside the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualScaling {
    /// `|∇²P̂ + k²P̂|²` as is.
    Physical,
    /// `|∇²P̂/k² + P̂|²`, comparable in size to the data term at any frequency.
    #[default]
    Wavenumber,
}

/// Region that source-side collocation points are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceRegion {
    /// The circle the sources lie on.
    #[default]
    Circle,
    /// The bounding box of the sources.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub variant: Variant,
    pub steps: usize,
    pub learning_rate: f64,
    pub n_pde: usize,
    /// Data minibatch size; `None` means the full set up to 1024 samples,
    /// 256 beyond that.
    pub data_batch: Option<usize>,
    /// Collocation minibatch size; `None` uses every point each step.
    pub collocation_batch: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub laplacian_mode: LaplacianMode,
    /// Coordinates (0 = x, 1 = y, 2 = z) the Laplacian runs over. `None`
    /// picks the axes along which the collocation regions have extent.
    pub laplacian_axes: Option<Vec<usize>>,
    pub residual_scaling: ResidualScaling,
    pub source_region: SourceRegion,
    pub resample_collocation: bool,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            variant: Variant::Full,
            steps: 20_000,
            learning_rate: 1e-3,
            n_pde: 4096,
            data_batch: None,
            collocation_batch: None,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            laplacian_mode: LaplacianMode::Receiver,
            laplacian_axes: None,
            residual_scaling: ResidualScaling::Wavenumber,
            source_region: SourceRegion::Circle,
            resample_collocation: false,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.variant.uses_pde() && self.n_pde == 0 {
            return bad("n_pde must be at least 1".into());
        }
        if self.data_batch == Some(0) || self.collocation_batch == Some(0) {
            return bad("batch sizes must be at least 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0".into());
        }
        if let Some(axes) = &self.laplacian_axes {
            if axes.is_empty() || axes.iter().any(|&a| a >= 3) {
                return bad(format!("laplacian_axes must be a non-empty subset of 0..3, got {axes:?}"));
            }
        }
        if self.arch.hidden_widths.is_empty() || self.arch.hidden_widths.contains(&0) || self.arch.latent_dim == 0 {
            return bad("network widths must be positive".into());
        }
        Ok(())
    }

    /// λ as applied: zero for the data-only variants.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant.uses_pde() {
            self.lambda
        } else {
            0.0
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Regions the collocation points of one run are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDomain {
    pub receiver: Region,
    pub source: Region,
    /// Normalization applied to both positions of every pair.
    pub norm: Normalization,
}

impl TrainDomain {
    pub fn from_scenario(scenario: &ScenarioConfig, source: SourceRegion) -> Result<Self> {
        let receiver = Region::Box(scenario.receiver_domain()?);
        let source = match source {
            SourceRegion::Circle => Region::Circle(scenario.source_circle.clone()),
            SourceRegion::Box => Region::Box(scenario.source_domain()?),
        };
        Ok(TrainDomain {
            receiver,
            source,
            norm: Normalization::from_domain(&scenario.bounding_domain()?),
        })
    }

    fn axes(&self, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
        match &config.laplacian_axes {
            Some(a) => (a.clone(), a.clone()),
            None => (self.receiver.spanned_axes(), self.source.spanned_axes()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub l_data: f64,
    pub l_pde: f64,
    pub l_total: f64,
}

/// Per-step loss history of one run, in the objective's units (targets
/// divided by the model's target scale).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub records: Vec<LossRecord>,
    /// Number of point-wise Laplacian evaluations performed.
    pub laplacian_evaluations: u64,
}

impl LossReport {
    pub fn first(&self) -> Option<&LossRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,l_data,l_pde,l_total\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.step, r.l_data, r.l_pde, r.l_total);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Largest pressure magnitude among the samples, or 1 when all are zero.
pub fn target_scale_of(dataset: &ATFDataset) -> f64 {
    let m = dataset.samples.iter().map(|s| s.pressure.abs()).fold(0.0, f64::max);
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

fn batch_indices(n: usize, batch: usize, rng: &mut ChaCha8Rng, order: &mut Vec<usize>, cursor: &mut usize) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut out = Vec::with_capacity(batch);
    while out.len() < batch {
        if *cursor == 0 {
            order.shuffle(rng);
        }
        out.push(order[*cursor]);
        *cursor = (*cursor + 1) % n;
    }
    out
}

/// Optimizes `model` on the samples of its frequency bin.
///
/// The model's target scale is set from those samples before training.
/// Returns the trained model and the loss recorded before every update.
pub fn train(
    mut model: Model,
    dataset: &ATFDataset,
    domain: &TrainDomain,
    config: &TrainConfig,
) -> Result<(Model, LossReport)> {
    config.validate()?;
    if model.kind() != config.variant.model_kind() {
        return Err(Error::ModelKind {
            expected: config.variant.model_kind().as_str().into(),
            found: model.kind().as_str().into(),
        });
    }
    let meta = *model.meta();
    let bin = dataset.restrict_to(meta.frequency)?;
    let k = wavenumber_of(meta.frequency, dataset.speed_of_sound)?;
    let ts = target_scale_of(&bin);
    model.meta_mut().target_scale = ts;

    let pairs: Vec<(Position3, Position3)> = bin.samples.iter().map(|s| (s.receiver, s.source)).collect();
    let targets: Vec<f64> = bin.samples.iter().map(|s| s.pressure.part(meta.part) / ts).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let uses_pde = config.variant.uses_pde();
    let mut colloc = if uses_pde {
        Some(sample_collocation(domain.receiver.clone(), domain.source.clone(), config.n_pde, config.seed)?)
    } else {
        None
    };
    let (r_axes, s_axes) = domain.axes(config);
    let plan = uses_pde.then(|| PdePlan::new(config.laplacian_mode, &r_axes, &s_axes));
    let pde_weight = match config.residual_scaling {
        ResidualScaling::Physical => 1.0,
        ResidualScaling::Wavenumber => k.powi(-4),
    };

    let mut params = model.params().values.clone();
    let n_params = params.len();
    let mut opt = Adam::new(n_params, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let data_batch = config
        .data_batch
        .unwrap_or(if pairs.len() <= 1024 { pairs.len() } else { 256 });
    let colloc_batch = config.collocation_batch.unwrap_or(config.n_pde);
    let (mut data_order, mut data_cursor) = ((0..pairs.len()).collect::<Vec<_>>(), 0);
    let (mut col_order, mut col_cursor) = ((0..config.n_pde).collect::<Vec<_>>(), 0);
    let mut report = LossReport::default();
    let mut grad = vec![0.0; n_params];
    let mut resample_seed = config.seed;

    for step in 0..config.steps {
        let di = batch_indices(pairs.len(), data_batch, &mut rng, &mut data_order, &mut data_cursor);
        let (bp, bt): (Vec<_>, Vec<_>) = if di.len() == pairs.len() {
            (pairs.clone(), targets.clone())
        } else {
            di.iter().map(|&i| (pairs[i], targets[i])).unzip()
        };
        if config.resample_collocation && step > 0 && uses_pde {
            resample_seed = resample_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
            colloc = Some(sample_collocation(
                domain.receiver.clone(),
                domain.source.clone(),
                config.n_pde,
                resample_seed,
            )?);
        }
        let cp: Vec<(Position3, Position3)> = match &colloc {
            Some(c) => {
                let ci = batch_indices(c.len(), colloc_batch, &mut rng, &mut col_order, &mut col_cursor);
                ci.iter().map(|&i| c.points[i]).collect()
            }
            None => Vec::new(),
        };
        report.laplacian_evaluations += cp.len() as u64;

        let objective = Objective {
            model: &model,
            k,
            lambda: config.effective_lambda(),
            pde_weight,
            plan: plan.as_ref(),
        };
        grad.fill(0.0);
        let terms = objective.evaluate(&params, &bp, &bt, &cp, Some(&mut grad));
        for (name, v) in [("l_data", terms.data), ("l_pde", terms.pde), ("l_total", terms.total)] {
            if !v.is_finite() {
                return Err(Error::Diverged { step, term: name.into() });
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, term: "gradient".into() });
        }
        report.records.push(LossRecord {
            step,
            l_data: terms.data,
            l_pde: terms.pde,
            l_total: terms.total,
        });
        opt.step(&mut params, &grad);
    }
    model.params_mut().values = params;
    Ok((model, report))
}

/// Outcome of one (frequency, part) run in [`train_all_bins`].
#[derive(Debug)]
pub struct BinResult {
    pub frequency: f64,
    pub part: Part,
    pub outcome: Result<(Model, LossReport)>,
}

/// Seed for one bin, derived from the run seed so bins are independent of
/// scheduling.
pub fn bin_seed(seed: u64, frequency: f64, part: Part) -> u64 {
    let mut z = seed
        ^ frequency.to_bits().rotate_left(21)
        ^ match part {
            Part::Real => 0x5851_f42d_4c95_7f2d,
            Part::Imag => 0x1405_7b7e_f767_814f,
        };
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains one real and one imaginary model for every frequency in the
/// dataset, running up to `jobs` bins at once. Failures are reported per
/// bin; the other bins still run.
pub fn train_all_bins(
    dataset: &ATFDataset,
    scenario: &ScenarioConfig,
    config: &TrainConfig,
    jobs: usize,
) -> Result<Vec<BinResult>> {
    config.validate()?;
    let freqs = dataset.frequencies();
    if freqs.is_empty() {
        return Err(Error::Dataset("dataset has no frequency bins".into()));
    }
    let domain = TrainDomain::from_scenario(scenario, config.source_region)?;
    let tasks: Vec<(f64, Part)> = freqs
        .iter()
        .flat_map(|&f| Part::BOTH.into_iter().map(move |p| (f, p)))
        .collect();
    let run = |&(f, part): &(f64, Part)| -> BinResult {
        let seed = bin_seed(config.seed, f, part);
        let outcome = config
            .variant
            .build(&config.arch, domain.norm, ModelMeta::new(f, part), seed)
            .and_then(|m| {
                let mut c = config.clone();
                c.seed = seed;
                train(m, dataset, &domain, &c)
            });
        BinResult {
            frequency: f,
            part,
            outcome,
        }
    };
    if jobs <= 1 {
        return Ok(tasks.iter().map(run).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}
