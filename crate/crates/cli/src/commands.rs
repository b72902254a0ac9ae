use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sfr_core::eval::{
    compare_methods, default_heatmap_grid, export_heatmap, run_ablation, KrrBank, Method, OraclePredictor,
    PinnBank, DEFAULT_SIGMA_GRID, KRR_METHOD, PINN_METHOD,
};
use sfr_core::io::{dataset_to_string, load_dataset, read_to_string};
use sfr_core::krr::KRRModel;
use sfr_core::model::{load_model, model_to_string};
use sfr_core::oracle::{ingest_rir_directory, synth_dataset, IngestOptions, Oracle};
use sfr_core::train::{train_all_bins, LaplacianMode, TrainConfig};
use sfr_core::{ATFDataset, ATFSample, Error, GridSpec, ScenarioConfig};

use crate::error::{CliError, EXIT_DIVERGED};
use crate::manifest::RunManifest;
use crate::{
    AblateArgs, BaselineArgs, Cli, Command, EvalArgs, HeatmapArgs, IngestArgs, ModelSource, PredictArgs, SynthArgs,
    TrainArgs,
};

type Res<T = ()> = Result<T, CliError>;

pub fn dispatch(cli: &Cli, m: &mut RunManifest) -> Res {
    if cli.jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a, m),
        Command::Ingest(a) => ingest(cli, a, m),
        Command::Train(a) => train(cli, a, m),
        Command::Predict(a) => predict(cli, a, m),
        Command::Eval(a) => eval(cli, a, m),
        Command::Ablate(a) => ablate(cli, a, m),
        Command::Baseline(a) => baseline(cli, a, m),
        Command::Heatmap(a) => heatmap(cli, a, m),
    }
}

fn out_path(cli: &Cli) -> Res<&Path> {
    cli.out.as_deref().ok_or_else(|| CliError::config("--out is required"))
}

/// Output file plus its `<file>.manifest.json`.
fn file_output(cli: &Cli, m: &mut RunManifest) -> Res<PathBuf> {
    let out = out_path(cli)?.to_path_buf();
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    m.path = Some(out.with_file_name(name));
    Ok(out)
}

/// Output directory, created if needed, holding `manifest.json`.
fn dir_output(cli: &Cli, m: &mut RunManifest) -> Res<PathBuf> {
    let out = out_path(cli)?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    m.path = Some(out.join("manifest.json"));
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str, m: &mut RunManifest) -> Res<T> {
    m.input(path)?;
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{what} {}: {e}", path.display())))
}

fn load_scenario(path: Option<&Path>, m: &mut RunManifest) -> Res<ScenarioConfig> {
    let sc = match path {
        Some(p) => read_json(p, "scenario", m)?,
        None => ScenarioConfig::default(),
    };
    sc.validate()?;
    Ok(sc)
}

fn load_train_config(cli: &Cli, m: &mut RunManifest) -> Res<TrainConfig> {
    let mut c: TrainConfig = match &cli.config {
        Some(p) => read_json(p, "train config", m)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    Ok(c)
}

fn dataset_input(path: &Path, m: &mut RunManifest) -> Res<ATFDataset> {
    m.input(path)?;
    Ok(load_dataset(path)?)
}

fn synth(cli: &Cli, a: &SynthArgs, m: &mut RunManifest) -> Res {
    let out = file_output(cli, m)?;
    let path = a.scenario.as_deref().or(cli.config.as_deref());
    let mut sc = load_scenario(path, m)?;
    if let Some(f) = &a.frequencies {
        sc.frequencies = f.clone();
        sc.validate()?;
    }
    m.set_config(&(&sc, a.split));
    let ds = synth_dataset(&sc, a.split)?;
    m.detail("samples", ds.samples.len());
    m.detail("dataset_sha256", ds.checksum());
    m.output(&out, dataset_to_string(&ds).as_bytes())
}

fn ingest(cli: &Cli, a: &IngestArgs, m: &mut RunManifest) -> Res {
    let out = file_output(cli, m)?;
    let mut opts: IngestOptions = match &cli.config {
        Some(p) => read_json(p, "ingest options", m)?,
        None => IngestOptions::default(),
    };
    if let Some(f) = &a.frequencies {
        opts.frequencies = f.clone();
    }
    if let Some(t) = a.truncation {
        opts.truncation_s = t;
    }
    if let Some(c) = a.speed_of_sound {
        opts.speed_of_sound = c;
    }
    m.set_config(&opts);
    m.input(&a.manifest)?;
    let ds = ingest_rir_directory(&a.manifest, &opts)?;
    m.detail("samples", ds.samples.len());
    m.output(&out, dataset_to_string(&ds).as_bytes())
}

pub fn model_file_name(frequency: f64, part: sfr_core::Part) -> String {
    format!("model_{frequency}hz_{}.json", part.as_str())
}

fn train(cli: &Cli, a: &TrainArgs, m: &mut RunManifest) -> Res {
    let out = dir_output(cli, m)?;
    let mut config = load_train_config(cli, m)?;
    if let Some(v) = a.variant {
        config.variant = v;
    }
    if let Some(s) = a.steps {
        config.steps = s;
    }
    if let Some(l) = a.lambda {
        config.lambda = l;
    }
    if let Some(lr) = a.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(n) = a.n_pde {
        config.n_pde = n;
    }
    if let Some(mode) = &a.laplacian_mode {
        config.laplacian_mode = serde_json::from_value::<LaplacianMode>(serde_json::Value::String(mode.clone()))
            .map_err(|_| CliError::config(format!("unknown laplacian mode `{mode}`")))?;
    }
    config.validate()?;
    let scenario = load_scenario(a.scenario.as_deref(), m)?;
    m.seed = Some(config.seed);
    m.set_config(&(&config, &scenario));
    let dataset = dataset_input(&a.dataset, m)?;

    let mut first_error: Option<CliError> = None;
    let mut evaluations = 0u64;
    for bin in train_all_bins(&dataset, &scenario, &config, cli.jobs)? {
        let stem = model_file_name(bin.frequency, bin.part);
        match bin.outcome {
            Ok((model, report)) => {
                evaluations += report.laplacian_evaluations;
                m.output(&out.join(&stem), model_to_string(&model).as_bytes())?;
                let loss = stem.replacen("model_", "loss_", 1).replace(".json", ".csv");
                m.output(&out.join(loss), report.to_csv().as_bytes())?;
            }
            Err(e) => {
                m.failures.push(format!("{} Hz {}: {e}", bin.frequency, bin.part));
                let e = CliError::from(e);
                let replace = match &first_error {
                    None => true,
                    Some(prev) => prev.code != EXIT_DIVERGED && e.code == EXIT_DIVERGED,
                };
                if replace {
                    first_error = Some(e);
                }
            }
        }
    }
    m.detail("laplacian_evaluations", evaluations);
    match first_error {
        None => Ok(()),
        Some(e) => Err(CliError {
            code: e.code,
            message: format!("{} bin(s) failed; first: {}", m.failures.len(), e.message),
        }),
    }
}

fn list_files(dir: &Path, prefix: &str) -> Res<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| CliError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(prefix) && name.ends_with(".json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_pinn_bank(dir: &Path, m: &mut RunManifest) -> Res<PinnBank> {
    let files = list_files(dir, "model_")?;
    if files.is_empty() {
        return Err(Error::Coverage(format!("no model files in {}", dir.display())).into());
    }
    let mut models = Vec::new();
    for f in files {
        m.input(&f)?;
        models.push(load_model(&f)?);
    }
    Ok(PinnBank::from_models(models)?)
}

fn load_krr_bank(dir: &Path, m: &mut RunManifest) -> Res<KrrBank> {
    let files = list_files(dir, "krr_")?;
    if files.is_empty() {
        return Err(Error::Coverage(format!("no baseline files in {}", dir.display())).into());
    }
    let mut models = Vec::new();
    for f in files {
        m.input(&f)?;
        models.push(KRRModel::load(&f)?);
    }
    Ok(KrrBank::from_models(models)?)
}

struct Loaded {
    pinn: Option<PinnBank>,
    krr: Option<KrrBank>,
    oracle: Option<OraclePredictor>,
}

impl Loaded {
    fn methods<'a>(&'a self, variant: &'a str) -> Vec<Method<'a>> {
        let mut out = Vec::new();
        if let Some(p) = &self.pinn {
            out.push(Method { method: PINN_METHOD, variant, predictor: p });
        }
        if let Some(k) = &self.krr {
            out.push(Method { method: KRR_METHOD, variant: "baseline", predictor: k });
        }
        if let Some(o) = &self.oracle {
            out.push(Method { method: "oracle", variant: "exact", predictor: o });
        }
        out
    }
}

fn load_sources(src: &ModelSource, m: &mut RunManifest) -> Res<Loaded> {
    let loaded = Loaded {
        pinn: src.models.as_deref().map(|d| load_pinn_bank(d, m)).transpose()?,
        krr: src.krr.as_deref().map(|d| load_krr_bank(d, m)).transpose()?,
        oracle: if src.oracle {
            let sc = load_scenario(src.scenario.as_deref(), m)?;
            Some(OraclePredictor {
                oracle: Oracle::from_scenario(&sc),
                speed_of_sound: sc.speed_of_sound,
            })
        } else {
            None
        },
    };
    if loaded.pinn.is_none() && loaded.krr.is_none() && loaded.oracle.is_none() {
        return Err(CliError::config("give --models, --krr or --oracle"));
    }
    Ok(loaded)
}

fn predict(cli: &Cli, a: &PredictArgs, m: &mut RunManifest) -> Res {
    let out = file_output(cli, m)?;
    let ds = dataset_input(&a.dataset, m)?;
    let loaded = load_sources(&a.source, m)?;
    let methods = loaded.methods("full");
    if methods.len() != 1 {
        return Err(CliError::config("predict takes exactly one of --models, --krr, --oracle"));
    }
    let p = methods[0].predictor;
    if let Some(f) = ds.frequencies().into_iter().find(|&f| !p.covers(f)) {
        return Err(Error::Coverage(format!("no model at {f} Hz")).into());
    }
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let v = p.predict(&s.receiver, &s.source, s.frequency)?;
            ATFSample::new(s.receiver, s.source, s.frequency, v)
        })
        .collect::<sfr_core::Result<Vec<_>>>()?;
    let pred = ATFDataset::new(samples, ds.speed_of_sound, format!("{} predicted", methods[0].method))?;
    m.output(&out, dataset_to_string(&pred).as_bytes())
}

fn eval(cli: &Cli, a: &EvalArgs, m: &mut RunManifest) -> Res {
    let out = file_output(cli, m)?;
    let ds = dataset_input(&a.dataset, m)?;
    let loaded = load_sources(&a.source, m)?;
    let mut table = compare_methods(&ds, &loaded.methods(&a.variant))?;
    table.config_hash = sfr_core::eval::config_hash(&a.variant);
    m.set_config(&a.variant);
    m.detail("dataset_sha256", &table.dataset_checksum);
    m.output(&out, table.to_csv().as_bytes())
}

#[derive(Debug, Clone, Serialize)]
struct ProbeResult {
    variant: String,
    swap_invariant: bool,
    laplacian_evaluations: u64,
}

fn ablate(cli: &Cli, a: &AblateArgs, m: &mut RunManifest) -> Res {
    let out = dir_output(cli, m)?;
    let mut config = load_train_config(cli, m)?;
    if let Some(s) = a.steps {
        config.steps = s;
    }
    config.validate()?;
    let mut scenario = load_scenario(a.scenario.as_deref(), m)?;
    if let Some(f) = &a.frequencies {
        scenario.frequencies = f.clone();
        scenario.validate()?;
    }
    m.seed = Some(config.seed);
    m.set_config(&(&config, &scenario));
    let ablation = run_ablation(&scenario, &config, cli.jobs)?;
    let probes: Vec<ProbeResult> = ablation
        .outcomes
        .iter()
        .map(|o| ProbeResult {
            variant: o.variant.as_str().into(),
            swap_invariant: o.swap_invariant,
            laplacian_evaluations: o.laplacian_evaluations,
        })
        .collect();
    m.detail("variants", &probes);
    m.output(&out.join("ablation.csv"), ablation.table.to_csv().as_bytes())?;
    let probe_json = serde_json::to_string_pretty(&probes).expect("probes serialize");
    m.output(&out.join("swap_probe.json"), probe_json.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BaselineConfig {
    sigmas: Vec<f64>,
    seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            sigmas: DEFAULT_SIGMA_GRID.to_vec(),
            seed: 0,
        }
    }
}

fn baseline(cli: &Cli, a: &BaselineArgs, m: &mut RunManifest) -> Res {
    let out = dir_output(cli, m)?;
    let mut config: BaselineConfig = match &cli.config {
        Some(p) => read_json(p, "baseline config", m)?,
        None => BaselineConfig::default(),
    };
    if let Some(s) = &a.sigma {
        config.sigmas = s.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if config.sigmas.is_empty() || config.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(CliError::config("sigma candidates must be non-empty and >= 0"));
    }
    m.seed = Some(config.seed);
    m.set_config(&config);
    let ds = dataset_input(&a.dataset, m)?;
    let bank = KrrBank::fit(&ds, &config.sigmas, config.seed, cli.jobs)?;
    let mut chosen = Vec::new();
    for model in bank.models() {
        chosen.push((model.frequency, model.config.regularization));
        let name = format!("krr_{}hz.json", model.frequency);
        m.output(&out.join(name), model.to_json().as_bytes())?;
    }
    m.detail("regularization", chosen);
    Ok(())
}

fn heatmap(cli: &Cli, a: &HeatmapArgs, m: &mut RunManifest) -> Res {
    let out = file_output(cli, m)?;
    let scenario = load_scenario(a.source.scenario.as_deref(), m)?;
    let loaded = load_sources(&a.source, m)?;
    let methods = loaded.methods("full");
    if methods.len() != 1 {
        return Err(CliError::config("heatmap takes exactly one of --models, --krr, --oracle"));
    }
    let sources = scenario.source_positions();
    let source = *sources.get(a.source_index).ok_or_else(|| {
        CliError::config(format!(
            "source index {} out of range ({} sources)",
            a.source_index,
            sources.len()
        ))
    })?;
    let mut grid: GridSpec = default_heatmap_grid(&scenario);
    if let Some(n) = a.points {
        if n < 2 {
            return Err(CliError::config("--points must be at least 2"));
        }
        let side = grid.spacing * (grid.counts[0] - 1) as f64;
        grid.spacing = side / (n - 1) as f64;
        grid.counts = [n, n, 1];
    }
    m.set_config(&(&scenario, a.frequency, a.source_index, a.part, &grid));
    let domain = scenario.receiver_domain()?;
    let map = export_heatmap(methods[0].predictor, &source, a.frequency, &grid, a.part, &domain)?;
    m.output(&out, map.to_csv().as_bytes())?;
    if !a.source.oracle {
        let truth = OraclePredictor {
            oracle: Oracle::from_scenario(&scenario),
            speed_of_sound: scenario.speed_of_sound,
        };
        let t = export_heatmap(&truth, &source, a.frequency, &grid, a.part, &domain)?;
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
        let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        m.output(&out.with_file_name(format!("{stem}_truth.{ext}")), t.to_csv().as_bytes())?;
    }
    Ok(())
}
