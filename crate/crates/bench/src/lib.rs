//! Fixtures shared by the benchmarks.

use sfr_core::autodiff::Activation;
use sfr_core::model::{ArchConfig, Model, ModelMeta};
use sfr_core::oracle::synth_dataset;
use sfr_core::train::{TrainConfig, TrainDomain, Variant};
use sfr_core::{ATFDataset, Part, ScenarioConfig, Split};

pub fn scenario(frequency: f64) -> ScenarioConfig {
    ScenarioConfig {
        frequencies: vec![frequency],
        ..ScenarioConfig::default()
    }
}

pub fn split(frequency: f64, split: Split) -> ATFDataset {
    synth_dataset(&scenario(frequency), split).expect("default scenario synthesizes")
}

pub fn arch(width: usize) -> ArchConfig {
    ArchConfig {
        hidden_widths: vec![width, width],
        latent_dim: width,
        activation: Activation::Tanh,
    }
}

pub fn config(width: usize, steps: usize, n_pde: usize) -> TrainConfig {
    TrainConfig {
        steps,
        n_pde,
        arch: arch(width),
        ..TrainConfig::default()
    }
}

pub fn model(variant: Variant, width: usize, frequency: f64) -> (Model, TrainDomain) {
    let sc = scenario(frequency);
    let domain = TrainDomain::from_scenario(&sc, Default::default()).expect("valid scenario");
    let m = variant
        .build(&arch(width), domain.norm, ModelMeta::new(frequency, Part::Real), 1)
        .expect("valid architecture");
    (m, domain)
}
