//! Per-bin scalar networks mapping a (receiver, source) pair to one component
//! of the transfer function.
//!
//! [`DeepSetModel`] evaluates `ρ(φ(r̃) + φ(s̃))`, where `r̃`, `s̃` are the
//! normalized positions and `φ` is shared between the two, so swapping the
//! receiver and the source cannot change the output. [`PlainModel`] feeds the
//! concatenated six coordinates to a single network and has no such symmetry.
//!
//! Both report predictions in physical units: the raw network output is
//! multiplied by the `target_scale` stored in [`ModelMeta`].

mod field;
mod kernel;
mod persist;

pub use field::ModelField;
pub use kernel::{ModelTape, PairJets};
pub use persist::{load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT, MODEL_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, MlpSpec, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::types::{ComplexPressure, DomainBox, Part, Position3};

/// Hidden widths used when none are configured.
pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

/// Affine map from meters to network coordinates: `(p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: [f64; 3],
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            center: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    /// Maps the box to roughly `[-1, 1]` per axis. Flat axes borrow the
    /// largest half-extent so their scale stays positive.
    pub fn from_domain(domain: &DomainBox) -> Self {
        let half = domain.half_extents();
        let widest = half.iter().cloned().fold(0.0, f64::max);
        let scale = half.map(|h| if h > 0.0 { h } else { widest });
        Normalization {
            center: domain.center().to_array(),
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.center.iter().any(|c| !c.is_finite())
        {
            return Err(Error::Config(format!(
                "normalization scales must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Position3) -> [f64; 3] {
        let v = p.to_array();
        [
            (v[0] - self.center[0]) / self.scale[0],
            (v[1] - self.center[1]) / self.scale[1],
            (v[2] - self.center[2]) / self.scale[2],
        ]
    }
}

/// Which frequency bin and component a model predicts, plus the target scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub frequency: f64,
    pub part: Part,
    pub target_scale: f64,
}

impl ModelMeta {
    pub fn new(frequency: f64, part: Part) -> Self {
        ModelMeta {
            frequency,
            part,
            target_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepSetModel {
    pub phi: MlpSpec,
    pub rho: MlpSpec,
    pub norm: Normalization,
    pub meta: ModelMeta,
    pub params: ParamVector,
}

impl DeepSetModel {
    pub fn latent_dim(&self) -> usize {
        self.phi.output_dim
    }

    pub(crate) fn phi_len(&self) -> usize {
        self.phi.param_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainModel {
    pub net: MlpSpec,
    pub norm: Normalization,
    pub meta: ModelMeta,
    pub params: ParamVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    DeepSet,
    Plain,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::DeepSet => "deepset",
            ModelKind::Plain => "plain",
        }
    }
}

/// Either architecture; the trainer and harness work through this type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    DeepSet(DeepSetModel),
    Plain(PlainModel),
}

fn glorot_fill(spec: &MlpSpec, params: &mut [f64], rng: &mut ChaCha8Rng) {
    let mut off = 0;
    for w in spec.layer_sizes().windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        for v in &mut params[off..off + n_in * n_out] {
            *v = rng.gen_range(-bound..=bound);
        }
        off += n_in * n_out;
        params[off..off + n_out].fill(0.0);
        off += n_out;
    }
}

/// Builds a deep-set model with Glorot-uniform weights and zero biases.
pub fn init_deepset(
    phi: MlpSpec,
    rho: MlpSpec,
    norm: Normalization,
    meta: ModelMeta,
    seed: u64,
) -> Result<DeepSetModel> {
    phi.validate()?;
    rho.validate()?;
    norm.validate()?;
    if phi.input_dim != 3 {
        return Err(Error::Shape(format!(
            "phi must take 3 coordinates, got {}",
            phi.input_dim
        )));
    }
    if phi.output_dim != rho.input_dim {
        return Err(Error::Shape(format!(
            "phi output width {} does not match rho input width {}",
            phi.output_dim, rho.input_dim
        )));
    }
    if rho.output_dim != 1 {
        return Err(Error::Shape(format!(
            "rho must produce one output, got {}",
            rho.output_dim
        )));
    }
    let mut layout = ParamLayout::new();
    phi.push_layout("phi", &mut layout);
    rho.push_layout("rho", &mut layout);
    let mut params = ParamVector::zeros(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_phi = phi.param_len();
    glorot_fill(&phi, &mut params.values[..n_phi], &mut rng);
    glorot_fill(&rho, &mut params.values[n_phi..], &mut rng);
    Ok(DeepSetModel {
        phi,
        rho,
        norm,
        meta,
        params,
    })
}

/// Builds a plain six-input network with Glorot-uniform weights.
pub fn init_plain(net: MlpSpec, norm: Normalization, meta: ModelMeta, seed: u64) -> Result<PlainModel> {
    net.validate()?;
    norm.validate()?;
    if net.input_dim != 6 || net.output_dim != 1 {
        return Err(Error::Shape(format!(
            "plain network must map 6 inputs to 1 output, got {} -> {}",
            net.input_dim, net.output_dim
        )));
    }
    let mut layout = ParamLayout::new();
    net.push_layout("net", &mut layout);
    let mut params = ParamVector::zeros(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_fill(&net, &mut params.values, &mut rng);
    Ok(PlainModel {
        net,
        norm,
        meta,
        params,
    })
}

/// Architecture hyper-parameters shared by both model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub hidden_widths: Vec<usize>,
    /// Output width of `φ`.
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            hidden_widths: DEFAULT_HIDDEN.to_vec(),
            latent_dim: DEFAULT_HIDDEN[1],
            activation: Activation::Tanh,
        }
    }
}

impl ArchConfig {
    pub fn deepset(&self, norm: Normalization, meta: ModelMeta, seed: u64) -> Result<DeepSetModel> {
        let phi = MlpSpec::new(3, self.hidden_widths.clone(), self.latent_dim, self.activation)?;
        let rho = MlpSpec::new(self.latent_dim, self.hidden_widths.clone(), 1, self.activation)?;
        init_deepset(phi, rho, norm, meta, seed)
    }

    pub fn plain(&self, norm: Normalization, meta: ModelMeta, seed: u64) -> Result<PlainModel> {
        let net = MlpSpec::new(6, self.hidden_widths.clone(), 1, self.activation)?;
        init_plain(net, norm, meta, seed)
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::DeepSet(_) => ModelKind::DeepSet,
            Model::Plain(_) => ModelKind::Plain,
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        match self {
            Model::DeepSet(m) => &m.meta,
            Model::Plain(m) => &m.meta,
        }
    }

    pub fn meta_mut(&mut self) -> &mut ModelMeta {
        match self {
            Model::DeepSet(m) => &mut m.meta,
            Model::Plain(m) => &mut m.meta,
        }
    }

    pub fn norm(&self) -> &Normalization {
        match self {
            Model::DeepSet(m) => &m.norm,
            Model::Plain(m) => &m.norm,
        }
    }

    pub fn params(&self) -> &ParamVector {
        match self {
            Model::DeepSet(m) => &m.params,
            Model::Plain(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        match self {
            Model::DeepSet(m) => &mut m.params,
            Model::Plain(m) => &mut m.params,
        }
    }

    /// Physical-unit prediction for one pair.
    pub fn forward(&self, r: &Position3, s: &Position3) -> f64 {
        self.forward_batch(&[(*r, *s)])[0]
    }

    /// Physical-unit predictions for many pairs.
    pub fn forward_batch(&self, pairs: &[(Position3, Position3)]) -> Vec<f64> {
        let scale = self.meta().target_scale;
        self.net_values(self.params().values.as_slice(), pairs)
            .into_iter()
            .map(|v| scale * v)
            .collect()
    }

    /// A shared borrow of the model viewed as a differentiable field.
    pub fn as_scalar_field(&self) -> ModelField<'_> {
        ModelField::new(self)
    }
}

impl From<DeepSetModel> for Model {
    fn from(m: DeepSetModel) -> Self {
        Model::DeepSet(m)
    }
}

impl From<PlainModel> for Model {
    fn from(m: PlainModel) -> Self {
        Model::Plain(m)
    }
}

/// `ρ(φ(r) + φ(s))` in physical units.
pub fn forward(model: &DeepSetModel, r: &Position3, s: &Position3) -> f64 {
    model.meta.target_scale * kernel::deepset_values(model, &model.params.values, &[(*r, *s)])[0]
}

/// Plain network on the concatenated, normalized `(r, s)`.
pub fn forward_plain(model: &PlainModel, r: &Position3, s: &Position3) -> f64 {
    model.meta.target_scale * kernel::plain_values(model, &model.params.values, &[(*r, *s)])[0]
}

/// Pairs a real-part and an imaginary-part model into one complex value.
pub fn predict_complex(
    model_re: &Model,
    model_im: &Model,
    r: &Position3,
    s: &Position3,
) -> Result<ComplexPressure> {
    let (fr, fi) = (model_re.meta().frequency, model_im.meta().frequency);
    if fr != fi {
        return Err(Error::FrequencyMismatch(fr, fi));
    }
    Ok(ComplexPressure::new(
        model_re.forward(r, s),
        model_im.forward(r, s),
    ))
}

#[cfg(test)]
mod tests;
