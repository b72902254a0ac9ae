//! Model files: one JSON header line, then one base-16 IEEE-754 double per
//! line (big-endian bit pattern), so parameters round-trip bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DeepSetModel, Model, ModelKind, ModelMeta, Normalization, PlainModel};
use crate::autodiff::{MlpSpec, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};

pub const MODEL_FORMAT: &str = "sfr-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<MlpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<MlpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    net: Option<MlpSpec>,
    norm: Normalization,
    meta: ModelMeta,
    param_count: usize,
}

pub fn model_to_string(model: &Model) -> String {
    let (phi, rho, net) = match model {
        Model::DeepSet(m) => (Some(m.phi.clone()), Some(m.rho.clone()), None),
        Model::Plain(m) => (None, None, Some(m.net.clone())),
    };
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind: model.kind(),
        phi,
        rho,
        net,
        norm: *model.norm(),
        meta: *model.meta(),
        param_count: model.params().len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for v in &model.params().values {
        let _ = writeln!(out, "{:016x}", v.to_bits());
    }
    out
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Schema("empty model file".into()))?;
    let raw: serde_json::Value = serde_json::from_str(first)
        .map_err(|e| Error::Schema(format!("model header is not valid JSON: {e}")))?;
    match raw.get("format").and_then(|v| v.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => {
            return Err(Error::Schema(format!(
                "not a model file (format tag {other:?})"
            )))
        }
    }
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_VERSION as u64 => {}
        other => {
            return Err(Error::Schema(format!(
                "unsupported model version {other:?} (expected {MODEL_VERSION})"
            )))
        }
    }
    let header: Header = serde_json::from_value(raw)
        .map_err(|e| Error::Schema(format!("malformed model header: {e}")))?;
    let mut values = Vec::with_capacity(header.param_count);
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bits = u64::from_str_radix(line, 16)
            .map_err(|e| Error::Schema(format!("parameter {i}: {e}")))?;
        values.push(f64::from_bits(bits));
    }
    if values.len() != header.param_count {
        return Err(Error::Schema(format!(
            "header declares {} parameters, file holds {}",
            header.param_count,
            values.len()
        )));
    }
    header.norm.validate()?;
    let missing = |what: &str| Error::Schema(format!("{} model without `{what}` spec", header.kind.as_str()));
    match header.kind {
        ModelKind::DeepSet => {
            let phi = header.phi.ok_or_else(|| missing("phi"))?;
            let rho = header.rho.ok_or_else(|| missing("rho"))?;
            let mut layout = ParamLayout::new();
            phi.push_layout("phi", &mut layout);
            rho.push_layout("rho", &mut layout);
            let params = ParamVector::from_values(layout, values)
                .map_err(|e| Error::Schema(e.to_string()))?;
            Ok(Model::DeepSet(DeepSetModel {
                phi,
                rho,
                norm: header.norm,
                meta: header.meta,
                params,
            }))
        }
        ModelKind::Plain => {
            let net = header.net.ok_or_else(|| missing("net"))?;
            let mut layout = ParamLayout::new();
            net.push_layout("net", &mut layout);
            let params = ParamVector::from_values(layout, values)
                .map_err(|e| Error::Schema(e.to_string()))?;
            Ok(Model::Plain(PlainModel {
                net,
                norm: header.norm,
                meta: header.meta,
                params,
            }))
        }
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, model_to_string(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_str(&read_to_string(path)?)
}

impl Model {
    pub fn into_deepset(self) -> Result<DeepSetModel> {
        match self {
            Model::DeepSet(m) => Ok(m),
            Model::Plain(_) => Err(Error::ModelKind {
                expected: "deepset".into(),
                found: "plain".into(),
            }),
        }
    }

    pub fn into_plain(self) -> Result<PlainModel> {
        match self {
            Model::Plain(m) => Ok(m),
            Model::DeepSet(_) => Err(Error::ModelKind {
                expected: "plain".into(),
                found: "deepset".into(),
            }),
        }
    }
}
