//! Batched jet propagation through the two model architectures.
//!
//! Axes are indices into the concatenated pair coordinates: `0..3` are the
//! receiver's x, y, z and `3..6` the source's. Derivatives are taken with
//! respect to physical meters; the normalization factor `1/scale` is folded
//! into the seeded input jets. All outputs here are raw network units (no
//! target scale).

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use super::{DeepSetModel, Model, PlainModel};
use crate::autodiff::mlp::{self, MlpTape, Streams};
use crate::types::Position3;

/// Per-axis derivative summary for a batch of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairJets {
    pub values: Vec<f64>,
    /// `second[a][i]`: `∂²/∂x_a²` at pair `i` for the `a`-th requested axis.
    pub second: Vec<Vec<f64>>,
}

impl PairJets {
    pub(crate) fn from_streams(st: &Streams) -> Self {
        PairJets {
            values: st.value().column(0).to_vec(),
            second: (0..st.axes).map(|a| st.second(a).column(0).to_vec()).collect(),
        }
    }
}

enum TapeInner {
    DeepSet {
        r: MlpTape,
        s: MlpTape,
        rho: MlpTape,
        r_axes: Vec<(usize, usize)>,
        s_axes: Vec<(usize, usize)>,
    },
    Shared {
        phi: MlpTape,
        rho: MlpTape,
        ids: Vec<(usize, usize)>,
        n_unique: usize,
    },
    Plain(MlpTape),
}

/// Forward state kept for a reverse sweep over a batch.
pub struct ModelTape {
    inner: TapeInner,
    batch: usize,
}

fn normalized_rows(model_norm: &super::Normalization, pts: impl Iterator<Item = Position3>) -> (Vec<f64>, usize) {
    let mut flat = Vec::new();
    let mut n = 0;
    for p in pts {
        flat.extend_from_slice(&model_norm.apply(&p));
        n += 1;
    }
    (flat, n)
}

/// Value-only deep-set pass; `φ` runs once per distinct position.
fn deepset_shared(
    model: &DeepSetModel,
    params: &[f64],
    pairs: &[(Position3, Position3)],
    record: bool,
) -> (Streams, Option<ModelTape>) {
    let (phi_p, rho_p) = params.split_at(model.phi_len());
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut slot = |p: &Position3| -> usize {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *index.entry(key).or_insert_with(|| {
            unique.push(*p);
            unique.len() - 1
        })
    };
    let ids: Vec<(usize, usize)> = pairs.iter().map(|(r, s)| (slot(r), slot(s))).collect();
    let (flat, n) = normalized_rows(&model.norm, unique.iter().copied());
    let xs = ArrayView2::from_shape((n, 3), &flat).expect("rows of three");
    let (feat, tphi) = mlp::forward(&model.phi, phi_p, mlp::seed_inputs(xs, &[], &[]), record);
    let feat = feat.data;
    let latent = model.latent_dim();
    let mut z = Array2::<f64>::zeros((pairs.len(), latent));
    for (row, &(i, j)) in ids.iter().enumerate() {
        for c in 0..latent {
            z[[row, c]] = feat[[i, c]] + feat[[j, c]];
        }
    }
    let (out, trho) = mlp::forward(&model.rho, rho_p, Streams::new(z, pairs.len(), 0), record);
    let tape = record.then(|| ModelTape {
        inner: TapeInner::Shared {
            phi: tphi.expect("recorded"),
            rho: trho.expect("recorded"),
            ids,
            n_unique: n,
        },
        batch: pairs.len(),
    });
    (out, tape)
}

pub(crate) fn deepset_values(model: &DeepSetModel, params: &[f64], pairs: &[(Position3, Position3)]) -> Vec<f64> {
    deepset_shared(model, params, pairs, false).0.data.column(0).to_vec()
}

pub(crate) fn plain_values(model: &PlainModel, params: &[f64], pairs: &[(Position3, Position3)]) -> Vec<f64> {
    let st = plain_inputs(model, pairs, &[]);
    let (out, _) = mlp::forward(&model.net, params, st, false);
    out.data.column(0).to_vec()
}

fn plain_inputs(model: &PlainModel, pairs: &[(Position3, Position3)], axes: &[usize]) -> Streams {
    let mut flat = Vec::with_capacity(pairs.len() * 6);
    for (r, s) in pairs {
        flat.extend_from_slice(&model.norm.apply(r));
        flat.extend_from_slice(&model.norm.apply(s));
    }
    let xs = ArrayView2::from_shape((pairs.len(), 6), &flat).expect("rows of six");
    let scales: Vec<f64> = axes.iter().map(|&a| 1.0 / model.norm.scale[a % 3]).collect();
    mlp::seed_inputs(xs, axes, &scales)
}

fn branch_inputs(
    model: &DeepSetModel,
    pts: impl Iterator<Item = Position3>,
    local_axes: &[usize],
) -> Streams {
    let (flat, n) = normalized_rows(&model.norm, pts);
    let xs = ArrayView2::from_shape((n, 3), &flat).expect("rows of three");
    let scales: Vec<f64> = local_axes.iter().map(|&a| 1.0 / model.norm.scale[a]).collect();
    mlp::seed_inputs(xs, local_axes, &scales)
}

fn deepset_jets(
    model: &DeepSetModel,
    params: &[f64],
    pairs: &[(Position3, Position3)],
    axes: &[usize],
    record: bool,
) -> (Streams, Option<ModelTape>) {
    let b = pairs.len();
    let m = axes.len();
    let (phi_p, rho_p) = params.split_at(model.phi_len());
    // (slot in `axes`, local coordinate 0..3)
    let r_axes: Vec<(usize, usize)> = axes
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < 3)
        .map(|(slot, &a)| (slot, a))
        .collect();
    let s_axes: Vec<(usize, usize)> = axes
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= 3)
        .map(|(slot, &a)| (slot, a - 3))
        .collect();
    let r_local: Vec<usize> = r_axes.iter().map(|&(_, l)| l).collect();
    let s_local: Vec<usize> = s_axes.iter().map(|&(_, l)| l).collect();
    let rin = branch_inputs(model, pairs.iter().map(|p| p.0), &r_local);
    let sin = branch_inputs(model, pairs.iter().map(|p| p.1), &s_local);
    let (fr, tr) = mlp::forward(&model.phi, phi_p, rin, record);
    let (fs, ts) = mlp::forward(&model.phi, phi_p, sin, record);

    let mut z = Streams::zeros(b, m, model.latent_dim());
    {
        let mut v = z.value_mut();
        v.assign(&fr.value());
        v += &fs.value();
    }
    for (k, &(slot, _)) in r_axes.iter().enumerate() {
        z.first_mut(slot).assign(&fr.first(k));
        z.second_mut(slot).assign(&fr.second(k));
    }
    for (k, &(slot, _)) in s_axes.iter().enumerate() {
        z.first_mut(slot).assign(&fs.first(k));
        z.second_mut(slot).assign(&fs.second(k));
    }
    let (out, trho) = mlp::forward(&model.rho, rho_p, z, record);
    let tape = record.then(|| ModelTape {
        inner: TapeInner::DeepSet {
            r: tr.expect("recorded"),
            s: ts.expect("recorded"),
            rho: trho.expect("recorded"),
            r_axes,
            s_axes,
        },
        batch: b,
    });
    (out, tape)
}

impl Model {
    pub(crate) fn net_values(&self, params: &[f64], pairs: &[(Position3, Position3)]) -> Vec<f64> {
        match self {
            Model::DeepSet(m) => deepset_values(m, params, pairs),
            Model::Plain(m) => plain_values(m, params, pairs),
        }
    }

    /// Raw-unit jets for a batch of pairs along `axes` (indices into the
    /// six pair coordinates).
    pub fn net_jets(
        &self,
        params: &[f64],
        pairs: &[(Position3, Position3)],
        axes: &[usize],
        record: bool,
    ) -> (Streams, Option<ModelTape>) {
        match self {
            Model::DeepSet(m) if axes.is_empty() => deepset_shared(m, params, pairs, record),
            Model::DeepSet(m) => deepset_jets(m, params, pairs, axes, record),
            Model::Plain(m) => {
                let st = plain_inputs(m, pairs, axes);
                let (out, tape) = mlp::forward(&m.net, params, st, record);
                let tape = tape.map(|t| ModelTape {
                    inner: TapeInner::Plain(t),
                    batch: pairs.len(),
                });
                (out, tape)
            }
        }
    }

    /// Accumulates the parameter gradient of `Σ out_adjoint ⊙ output` into
    /// `grad` for a batch recorded by [`Model::net_jets`].
    pub fn net_backward(&self, params: &[f64], tape: ModelTape, out_adjoint: Array2<f64>, grad: &mut [f64]) {
        match (self, tape.inner) {
            (Model::Plain(m), TapeInner::Plain(t)) => {
                mlp::backward(&m.net, params, t, out_adjoint, grad, false);
            }
            (
                Model::DeepSet(m),
                TapeInner::DeepSet {
                    r,
                    s,
                    rho,
                    r_axes,
                    s_axes,
                },
            ) => {
                let n_phi = m.phi_len();
                let (phi_p, rho_p) = params.split_at(n_phi);
                let (g_phi, g_rho) = grad.split_at_mut(n_phi);
                let b = tape.batch;
                let m_axes = r_axes.len() + s_axes.len();
                let adj = mlp::backward(&m.rho, rho_p, rho, out_adjoint, g_rho, true)
                    .expect("input adjoint requested");
                let adj = Streams::new(adj, b, m_axes);
                for (branch_tape, branch_axes) in [(r, &r_axes), (s, &s_axes)] {
                    let mut a = Streams::zeros(b, branch_axes.len(), m.latent_dim());
                    a.value_mut().assign(&adj.value());
                    for (k, &(slot, _)) in branch_axes.iter().enumerate() {
                        a.first_mut(k).assign(&adj.first(slot));
                        a.second_mut(k).assign(&adj.second(slot));
                    }
                    mlp::backward(&m.phi, phi_p, branch_tape, a.data, g_phi, false);
                }
            }
            (Model::DeepSet(m), TapeInner::Shared { phi, rho, ids, n_unique }) => {
                let n_phi = m.phi_len();
                let (phi_p, rho_p) = params.split_at(n_phi);
                let (g_phi, g_rho) = grad.split_at_mut(n_phi);
                let adj = mlp::backward(&m.rho, rho_p, rho, out_adjoint, g_rho, true)
                    .expect("input adjoint requested");
                let mut feat_adj = Array2::<f64>::zeros((n_unique, m.latent_dim()));
                for (row, &(i, j)) in ids.iter().enumerate() {
                    let a = adj.row(row);
                    let mut fi = feat_adj.row_mut(i);
                    fi += &a;
                    let mut fj = feat_adj.row_mut(j);
                    fj += &a;
                }
                mlp::backward(&m.phi, phi_p, phi, feat_adj, g_phi, false);
            }
            _ => panic!("tape recorded for a different architecture"),
        }
    }
}
