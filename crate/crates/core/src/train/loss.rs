//! Data and Helmholtz-residual losses.
//!
//! The public functions report losses in physical units. The trainer works on
//! the raw network output instead (prediction divided by the model's target
//! scale), which rescales both terms by the same factor.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::collocation::CollocationSet;
use super::TrainConfig;
use crate::autodiff::{self, ScalarField};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::types::{ATFSample, Position3};

/// Which coordinates the Laplacian acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    #[default]
    Receiver,
    Source,
    /// Mean of the receiver-side and source-side squared residuals.
    BothAveraged,
}

impl LaplacianMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LaplacianMode::Receiver => "receiver",
            LaplacianMode::Source => "source",
            LaplacianMode::BothAveraged => "both_averaged",
        }
    }
}

/// The three loss values of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub data: f64,
    pub pde: f64,
}

fn check_samples(model: &Model, samples: &[ATFSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Dataset("data loss needs at least one sample".into()));
    }
    let f = model.meta().frequency;
    if let Some(s) = samples.iter().find(|s| s.frequency != f) {
        return Err(Error::FrequencyMismatch(f, s.frequency));
    }
    Ok(())
}

/// Mean squared error between the model and the matching pressure component.
pub fn data_loss(model: &Model, samples: &[ATFSample]) -> Result<f64> {
    check_samples(model, samples)?;
    let part = model.meta().part;
    let pairs: Vec<_> = samples.iter().map(|s| (s.receiver, s.source)).collect();
    let pred = model.forward_batch(&pairs);
    let sum: f64 = pred
        .iter()
        .zip(samples)
        .map(|(p, s)| (p - s.pressure.part(part)).powi(2))
        .sum();
    Ok(sum / samples.len() as f64)
}

fn check_pde(n: usize, k: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("collocation set is empty".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
    }
    Ok(())
}

fn check_local_axes(axes: &[usize]) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::Config("laplacian needs at least one axis".into()));
    }
    if let Some(&a) = axes.iter().find(|&&a| a >= 3) {
        return Err(Error::IndexOutOfRange { index: a, dim: 3 });
    }
    Ok(())
}

/// Helmholtz residual loss of a model in physical units, with the Laplacian
/// over all three coordinates of the chosen side(s).
pub fn pde_loss(model: &Model, collocation: &CollocationSet, k: f64, mode: LaplacianMode) -> Result<f64> {
    pde_loss_on_axes(model, collocation, k, mode, &[0, 1, 2])
}

/// As [`pde_loss`] with the Laplacian restricted to `local_axes` (subset of
/// `0..3`) on each side.
pub fn pde_loss_on_axes(
    model: &Model,
    collocation: &CollocationSet,
    k: f64,
    mode: LaplacianMode,
    local_axes: &[usize],
) -> Result<f64> {
    check_pde(collocation.len(), k)?;
    check_local_axes(local_axes)?;
    let plan = PdePlan::new(mode, local_axes, local_axes);
    let (out, _) = model.net_jets(&model.params().values, &collocation.points, &plan.axes, false);
    let ts = model.meta().target_scale;
    let (sq, _) = plan.residuals(&out, k);
    Ok(ts * ts * sq)
}

/// Residual loss of an arbitrary six-input field `(rx, ry, rz, sx, sy, sz)`;
/// used to check the loss against fields with known Laplacians.
pub fn pde_loss_field(
    field: &dyn ScalarField,
    params: &[f64],
    collocation: &CollocationSet,
    k: f64,
    mode: LaplacianMode,
    local_axes: &[usize],
) -> Result<f64> {
    check_pde(collocation.len(), k)?;
    check_local_axes(local_axes)?;
    let r_axes: Vec<usize> = local_axes.to_vec();
    let s_axes: Vec<usize> = local_axes.iter().map(|a| a + 3).collect();
    let mut total = 0.0;
    for (r, s) in &collocation.points {
        let x = [r.x, r.y, r.z, s.x, s.y, s.z];
        let v = autodiff::eval(field, &x, params)?;
        let res = |axes: &[usize]| -> Result<f64> {
            Ok((autodiff::laplacian(field, &x, params, axes)? + k * k * v).powi(2))
        };
        total += match mode {
            LaplacianMode::Receiver => res(&r_axes)?,
            LaplacianMode::Source => res(&s_axes)?,
            LaplacianMode::BothAveraged => 0.5 * (res(&r_axes)? + res(&s_axes)?),
        };
    }
    Ok(total / collocation.len() as f64)
}

/// `L_data + λ·L_PDE` in physical units. Variants without the physics term
/// skip the Laplacian entirely and report `L_PDE = 0`.
pub fn total_loss(
    model: &Model,
    samples: &[ATFSample],
    collocation: &CollocationSet,
    k: f64,
    config: &TrainConfig,
) -> Result<LossTerms> {
    let data = data_loss(model, samples)?;
    let pde = if config.variant.uses_pde() {
        pde_loss(model, collocation, k, config.laplacian_mode)?
    } else {
        0.0
    };
    Ok(LossTerms {
        total: combine(data, pde, config.effective_lambda()),
        data,
        pde,
    })
}

pub(crate) fn combine(data: f64, pde: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        data
    } else {
        data + lambda * pde
    }
}

/// Pair-coordinate axes for one residual evaluation and where each side's
/// Laplacian terms sit among them.
pub(crate) struct PdePlan {
    pub axes: Vec<usize>,
    sides: Vec<Vec<usize>>,
}

impl PdePlan {
    pub fn new(mode: LaplacianMode, r_local: &[usize], s_local: &[usize]) -> Self {
        let r: Vec<usize> = r_local.to_vec();
        let s: Vec<usize> = s_local.iter().map(|a| a + 3).collect();
        let mut axes = Vec::new();
        let mut sides = Vec::new();
        let mut push_side = |side: &[usize]| {
            let slots = (axes.len()..axes.len() + side.len()).collect();
            axes.extend_from_slice(side);
            sides.push(slots);
        };
        match mode {
            LaplacianMode::Receiver => push_side(&r),
            LaplacianMode::Source => push_side(&s),
            LaplacianMode::BothAveraged => {
                push_side(&r);
                push_side(&s);
            }
        }
        PdePlan { axes, sides }
    }

    /// Mean (over points, averaged over sides) squared residual of the raw
    /// jets, and each side's per-point residuals.
    pub fn residuals(&self, out: &crate::autodiff::mlp::Streams, k: f64) -> (f64, Vec<Vec<f64>>) {
        let n = out.batch;
        let k2 = k * k;
        let v = out.value();
        let mut per_side = Vec::with_capacity(self.sides.len());
        let mut sq = 0.0;
        for slots in &self.sides {
            let res: Vec<f64> = (0..n)
                .map(|i| {
                    let lap: f64 = slots.iter().map(|&a| out.second(a)[[i, 0]]).sum();
                    lap + k2 * v[[i, 0]]
                })
                .collect();
            sq += res.iter().map(|r| r * r).sum::<f64>();
            per_side.push(res);
        }
        (sq / (n * self.sides.len()) as f64, per_side)
    }
}

/// The trainer's objective in raw network units.
pub(crate) struct Objective<'a> {
    pub model: &'a Model,
    pub k: f64,
    pub lambda: f64,
    /// Multiplies the raw residual loss (`1/k⁴` when residuals are
    /// normalized by the wavenumber).
    pub pde_weight: f64,
    pub plan: Option<&'a PdePlan>,
}

impl Objective<'_> {
    /// Loss terms at `params`; when `grad` is given the gradient of the total
    /// is accumulated into it.
    pub fn evaluate(
        &self,
        params: &[f64],
        data: &[(Position3, Position3)],
        targets: &[f64],
        collocation: &[(Position3, Position3)],
        mut grad: Option<&mut [f64]>,
    ) -> LossTerms {
        let record = grad.is_some();
        let (out, tape) = self.model.net_jets(params, data, &[], record);
        let n = data.len() as f64;
        let resid: Vec<f64> = out
            .value()
            .column(0)
            .iter()
            .zip(targets)
            .map(|(p, t)| p - t)
            .collect();
        let l_data = resid.iter().map(|r| r * r).sum::<f64>() / n;
        if let (Some(g), Some(tape)) = (grad.as_deref_mut(), tape) {
            let adj = Array2::from_shape_fn((data.len(), 1), |(i, _)| 2.0 * resid[i] / n);
            self.model.net_backward(params, tape, adj, g);
        }

        let mut l_pde = 0.0;
        if let Some(plan) = self.plan {
            let (out, tape) = self.model.net_jets(params, collocation, &plan.axes, record);
            let (sq, per_side) = plan.residuals(&out, self.k);
            l_pde = self.pde_weight * sq;
            if let (Some(g), Some(tape)) = (grad.as_deref_mut(), tape) {
                let m = collocation.len();
                let axes = plan.axes.len();
                let c = 2.0 * self.lambda * self.pde_weight / (m * plan.sides.len()) as f64;
                let mut adj = Array2::<f64>::zeros(((1 + 2 * axes) * m, 1));
                for (slots, res) in plan.sides.iter().zip(&per_side) {
                    for i in 0..m {
                        let a = c * res[i];
                        adj[[i, 0]] += a * self.k * self.k;
                        for &slot in slots {
                            adj[[(1 + axes + slot) * m + i, 0]] += a;
                        }
                    }
                }
                self.model.net_backward(params, tape, adj, g);
            }
        }
        LossTerms {
            total: combine(l_data, l_pde, self.lambda),
            data: l_data,
            pde: l_pde,
        }
    }
}
