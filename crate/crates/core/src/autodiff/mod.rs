//! Differentiation engine for smooth scalar fields `f(x; θ)`.
//!
//! Every field propagates second-order jets along coordinate axes: for each
//! requested axis `a` the forward pass carries `(f, ∂f/∂x_a, ∂²f/∂x_a²)`.
//! The Laplacian is the sum of the per-axis second derivatives. Gradients
//! with respect to the parameters are obtained by a reverse sweep over that
//! jet computation, which gives both `∂f/∂θ` and `∂(∇²f)/∂θ` from the same
//! machinery.

mod expr;
pub mod mlp;

pub use expr::{Expr, ExprBuilder, NodeId};
pub use mlp::{Activation, MlpSpec};

use crate::error::{Error, Result};

/// Values and per-axis derivatives of a field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets {
    pub value: f64,
    /// `∂f/∂x_a` for each requested axis, in request order.
    pub first: Vec<f64>,
    /// `∂²f/∂x_a²` for each requested axis, in request order.
    pub second: Vec<f64>,
}

impl Jets {
    pub fn laplacian(&self) -> f64 {
        self.second.iter().sum()
    }
}

/// Cotangent applied to a [`Jets`] result before the reverse sweep: the
/// sweep differentiates `value·f + Σ_a second[a]·∂²f/∂x_a²`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetSeed {
    pub value: f64,
    pub second: Vec<f64>,
}

/// A smooth real function of input coordinates and a flat parameter vector.
///
/// Implementations must be deterministic and free of interior mutability so
/// that concurrent calls on a shared field are safe.
pub trait ScalarField: Send + Sync {
    fn input_dim(&self) -> usize;

    fn param_len(&self) -> usize;

    fn value(&self, inputs: &[f64], params: &[f64]) -> f64;

    /// Forward jets along `axes` (each `< input_dim`).
    fn jets(&self, inputs: &[f64], params: &[f64], axes: &[usize]) -> Jets;

    /// Runs the forward jets, asks `seed` for the cotangent, then accumulates
    /// the parameter gradient of the seeded combination into `grad`.
    fn backprop(
        &self,
        inputs: &[f64],
        params: &[f64],
        axes: &[usize],
        seed: &mut dyn FnMut(&Jets) -> JetSeed,
        grad: &mut [f64],
    ) -> Jets;
}

/// Named slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Map from named tensors onto contiguous, non-overlapping index ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor after the current end and returns its range.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> std::ops::Range<usize> {
        let entry = ParamEntry {
            name: name.into(),
            shape,
            offset: self.total_len(),
        };
        let range = entry.range();
        self.entries.push(entry);
        range
    }

    pub fn total_len(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Entry owning flat index `i`.
    pub fn locate(&self, i: usize) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.range().contains(&i))
    }
}

/// Flat parameters (or a gradient) together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = vec![0.0; layout.total_len()];
        ParamVector { layout, values }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if layout.total_len() != values.len() {
            return Err(Error::Dimension {
                expected: layout.total_len(),
                got: values.len(),
            });
        }
        Ok(ParamVector { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|e| &self.values[e.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.values[range])
    }
}

fn check_dims(field: &dyn ScalarField, inputs: &[f64], params: &[f64]) -> Result<()> {
    if inputs.len() != field.input_dim() {
        return Err(Error::Dimension {
            expected: field.input_dim(),
            got: inputs.len(),
        });
    }
    if params.len() != field.param_len() {
        return Err(Error::Dimension {
            expected: field.param_len(),
            got: params.len(),
        });
    }
    Ok(())
}

fn check_axes(field: &dyn ScalarField, axes: &[usize]) -> Result<()> {
    let dim = field.input_dim();
    match axes.iter().find(|&&a| a >= dim) {
        Some(&index) => Err(Error::IndexOutOfRange { index, dim }),
        None => Ok(()),
    }
}

pub fn eval(field: &dyn ScalarField, inputs: &[f64], params: &[f64]) -> Result<f64> {
    check_dims(field, inputs, params)?;
    Ok(field.value(inputs, params))
}

/// `∂f/∂θ` at the given point.
pub fn grad_params(field: &dyn ScalarField, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    check_dims(field, inputs, params)?;
    let mut grad = vec![0.0; params.len()];
    field.backprop(
        inputs,
        params,
        &[],
        &mut |_| JetSeed {
            value: 1.0,
            second: Vec::new(),
        },
        &mut grad,
    );
    Ok(grad)
}

/// `Σ_{i ∈ coords} ∂²f/∂x_i²`.
pub fn laplacian(
    field: &dyn ScalarField,
    inputs: &[f64],
    params: &[f64],
    coords: &[usize],
) -> Result<f64> {
    check_dims(field, inputs, params)?;
    check_axes(field, coords)?;
    Ok(field.jets(inputs, params, coords).laplacian())
}

/// `∂/∂θ Σ_{i ∈ coords} ∂²f/∂x_i²`.
pub fn grad_params_of_laplacian(
    field: &dyn ScalarField,
    inputs: &[f64],
    params: &[f64],
    coords: &[usize],
) -> Result<Vec<f64>> {
    check_dims(field, inputs, params)?;
    check_axes(field, coords)?;
    let mut grad = vec![0.0; params.len()];
    let n = coords.len();
    field.backprop(
        inputs,
        params,
        coords,
        &mut |_| JetSeed {
            value: 0.0,
            second: vec![1.0; n],
        },
        &mut grad,
    );
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_a_bijection_onto_ranges() {
        let mut layout = ParamLayout::new();
        let a = layout.push("w0", vec![4, 3]);
        let b = layout.push("b0", vec![4]);
        let c = layout.push("w1", vec![1, 4]);
        assert_eq!(a, 0..12);
        assert_eq!(b, 12..16);
        assert_eq!(c, 16..20);
        assert_eq!(layout.total_len(), 20);
        for i in 0..20 {
            let owners = layout
                .entries()
                .iter()
                .filter(|e| e.range().contains(&i))
                .count();
            assert_eq!(owners, 1);
        }
        assert_eq!(layout.locate(13).unwrap().name, "b0");
        assert!(layout.locate(20).is_none());
        let pv = ParamVector::zeros(layout.clone());
        assert_eq!(pv.tensor("w1").unwrap().len(), 4);
        assert!(ParamVector::from_values(layout, vec![0.0; 3]).is_err());
    }
}
