use super::kernel::PairJets;
use super::Model;
use crate::autodiff::mlp::Streams;
use crate::autodiff::{JetSeed, Jets, ScalarField};
use crate::types::Position3;

/// A model viewed as a field over six inputs `(rx, ry, rz, sx, sy, sz)` in
/// meters. The value and its derivatives are in physical units: the target
/// scale and the normalization chain-rule factors are both applied.
#[derive(Debug, Clone, Copy)]
pub struct ModelField<'a> {
    model: &'a Model,
}

impl<'a> ModelField<'a> {
    pub const RECEIVER: [usize; 3] = [0, 1, 2];
    pub const SOURCE: [usize; 3] = [3, 4, 5];

    pub fn new(model: &'a Model) -> Self {
        ModelField { model }
    }

    pub fn receiver_indices(&self) -> &'static [usize] {
        &Self::RECEIVER
    }

    pub fn source_indices(&self) -> &'static [usize] {
        &Self::SOURCE
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }

    fn pair(inputs: &[f64]) -> (Position3, Position3) {
        (
            Position3::new(inputs[0], inputs[1], inputs[2]),
            Position3::new(inputs[3], inputs[4], inputs[5]),
        )
    }

    fn scaled_jets(&self, out: &Streams) -> Jets {
        let scale = self.model.meta().target_scale;
        let pj = PairJets::from_streams(out);
        Jets {
            value: scale * pj.values[0],
            first: (0..out.axes).map(|a| scale * out.first(a)[[0, 0]]).collect(),
            second: pj.second.iter().map(|v| scale * v[0]).collect(),
        }
    }
}

impl ScalarField for ModelField<'_> {
    fn input_dim(&self) -> usize {
        6
    }

    fn param_len(&self) -> usize {
        self.model.params().len()
    }

    fn value(&self, inputs: &[f64], params: &[f64]) -> f64 {
        let scale = self.model.meta().target_scale;
        scale * self.model.net_values(params, &[Self::pair(inputs)])[0]
    }

    fn jets(&self, inputs: &[f64], params: &[f64], axes: &[usize]) -> Jets {
        let (out, _) = self.model.net_jets(params, &[Self::pair(inputs)], axes, false);
        self.scaled_jets(&out)
    }

    fn backprop(
        &self,
        inputs: &[f64],
        params: &[f64],
        axes: &[usize],
        seed: &mut dyn FnMut(&Jets) -> JetSeed,
        grad: &mut [f64],
    ) -> Jets {
        let scale = self.model.meta().target_scale;
        let (out, tape) = self.model.net_jets(params, &[Self::pair(inputs)], axes, true);
        let jets = self.scaled_jets(&out);
        let s = seed(&jets);
        let mut adj = Streams::zeros(1, axes.len(), 1);
        adj.value_mut()[[0, 0]] = scale * s.value;
        for (a, w) in s.second.iter().enumerate() {
            adj.second_mut(a)[[0, 0]] = scale * w;
        }
        self.model
            .net_backward(params, tape.expect("recorded"), adj.data, grad);
        jets
    }
}
