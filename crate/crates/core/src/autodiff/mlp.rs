//! Batched, layer-wise jet propagation through dense networks.
//!
//! A batch of `B` points with `m` jet axes is stored as one matrix of
//! `(1 + 2m)·B` rows: the value block first, then one block of first
//! derivatives per axis, then one block of second derivatives per axis.
//! Each dense layer is then a single matrix product over all blocks; the
//! bias only enters the value block. Activations mix the blocks through
//!
//! ```text
//! h   = σ(z)
//! h'  = σ'(z)·z'
//! h'' = σ''(z)·z'² + σ'(z)·z''
//! ```
//!
//! and [`backward`] applies the adjoint of exactly these rules.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use super::{JetSeed, Jets, ParamLayout, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sine,
}

impl Activation {
    /// `(σ, σ', σ'', σ''')` at `u`.
    #[inline]
    pub fn derivs(self, u: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Activation::Sine => {
                let (s, c) = u.sin_cos();
                [s, c, -s, -c]
            }
        }
    }

    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Sine => u.sin(),
        }
    }
}

/// Shape of a dense network; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            hidden_widths,
            output_dim,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Shape(format!(
                "all network dimensions must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.hidden_widths.len() + 2);
        v.push(self.input_dim);
        v.extend(&self.hidden_widths);
        v.push(self.output_dim);
        v
    }

    pub fn param_len(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Appends `{prefix}.{l}.weight` (`[out, in]`, row-major) and
    /// `{prefix}.{l}.bias` for every layer.
    pub fn push_layout(&self, prefix: &str, layout: &mut ParamLayout) {
        for (l, w) in self.layer_sizes().windows(2).enumerate() {
            layout.push(format!("{prefix}.{l}.weight"), vec![w[1], w[0]]);
            layout.push(format!("{prefix}.{l}.bias"), vec![w[1]]);
        }
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (n_in, n_out, offset)
        let sizes = self.layer_sizes();
        let mut off = 0;
        (0..sizes.len() - 1).map(move |l| {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let o = off;
            off += n_in * n_out + n_out;
            (n_in, n_out, o)
        })
    }
}

/// A batch of stacked jet streams (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    pub data: Array2<f64>,
    pub batch: usize,
    pub axes: usize,
}

impl Streams {
    pub fn new(data: Array2<f64>, batch: usize, axes: usize) -> Self {
        debug_assert_eq!(data.nrows(), (1 + 2 * axes) * batch);
        Streams { data, batch, axes }
    }

    pub fn zeros(batch: usize, axes: usize, width: usize) -> Self {
        Streams::new(Array2::zeros(((1 + 2 * axes) * batch, width)), batch, axes)
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn value(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![0..self.batch, ..])
    }

    pub fn first(&self, axis: usize) -> ArrayView2<'_, f64> {
        let b = self.batch;
        self.data.slice(s![(1 + axis) * b..(2 + axis) * b, ..])
    }

    pub fn second(&self, axis: usize) -> ArrayView2<'_, f64> {
        let (b, m) = (self.batch, self.axes);
        self.data
            .slice(s![(1 + m + axis) * b..(2 + m + axis) * b, ..])
    }

    pub fn value_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let b = self.batch;
        self.data.slice_mut(s![0..b, ..])
    }

    pub fn first_mut(&mut self, axis: usize) -> ArrayViewMut2<'_, f64> {
        let b = self.batch;
        self.data.slice_mut(s![(1 + axis) * b..(2 + axis) * b, ..])
    }

    pub fn second_mut(&mut self, axis: usize) -> ArrayViewMut2<'_, f64> {
        let (b, m) = (self.batch, self.axes);
        self.data
            .slice_mut(s![(1 + m + axis) * b..(2 + m + axis) * b, ..])
    }
}

struct LayerTape {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// σ', σ'', σ''' over the value block; absent for the linear output layer.
    derivs: Option<[Array2<f64>; 3]>,
}

/// Intermediate values retained by [`forward`] for [`backward`].
pub struct MlpTape {
    layers: Vec<LayerTape>,
    batch: usize,
    axes: usize,
}

fn weight<'a>(params: &'a [f64], n_in: usize, n_out: usize, off: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((n_out, n_in), &params[off..off + n_in * n_out])
        .expect("weight slice matches layer shape")
}

/// Propagates stacked jets through the network. `params` holds exactly this
/// network's parameters. Returns the output streams and, if `record`, the
/// tape needed by [`backward`].
pub fn forward(
    spec: &MlpSpec,
    params: &[f64],
    input: Streams,
    record: bool,
) -> (Streams, Option<MlpTape>) {
    debug_assert_eq!(params.len(), spec.param_len());
    debug_assert_eq!(input.width(), spec.input_dim);
    let (b, m) = (input.batch, input.axes);
    let n_layers = spec.hidden_widths.len() + 1;
    let mut tape = Vec::with_capacity(if record { n_layers } else { 0 });
    let mut x = input.data;
    for (l, (n_in, n_out, off)) in spec.layers().enumerate() {
        let w = weight(params, n_in, n_out, off);
        let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut z = x.dot(&w.t());
        for mut row in z.slice_mut(s![0..b, ..]).rows_mut() {
            for (v, bj) in row.iter_mut().zip(bias) {
                *v += bj;
            }
        }
        if l + 1 == n_layers {
            if record {
                tape.push(LayerTape {
                    input: x,
                    pre: z.clone(),
                    derivs: None,
                });
            }
            x = z;
            break;
        }
        let mut h = Array2::<f64>::zeros(z.raw_dim());
        let mut g = if record {
            Some([
                Array2::<f64>::zeros((b, n_out)),
                Array2::<f64>::zeros((b, n_out)),
                Array2::<f64>::zeros((b, n_out)),
            ])
        } else {
            None
        };
        for i in 0..b {
            for j in 0..n_out {
                let [t, g1, g2, g3] = spec.activation.derivs(z[[i, j]]);
                h[[i, j]] = t;
                for a in 0..m {
                    let zd = z[[(1 + a) * b + i, j]];
                    let ze = z[[(1 + m + a) * b + i, j]];
                    h[[(1 + a) * b + i, j]] = g1 * zd;
                    h[[(1 + m + a) * b + i, j]] = g2 * zd * zd + g1 * ze;
                }
                if let Some(g) = g.as_mut() {
                    g[0][[i, j]] = g1;
                    g[1][[i, j]] = g2;
                    g[2][[i, j]] = g3;
                }
            }
        }
        if record {
            tape.push(LayerTape {
                input: x,
                pre: z,
                derivs: g,
            });
        }
        x = h;
    }
    let out = Streams::new(x, b, m);
    let tape = record.then_some(MlpTape {
        layers: tape,
        batch: b,
        axes: m,
    });
    (out, tape)
}

/// Reverse sweep: accumulates `∂(Σ out_adjoint ⊙ out)/∂θ` into `grad` and,
/// if `want_input`, returns the adjoint of the input streams.
pub fn backward(
    spec: &MlpSpec,
    params: &[f64],
    tape: MlpTape,
    out_adjoint: Array2<f64>,
    grad: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    debug_assert_eq!(grad.len(), spec.param_len());
    let (b, m) = (tape.batch, tape.axes);
    let layer_info: Vec<_> = spec.layers().collect();
    let mut adj = out_adjoint;
    let n_layers = tape.layers.len();
    for (l, lt) in tape.layers.into_iter().enumerate().rev() {
        let (n_in, n_out, off) = layer_info[l];
        let zbar = match &lt.derivs {
            None => adj,
            Some([g1, g2, g3]) => {
                let z = &lt.pre;
                let mut zb = Array2::<f64>::zeros(z.raw_dim());
                for i in 0..b {
                    for j in 0..n_out {
                        let (d1, d2, d3) = (g1[[i, j]], g2[[i, j]], g3[[i, j]]);
                        let mut v = adj[[i, j]] * d1;
                        for a in 0..m {
                            let (rd, re) = ((1 + a) * b + i, (1 + m + a) * b + i);
                            let (zd, ze) = (z[[rd, j]], z[[re, j]]);
                            let (hd, he) = (adj[[rd, j]], adj[[re, j]]);
                            v += hd * d2 * zd + he * (d3 * zd * zd + d2 * ze);
                            zb[[rd, j]] = hd * d1 + 2.0 * he * d2 * zd;
                            zb[[re, j]] = he * d1;
                        }
                        zb[[i, j]] = v;
                    }
                }
                zb
            }
        };
        {
            let (wgrad, rest) = grad[off..].split_at_mut(n_in * n_out);
            let mut gw = ArrayViewMut2::from_shape((n_out, n_in), wgrad)
                .expect("weight gradient matches layer shape");
            general_mat_mul(1.0, &zbar.t(), &lt.input, 1.0, &mut gw);
            let gb = &mut rest[..n_out];
            for (acc, col) in gb.iter_mut().zip(zbar.slice(s![0..b, ..]).axis_iter(Axis(1))) {
                *acc += col.sum();
            }
        }
        if l > 0 || want_input {
            let w = weight(params, n_in, n_out, off);
            adj = zbar.dot(&w);
        } else {
            adj = Array2::zeros((0, 0));
        }
        let _ = n_layers;
    }
    want_input.then_some(adj)
}

/// Seeds input streams for points `xs` (rows) with unit derivative along
/// each requested input axis scaled by `axis_scale[a]`.
pub fn seed_inputs(xs: ArrayView2<'_, f64>, axes: &[usize], axis_scale: &[f64]) -> Streams {
    let b = xs.nrows();
    let mut st = Streams::zeros(b, axes.len(), xs.ncols());
    st.value_mut().assign(&xs);
    for (a, &ax) in axes.iter().enumerate() {
        st.first_mut(a).column_mut(ax).fill(axis_scale[a]);
    }
    st
}

/// A bare network as a [`ScalarField`]: input coordinates map directly to the
/// network input; the field is output unit 0.
#[derive(Debug, Clone)]
pub struct MlpField {
    pub spec: MlpSpec,
}

impl MlpField {
    fn run(&self, inputs: &[f64], params: &[f64], axes: &[usize], record: bool) -> (Streams, Option<MlpTape>) {
        let xs = ArrayView2::from_shape((1, inputs.len()), inputs).expect("row");
        let st = seed_inputs(xs, axes, &vec![1.0; axes.len()]);
        forward(&self.spec, params, st, record)
    }
}

fn jets_from(out: &Streams, col: usize) -> Jets {
    Jets {
        value: out.value()[[0, col]],
        first: (0..out.axes).map(|a| out.first(a)[[0, col]]).collect(),
        second: (0..out.axes).map(|a| out.second(a)[[0, col]]).collect(),
    }
}

impl ScalarField for MlpField {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn param_len(&self) -> usize {
        self.spec.param_len()
    }

    fn value(&self, inputs: &[f64], params: &[f64]) -> f64 {
        self.run(inputs, params, &[], false).0.value()[[0, 0]]
    }

    fn jets(&self, inputs: &[f64], params: &[f64], axes: &[usize]) -> Jets {
        jets_from(&self.run(inputs, params, axes, false).0, 0)
    }

    fn backprop(
        &self,
        inputs: &[f64],
        params: &[f64],
        axes: &[usize],
        seed: &mut dyn FnMut(&Jets) -> JetSeed,
        grad: &mut [f64],
    ) -> Jets {
        let (out, tape) = self.run(inputs, params, axes, true);
        let jets = jets_from(&out, 0);
        let s = seed(&jets);
        let mut adj = Streams::zeros(1, axes.len(), self.spec.output_dim);
        adj.value_mut()[[0, 0]] = s.value;
        for (a, w) in s.second.iter().enumerate() {
            adj.second_mut(a)[[0, 0]] = *w;
        }
        backward(&self.spec, params, tape.expect("recorded"), adj.data, grad, false);
        jets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_params, grad_params_of_laplacian, laplacian, ExprBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..spec.param_len()).map(|_| rng.gen_range(-0.8..0.8)).collect()
    }

    #[test]
    fn layer_bookkeeping() {
        let spec = MlpSpec::new(3, vec![4, 5], 2, Activation::Tanh).unwrap();
        assert_eq!(spec.layer_sizes(), vec![3, 4, 5, 2]);
        assert_eq!(spec.param_len(), 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
        let mut layout = ParamLayout::new();
        spec.push_layout("net", &mut layout);
        assert_eq!(layout.total_len(), spec.param_len());
        assert_eq!(layout.get("net.1.weight").unwrap().shape, vec![5, 4]);
        assert!(MlpSpec::new(0, vec![4], 1, Activation::Tanh).is_err());
        assert!(MlpSpec::new(3, vec![0], 1, Activation::Tanh).is_err());
    }

    #[test]
    fn matches_expression_graph_exactly_in_structure() {
        // Same network through the layer-wise kernel and the scalar graph.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Tanh, Activation::Sine] {
            let spec = MlpSpec::new(3, vec![5, 4], 1, act).unwrap();
            let theta = random_params(&spec, &mut rng);
            let mut b = ExprBuilder::new(3, spec.param_len());
            let xs: Vec<_> = (0..3).map(|i| b.input(i)).collect();
            let out = b.mlp(&xs, &spec, 0)[0];
            let expr = b.finish(out);
            let field = MlpField { spec: spec.clone() };
            let x = [0.3, -0.2, 0.9];
            let axes = [0, 1, 2];
            let lj = field.jets(&x, &theta, &axes);
            let ej = expr.jets(&x, &theta, &axes);
            assert!((lj.value - ej.value).abs() < 1e-13);
            for a in 0..3 {
                assert!((lj.first[a] - ej.first[a]).abs() < 1e-12);
                assert!((lj.second[a] - ej.second[a]).abs() < 1e-12);
            }
            let g1 = grad_params_of_laplacian(&field, &x, &theta, &axes).unwrap();
            let g2 = grad_params_of_laplacian(&expr, &x, &theta, &axes).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
            let g1 = grad_params(&field, &x, &theta).unwrap();
            let g2 = grad_params(&expr, &x, &theta).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_rows_agree_with_single_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = MlpSpec::new(3, vec![6, 6], 1, Activation::Tanh).unwrap();
        let theta = random_params(&spec, &mut rng);
        let pts: Vec<[f64; 3]> = (0..5)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let flat: Vec<f64> = pts.iter().flatten().copied().collect();
        let xs = ArrayView2::from_shape((5, 3), &flat).unwrap();
        let (out, _) = forward(&spec, &theta, seed_inputs(xs, &[0, 2], &[1.0, 1.0]), false);
        let field = MlpField { spec: spec.clone() };
        for (i, p) in pts.iter().enumerate() {
            let lap = laplacian(&field, p, &theta, &[0, 2]).unwrap();
            let batched = out.second(0)[[i, 0]] + out.second(1)[[i, 0]];
            assert!((lap - batched).abs() < 1e-12);
        }
    }
}
