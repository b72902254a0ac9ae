//! Expression-graph scalar fields built from a fixed set of smooth primitives.

use super::{JetSeed, Jets, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Input(usize),
    Param(usize),
    Const(f64),
    Add(usize, usize),
    Mul(usize, usize),
    Unary(Op, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Tanh,
    Sin,
    Cos,
    Sqrt,
    Recip,
    Exp,
}

/// Appends nodes in evaluation order; a finished graph is an [`Expr`].
#[derive(Debug, Clone)]
pub struct ExprBuilder {
    nodes: Vec<Node>,
    input_dim: usize,
    param_len: usize,
}

impl ExprBuilder {
    pub fn new(input_dim: usize, param_len: usize) -> Self {
        ExprBuilder {
            nodes: Vec::new(),
            input_dim,
            param_len,
        }
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, i: usize) -> NodeId {
        assert!(i < self.input_dim, "input {i} out of range");
        self.push(Node::Input(i))
    }

    pub fn param(&mut self, j: usize) -> NodeId {
        assert!(j < self.param_len, "parameter {j} out of range");
        self.push(Node::Param(j))
    }

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Node::Const(c))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Add(a.0, b.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Mul(a.0, b.0))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Tanh, a.0))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Sin, a.0))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Cos, a.0))
    }

    /// Square root; the argument must stay positive where evaluated.
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Sqrt, a.0))
    }

    /// `1/a`; the argument must stay away from zero.
    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Recip, a.0))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Unary(Op::Exp, a.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(-1.0, b);
        self.add(a, nb)
    }

    pub fn scale(&mut self, c: f64, a: NodeId) -> NodeId {
        let c = self.constant(c);
        self.mul(c, a)
    }

    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        let mut it = terms.iter().copied();
        let first = it.next().unwrap_or_else(|| self.constant(0.0));
        it.fold(first, |acc, t| self.add(acc, t))
    }

    /// `Σ_i w_i·x_i + b` with weights and bias taken from parameter slots.
    pub fn affine(&mut self, xs: &[NodeId], weight_params: &[usize], bias_param: usize) -> NodeId {
        assert_eq!(xs.len(), weight_params.len());
        let mut terms = Vec::with_capacity(xs.len() + 1);
        for (&x, &w) in xs.iter().zip(weight_params) {
            let w = self.param(w);
            terms.push(self.mul(w, x));
        }
        terms.push(self.param(bias_param));
        self.sum(&terms)
    }

    /// Dense tanh/sine network over `xs` with the same flat parameter layout
    /// as [`super::mlp::MlpSpec`] (row-major weights, then bias, per layer),
    /// starting at parameter `offset`. Returns the output nodes.
    pub fn mlp(
        &mut self,
        xs: &[NodeId],
        spec: &super::MlpSpec,
        offset: usize,
    ) -> Vec<NodeId> {
        assert_eq!(xs.len(), spec.input_dim);
        let sizes = spec.layer_sizes();
        let mut cur: Vec<NodeId> = xs.to_vec();
        let mut off = offset;
        for (l, win) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (win[0], win[1]);
            let bias0 = off + n_in * n_out;
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let ws: Vec<usize> = (0..n_in).map(|i| off + o * n_in + i).collect();
                let z = self.affine(&cur, &ws, bias0 + o);
                let last = l + 2 == sizes.len();
                next.push(if last {
                    z
                } else {
                    match spec.activation {
                        super::Activation::Tanh => self.tanh(z),
                        super::Activation::Sine => self.sin(z),
                    }
                });
            }
            off = bias0 + n_out;
            cur = next;
        }
        cur
    }

    pub fn finish(self, output: NodeId) -> Expr {
        Expr {
            nodes: self.nodes,
            output: output.0,
            input_dim: self.input_dim,
            param_len: self.param_len,
        }
    }
}

/// A scalar field defined by an expression graph.
#[derive(Debug, Clone)]
pub struct Expr {
    nodes: Vec<Node>,
    output: usize,
    input_dim: usize,
    param_len: usize,
}

/// `(g, g', g'', g''')` at `u`.
fn unary_derivs(op: Op, u: f64) -> [f64; 4] {
    match op {
        Op::Tanh => {
            let t = u.tanh();
            let s = 1.0 - t * t;
            [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
        }
        Op::Sin => {
            let (s, c) = u.sin_cos();
            [s, c, -s, -c]
        }
        Op::Cos => {
            let (s, c) = u.sin_cos();
            [c, -s, -c, s]
        }
        Op::Sqrt => {
            let r = u.sqrt();
            [r, 0.5 / r, -0.25 / (u * r), 0.375 / (u * u * r)]
        }
        Op::Recip => {
            let r = 1.0 / u;
            [r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
        }
        Op::Exp => {
            let e = u.exp();
            [e; 4]
        }
    }
}

struct Sweep {
    v: Vec<f64>,
    d: Vec<f64>,
    dd: Vec<f64>,
}

impl Expr {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn forward(&self, x: &[f64], theta: &[f64], axes: &[usize]) -> Sweep {
        let n = self.nodes.len();
        let m = axes.len();
        let mut v = vec![0.0; n];
        let mut d = vec![0.0; n * m];
        let mut dd = vec![0.0; n * m];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Input(k) => {
                    v[i] = x[k];
                    for (a, &ax) in axes.iter().enumerate() {
                        d[i * m + a] = if ax == k { 1.0 } else { 0.0 };
                    }
                }
                Node::Param(j) => v[i] = theta[j],
                Node::Const(c) => v[i] = c,
                Node::Add(p, q) => {
                    v[i] = v[p] + v[q];
                    for a in 0..m {
                        d[i * m + a] = d[p * m + a] + d[q * m + a];
                        dd[i * m + a] = dd[p * m + a] + dd[q * m + a];
                    }
                }
                Node::Mul(p, q) => {
                    v[i] = v[p] * v[q];
                    for a in 0..m {
                        let (dp, dq) = (d[p * m + a], d[q * m + a]);
                        d[i * m + a] = dp * v[q] + v[p] * dq;
                        dd[i * m + a] =
                            dd[p * m + a] * v[q] + 2.0 * dp * dq + v[p] * dd[q * m + a];
                    }
                }
                Node::Unary(op, p) => {
                    let [g, g1, g2, _] = unary_derivs(op, v[p]);
                    v[i] = g;
                    for a in 0..m {
                        let dp = d[p * m + a];
                        d[i * m + a] = g1 * dp;
                        dd[i * m + a] = g2 * dp * dp + g1 * dd[p * m + a];
                    }
                }
            }
        }
        Sweep { v, d, dd }
    }

    fn jets_at(&self, sweep: &Sweep, m: usize) -> Jets {
        let o = self.output;
        Jets {
            value: sweep.v[o],
            first: sweep.d[o * m..(o + 1) * m].to_vec(),
            second: sweep.dd[o * m..(o + 1) * m].to_vec(),
        }
    }
}

impl ScalarField for Expr {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn param_len(&self) -> usize {
        self.param_len
    }

    fn value(&self, inputs: &[f64], params: &[f64]) -> f64 {
        self.forward(inputs, params, &[]).v[self.output]
    }

    fn jets(&self, inputs: &[f64], params: &[f64], axes: &[usize]) -> Jets {
        let sweep = self.forward(inputs, params, axes);
        self.jets_at(&sweep, axes.len())
    }

    fn backprop(
        &self,
        inputs: &[f64],
        params: &[f64],
        axes: &[usize],
        seed: &mut dyn FnMut(&Jets) -> JetSeed,
        grad: &mut [f64],
    ) -> Jets {
        let m = axes.len();
        let n = self.nodes.len();
        let Sweep { v, d, dd } = self.forward(inputs, params, axes);
        let jets = Jets {
            value: v[self.output],
            first: d[self.output * m..(self.output + 1) * m].to_vec(),
            second: dd[self.output * m..(self.output + 1) * m].to_vec(),
        };
        let s = seed(&jets);
        let mut vb = vec![0.0; n];
        let mut db = vec![0.0; n * m];
        let mut ddb = vec![0.0; n * m];
        vb[self.output] = s.value;
        for (a, w) in s.second.iter().enumerate().take(m) {
            ddb[self.output * m + a] = *w;
        }
        for i in (0..n).rev() {
            let node = self.nodes[i];
            match node {
                Node::Input(_) | Node::Const(_) => {}
                Node::Param(j) => grad[j] += vb[i],
                Node::Add(p, q) => {
                    vb[p] += vb[i];
                    vb[q] += vb[i];
                    for a in 0..m {
                        db[p * m + a] += db[i * m + a];
                        db[q * m + a] += db[i * m + a];
                        ddb[p * m + a] += ddb[i * m + a];
                        ddb[q * m + a] += ddb[i * m + a];
                    }
                }
                Node::Mul(p, q) => {
                    vb[p] += vb[i] * v[q];
                    vb[q] += vb[i] * v[p];
                    for a in 0..m {
                        let (gd, gdd) = (db[i * m + a], ddb[i * m + a]);
                        let (dp, dq) = (d[p * m + a], d[q * m + a]);
                        vb[p] += gd * dq + gdd * dd[q * m + a];
                        vb[q] += gd * dp + gdd * dd[p * m + a];
                        db[p * m + a] += gd * v[q] + 2.0 * gdd * dq;
                        db[q * m + a] += gd * v[p] + 2.0 * gdd * dp;
                        ddb[p * m + a] += gdd * v[q];
                        ddb[q * m + a] += gdd * v[p];
                    }
                }
                Node::Unary(op, p) => {
                    let [_, g1, g2, g3] = unary_derivs(op, v[p]);
                    vb[p] += vb[i] * g1;
                    for a in 0..m {
                        let (gd, gdd) = (db[i * m + a], ddb[i * m + a]);
                        let (dp, ddp) = (d[p * m + a], dd[p * m + a]);
                        vb[p] += gd * g2 * dp + gdd * (g3 * dp * dp + g2 * ddp);
                        db[p * m + a] += gd * g1 + 2.0 * gdd * g2 * dp;
                        ddb[p * m + a] += gdd * g1;
                    }
                }
            }
        }
        jets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{eval, grad_params, grad_params_of_laplacian, laplacian};

    #[test]
    fn primitive_values() {
        let mut b = ExprBuilder::new(1, 0);
        let x = b.input(0);
        let t = b.tanh(x);
        assert_eq!(eval(&b.finish(t), &[0.0], &[]).unwrap(), 0.0);

        let mut b = ExprBuilder::new(2, 0);
        let (x, y) = (b.input(0), b.input(1));
        let xy = b.mul(x, y);
        assert_eq!(eval(&b.finish(xy), &[2.0, 3.0], &[]).unwrap(), 6.0);
    }

    #[test]
    fn dimension_and_axis_errors() {
        let mut b = ExprBuilder::new(2, 0);
        let x = b.input(0);
        let e = b.finish(x);
        assert!(eval(&e, &[1.0], &[]).is_err());
        assert!(laplacian(&e, &[1.0, 2.0], &[], &[2]).is_err());
        assert!(grad_params_of_laplacian(&e, &[1.0, 2.0], &[], &[5]).is_err());
    }

    #[test]
    fn squared_norm_has_laplacian_six() {
        let mut b = ExprBuilder::new(3, 0);
        let sq: Vec<_> = (0..3)
            .map(|i| {
                let x = b.input(i);
                b.mul(x, x)
            })
            .collect();
        let s = b.sum(&sq);
        let e = b.finish(s);
        for p in [[0.0, 0.0, 0.0], [1.3, -2.0, 0.7]] {
            assert_eq!(laplacian(&e, &p, &[], &[0, 1, 2]).unwrap(), 6.0);
        }
    }

    #[test]
    fn sine_second_derivative() {
        let mut b = ExprBuilder::new(1, 0);
        let x = b.input(0);
        let kx = b.scale(2.0, x);
        let s = b.sin(kx);
        let e = b.finish(s);
        let lap = laplacian(&e, &[0.3], &[], &[0]).unwrap();
        assert!((lap - (-4.0 * 0.6f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn linear_parameter_gradient_is_the_input() {
        let mut b = ExprBuilder::new(1, 1);
        let (x, w) = (b.input(0), b.param(0));
        let wx = b.mul(w, x);
        let e = b.finish(wx);
        assert_eq!(grad_params(&e, &[2.5], &[7.0]).unwrap(), vec![2.5]);

        let mut b = ExprBuilder::new(1, 2);
        let c = b.constant(4.0);
        let e = b.finish(c);
        assert_eq!(grad_params(&e, &[2.5], &[7.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn affine_laplacian_has_no_parameter_dependence() {
        // w0·x + w1·y + w2: second derivatives vanish identically.
        let mut b = ExprBuilder::new(2, 3);
        let (x, y) = (b.input(0), b.input(1));
        let out = b.affine(&[x, y], &[0, 1], 2);
        let e = b.finish(out);
        let g = grad_params_of_laplacian(&e, &[0.2, -0.4], &[1.0, 2.0, 3.0], &[0, 1]).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn extra_primitives_match_closed_forms() {
        // f = θ·exp(x)·cos(y)·sqrt(z)/(x + 2)
        let mut b = ExprBuilder::new(3, 1);
        let (x, y, z, t) = (b.input(0), b.input(1), b.input(2), b.param(0));
        let ex = b.exp(x);
        let cy = b.cos(y);
        let sz = b.sqrt(z);
        let two = b.constant(2.0);
        let x2 = b.add(x, two);
        let inv = b.recip(x2);
        let f = b.mul(ex, cy);
        let f = b.mul(f, sz);
        let f = b.mul(f, inv);
        let f = b.mul(f, t);
        let e = b.finish(f);
        let (px, py, pz, th) = (0.4f64, -1.1f64, 0.8f64, 1.7f64);
        let g = |x: f64| x.exp() / (x + 2.0);
        let gxx = |x: f64| x.exp() * ((x + 2.0).powi(2) - 2.0 * (x + 2.0) + 2.0) / (x + 2.0).powi(3);
        let h = py.cos() * pz.sqrt();
        let expect = th * (gxx(px) * h - g(px) * h - g(px) * py.cos() * 0.25 * pz.powf(-1.5));
        let lap = laplacian(&e, &[px, py, pz], &[th], &[0, 1, 2]).unwrap();
        assert!((lap - expect).abs() <= 1e-13 * expect.abs(), "{lap} vs {expect}");
        let d = grad_params_of_laplacian(&e, &[px, py, pz], &[th], &[0, 1, 2]).unwrap();
        assert!((d[0] - expect / th).abs() <= 1e-13 * expect.abs());
        let sub = {
            let mut b = ExprBuilder::new(2, 0);
            let (x, y) = (b.input(0), b.input(1));
            let o = b.sub(x, y);
            b.finish(o)
        };
        assert_eq!(eval(&sub, &[5.0, 2.0], &[]).unwrap(), 3.0);
    }
}
