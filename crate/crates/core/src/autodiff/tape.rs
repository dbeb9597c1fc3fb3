//! Computation record and reverse sweep.

use super::conv::{self, ConvGeometry};
use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, MatView, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Act(Var, Activation),
    Exp(Var),
    LogSoftmax(Var),
    Nll { logp: Var, targets: Vec<usize> },
    Sum(Var),
    Mean(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        cols: Vec<T>,
    },
    Dropout { input: Var, mask: Vec<T> },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    SliceCols { input: Var, start: usize },
    RowDot(Var, Var),
    MulCol(Var, Var),
}

#[derive(Debug)]
pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub needs_grad: bool,
}

/// Ordered record of every operation of one forward pass. Nodes are appended
/// in execution order, so inputs always precede the node that consumes them.
#[derive(Debug, Default)]
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `v`; zeros when the loss does not depend on it.
    pub fn get(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        let shape = tape.value(v).shape();
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => Tensor::new(shape.to_vec(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Add the gradient of every parameter leaf on `tape` into `store`.
    pub fn accumulate_into(&self, tape: &Tape<T>, store: &mut ParamStore<T>) {
        for (i, node) in tape.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, self.grads.get(i).and_then(Option::as_ref))
            {
                let dst = store.get_mut(*id).grad.data_mut();
                for (d, s) in dst.iter_mut().zip(g) {
                    *d = *d + *s;
                }
            }
        }
        store.set_grads_ready(true);
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf | Op::Param(_) => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input (gradients are reported for it).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let v = self.push(value, Op::Leaf, &[]);
        self.nodes[v.0].needs_grad = true;
        v
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Param(id), &[]);
        self.nodes[v.0].needs_grad = true;
        v
    }

    /// Reverse sweep from the scalar `loss`. Visits each node at or before
    /// `loss` once, in reverse record order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn accum_with(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl Fn(usize) -> T) {
        if let Some(dst) = self.slot(grads, v) {
            for (k, d) in dst.iter_mut().enumerate() {
                *d = *d + f(k);
            }
        }
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = av.as_matrix();
                let n = bv.as_matrix().1;
                let gv = MatView::new(g, m, n);
                if let Some(da) = self.slot(grads, *a) {
                    gemm(gv, MatView::new(bv.data(), k, n).t(), da, T::one());
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm(MatView::new(av.data(), m, k).t(), gv, db, T::one());
                }
            }
            Op::Add(a, b) => {
                self.accum_with(grads, *a, |k| g[k]);
                self.accum_with(grads, *b, |k| g[k]);
            }
            Op::Sub(a, b) => {
                self.accum_with(grads, *a, |k| g[k]);
                self.accum_with(grads, *b, |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accum_with(grads, *a, |k| g[k] * bd[k]);
                self.accum_with(grads, *b, |k| g[k] * ad[k]);
            }
            Op::Scale(a, c) => self.accum_with(grads, *a, |k| g[k] * *c),
            Op::AddBias(x, b) => {
                self.accum_with(grads, *x, |k| g[k]);
                if let Some(db) = self.slot(grads, *b) {
                    let f = db.len();
                    for row in g.chunks_exact(f) {
                        for (d, s) in db.iter_mut().zip(row) {
                            *d = *d + *s;
                        }
                    }
                }
            }
            Op::Act(x, kind) => {
                let xd = self.value(*x).data();
                match kind {
                    Activation::Relu => self.accum_with(grads, *x, |k| {
                        if xd[k] > T::zero() {
                            g[k]
                        } else {
                            T::zero()
                        }
                    }),
                    Activation::Tanh => {
                        self.accum_with(grads, *x, |k| g[k] * (T::one() - out[k] * out[k]))
                    }
                    Activation::Sigmoid => {
                        self.accum_with(grads, *x, |k| g[k] * out[k] * (T::one() - out[k]))
                    }
                }
            }
            Op::Exp(x) => self.accum_with(grads, *x, |k| g[k] * out[k]),
            Op::LogSoftmax(x) => {
                let (_, c) = node.value.as_matrix();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((drow, grow), orow) in dx
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(out.chunks_exact(c))
                    {
                        let gs: T = grow.iter().copied().sum();
                        for j in 0..c {
                            drow[j] = drow[j] + grow[j] - orow[j].exp() * gs;
                        }
                    }
                }
            }
            Op::Nll { logp, targets } => {
                let (_, c) = self.value(*logp).as_matrix();
                let scale = g[0] / T::from_usize(targets.len()).unwrap();
                if let Some(d) = self.slot(grads, *logp) {
                    for (r, &t) in targets.iter().enumerate() {
                        d[r * c + t] = d[r * c + t] - scale;
                    }
                }
            }
            Op::Sum(x) => self.accum_with(grads, *x, |_| g[0]),
            Op::Mean(x) => {
                let n = T::from_usize(self.value(*x).numel()).unwrap();
                self.accum_with(grads, *x, |_| g[0] / n)
            }
            Op::Embedding { table, ids } => {
                let e = self.value(*table).as_matrix().1;
                if let Some(dt) = self.slot(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..e {
                            dt[id * e + j] = dt[id * e + j] + g[r * e + j];
                        }
                    }
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let gp = conv::batch_major_to_channel_major(g, geom);
                let kv = self.value(*kernel).data();
                if let Some(dk) = self.slot(grads, *kernel) {
                    conv::kernel_grad(&gp, cols, geom, dk);
                }
                if let Some(b) = bias {
                    if let Some(db) = self.slot(grads, *b) {
                        let n = geom.batch * geom.out_h * geom.out_w;
                        for (o, d) in db.iter_mut().enumerate() {
                            *d = *d + gp[o * n..(o + 1) * n].iter().copied().sum();
                        }
                    }
                }
                if let Some(dx) = self.slot(grads, *input) {
                    conv::input_grad(&gp, kv, geom, dx);
                }
            }
            Op::Dropout { input, mask } => self.accum_with(grads, *input, |k| g[k] * mask[k]),
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let (b, f) = node.value.as_matrix();
                let gam = self.value(*gamma).data();
                if let Some(dg) = self.slot(grads, *gamma) {
                    for r in 0..b {
                        for j in 0..f {
                            dg[j] = dg[j] + g[r * f + j] * xhat[r * f + j];
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for r in 0..b {
                        for j in 0..f {
                            db[j] = db[j] + g[r * f + j];
                        }
                    }
                }
                if let Some(dx) = self.slot(grads, *input) {
                    if *training {
                        let bn = T::from_usize(b).unwrap();
                        for j in 0..f {
                            let mut s1 = T::zero();
                            let mut s2 = T::zero();
                            for r in 0..b {
                                let dxh = g[r * f + j] * gam[j];
                                s1 = s1 + dxh;
                                s2 = s2 + dxh * xhat[r * f + j];
                            }
                            for r in 0..b {
                                let dxh = g[r * f + j] * gam[j];
                                dx[r * f + j] = dx[r * f + j]
                                    + inv_std[j] / bn * (bn * dxh - s1 - xhat[r * f + j] * s2);
                            }
                        }
                    } else {
                        for r in 0..b {
                            for j in 0..f {
                                dx[r * f + j] = dx[r * f + j] + g[r * f + j] * gam[j] * inv_std[j];
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => self.accum_with(grads, *x, |k| g[k]),
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.as_matrix();
                let mut off = 0;
                for p in parts {
                    let c = self.value(*p).as_matrix().1;
                    if let Some(dp) = self.slot(grads, *p) {
                        for r in 0..rows {
                            for j in 0..c {
                                dp[r * c + j] = dp[r * c + j] + g[r * total + off + j];
                            }
                        }
                    }
                    off += c;
                }
            }
            Op::SliceCols { input, start } => {
                let (rows, c) = node.value.as_matrix();
                let total = self.value(*input).as_matrix().1;
                if let Some(dx) = self.slot(grads, *input) {
                    for r in 0..rows {
                        for j in 0..c {
                            dx[r * total + start + j] = dx[r * total + start + j] + g[r * c + j];
                        }
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (_, c) = self.value(*a).as_matrix();
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.accum_with(grads, *a, |k| g[k / c] * bd[k]);
                self.accum_with(grads, *b, |k| g[k / c] * ad[k]);
            }
            Op::MulCol(x, s) => {
                let (rows, c) = self.value(*x).as_matrix();
                let (xd, sd) = (self.value(*x).data(), self.value(*s).data());
                self.accum_with(grads, *x, |k| g[k] * sd[k / c]);
                if let Some(ds) = self.slot(grads, *s) {
                    for r in 0..rows {
                        let mut acc = T::zero();
                        for j in 0..c {
                            acc = acc + g[r * c + j] * xd[r * c + j];
                        }
                        ds[r] = ds[r] + acc;
                    }
                }
            }
        }
    }
}
