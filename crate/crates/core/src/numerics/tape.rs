//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] is built fresh for every forward pass. Each recorded node keeps
//! its forward value; backward walks the nodes in reverse id order, which is a
//! valid topological order because inputs always precede outputs.

use super::{NumericsError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `[m,k]·[k,n]`, with rank-1 operands treated as a row (lhs) or column (rhs).
    MatMul,
    /// Valid padding, stride 1. Inputs: image `[C,H,W]` (or `[1,C,H,W]`),
    /// kernel `[O,C,KH,KW]`, optional bias `[O]`.
    Conv2d,
    Add,
    Mul,
    Scale(f32),
    Tanh,
    Sigmoid,
    Relu,
    /// Over a rank-1 input.
    LogSoftmax,
    Sum,
    Mean,
    /// Row `index` of a `[V,D]` table.
    EmbeddingLookup(usize),
    /// Along axis 0.
    Concat,
    /// Rows `start..start+len` along axis 0.
    Slice { start: usize, len: usize },
    Reshape(Vec<usize>),
    /// Shannon entropy (nats) of `softmax(logits)` for rank-1 logits.
    Entropy,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Conv2d => "conv2d",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::EmbeddingLookup(_) => "embedding_lookup",
            OpKind::Concat => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape(_) => "reshape",
            OpKind::Entropy => "entropy",
        }
    }
}

#[derive(Debug)]
enum NodeKind {
    Leaf { trainable: bool },
    Op { kind: OpKind, inputs: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    kind: NodeKind,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
#[derive(Debug, Clone)]
pub struct GradMap {
    entries: Vec<(Var, Tensor)>,
}

impl GradMap {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.entries
            .binary_search_by_key(&var, |(v, _)| *v)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Removes and returns the gradient for `var`.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        let i = self.entries.binary_search_by_key(&var, |(v, _)| *v).ok()?;
        Some(self.entries.remove(i).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.entries.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, NodeKind::Leaf { trainable: false }, false)
    }

    /// Trainable leaf; receives an entry in the [`GradMap`] returned by
    /// [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, NodeKind::Leaf { trainable: true }, true)
    }

    /// Leaf that is trainable or constant depending on `trainable`.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        if trainable {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, kind: NodeKind, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            kind,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `kind` on `inputs` and appends the result to the tape.
    pub fn record(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, NumericsError> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = forward(&kind, &values)?;
        if !out.is_finite() {
            return Err(NumericsError::NonFinite {
                context: format!("output of {}", kind.name()),
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(
            out,
            NodeKind::Op {
                kind,
                inputs: inputs.to_vec(),
            },
            requires_grad,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::MatMul, &[a, b])
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var, NumericsError> {
        match bias {
            Some(b) => self.record(OpKind::Conv2d, &[input, kernel, b]),
            None => self.record(OpKind::Conv2d, &[input, kernel]),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var, NumericsError> {
        self.record(OpKind::Scale(factor), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Sigmoid, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Relu, &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::LogSoftmax, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Mean, &[a])
    }

    pub fn embedding(&mut self, table: Var, index: usize) -> Result<Var, NumericsError> {
        self.record(OpKind::EmbeddingLookup(index), &[table])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        self.record(OpKind::Concat, parts)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        self.record(OpKind::Slice { start, len }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        self.record(OpKind::Reshape(shape.to_vec()), &[a])
    }

    pub fn entropy(&mut self, logits: Var) -> Result<Var, NumericsError> {
        self.record(OpKind::Entropy, &[logits])
    }

    /// Scalar element `index` of a rank-1 node.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, NumericsError> {
        let s = self.slice(a, index, 1)?;
        self.sum(s)
    }

    /// `x·W + b` for a rank-1 `x`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, NumericsError> {
        let xw = self.matmul(x, weight)?;
        self.add(xw, bias)
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to every
    /// trainable leaf. Leaves the loss does not depend on get zero tensors.
    pub fn backward(&self, loss: Var) -> Result<GradMap, NumericsError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(NumericsError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Vec::new();
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(g) = grads[id].take() else {
                if let NodeKind::Leaf { trainable: true } = node.kind {
                    out.push((Var(id), Tensor::zeros(node.value.shape())));
                }
                continue;
            };
            match &node.kind {
                NodeKind::Leaf { trainable } => {
                    if *trainable {
                        out.push((Var(id), Tensor::from_parts(node.value.shape().to_vec(), g)));
                    }
                }
                NodeKind::Op { kind, inputs } => {
                    if node.requires_grad {
                        self.propagate(kind, inputs, &node.value, &g, &mut grads);
                    }
                }
            }
        }
        // Trainable leaves recorded after the loss cannot influence it.
        for (id, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if let NodeKind::Leaf { trainable: true } = node.kind {
                out.push((Var(id), Tensor::zeros(node.value.shape())));
            }
        }
        out.sort_by_key(|(v, _)| *v);
        Ok(GradMap { entries: out })
    }

    fn propagate(
        &self,
        kind: &OpKind,
        inputs: &[Var],
        out: &Tensor,
        g: &[f32],
        grads: &mut [Option<Vec<f32>>],
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f32])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match kind {
            OpKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k, n) = matmul_dims(val(a).shape(), val(b).shape());
                let (av, bv) = (val(a).data(), val(b).data());
                if needs(a) {
                    acc(a, &mut |da| {
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            for i in 0..m {
                                da[i * k + p] += dot(brow, &g[i * n..(i + 1) * n]);
                            }
                        }
                    });
                }
                if needs(b) {
                    acc(b, &mut |db| {
                        let mut nz = Vec::with_capacity(m);
                        for p in 0..k {
                            let drow = &mut db[p * n..(p + 1) * n];
                            nz.clear();
                            nz.extend((0..m).filter(|&i| av[i * k + p] != 0.0));
                            let mut quads = nz.chunks_exact(4);
                            for q in quads.by_ref() {
                                let (s0, s1, s2, s3) =
                                    (av[q[0] * k + p], av[q[1] * k + p], av[q[2] * k + p], av[q[3] * k + p]);
                                let (g0, g1, g2, g3) = (
                                    &g[q[0] * n..(q[0] + 1) * n],
                                    &g[q[1] * n..(q[1] + 1) * n],
                                    &g[q[2] * n..(q[2] + 1) * n],
                                    &g[q[3] * n..(q[3] + 1) * n],
                                );
                                for j in 0..n {
                                    drow[j] += (s0 * g0[j] + s1 * g1[j]) + (s2 * g2[j] + s3 * g3[j]);
                                }
                            }
                            for &i in quads.remainder() {
                                axpy(av[i * k + p], &g[i * n..(i + 1) * n], drow);
                            }
                        }
                    });
                }
            }
            OpKind::Conv2d => {
                let x = val(inputs[0]);
                let w = val(inputs[1]);
                let geo = ConvGeometry::new(x.shape(), w.shape());
                if inputs.len() == 3 {
                    acc(inputs[2], &mut |db| {
                        let plane = geo.oh * geo.ow;
                        for (o, d) in db.iter_mut().enumerate() {
                            *d += g[o * plane..(o + 1) * plane].iter().sum::<f32>();
                        }
                    });
                }
                if needs(inputs[1]) {
                    acc(inputs[1], &mut |dw| conv2d_kernel_grad(&geo, x.data(), g, dw));
                }
                if needs(inputs[0]) {
                    acc(inputs[0], &mut |dx| conv2d_input_grad(&geo, w.data(), g, dx));
                }
            }
            OpKind::Add => {
                for &v in inputs {
                    acc(v, &mut |d| axpy(1.0, g, d));
                }
            }
            OpKind::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (av, bv) = (val(a).data(), val(b).data());
                acc(a, &mut |d| {
                    for ((d, &gi), &bi) in d.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                });
                acc(b, &mut |d| {
                    for ((d, &gi), &ai) in d.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                });
            }
            OpKind::Scale(s) => acc(inputs[0], &mut |d| axpy(*s, g, d)),
            OpKind::Tanh => acc(inputs[0], &mut |d| {
                for ((d, &gi), &y) in d.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * (1.0 - y * y);
                }
            }),
            OpKind::Sigmoid => acc(inputs[0], &mut |d| {
                for ((d, &gi), &y) in d.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y * (1.0 - y);
                }
            }),
            OpKind::Relu => acc(inputs[0], &mut |d| {
                for ((d, &gi), &y) in d.iter_mut().zip(g).zip(out.data()) {
                    if y > 0.0 {
                        *d += gi;
                    }
                }
            }),
            OpKind::LogSoftmax => acc(inputs[0], &mut |d| {
                let total: f32 = g.iter().sum();
                for ((d, &gi), &y) in d.iter_mut().zip(g).zip(out.data()) {
                    *d += gi - y.exp() * total;
                }
            }),
            OpKind::Sum => acc(inputs[0], &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
            OpKind::Mean => {
                let n = val(inputs[0]).len() as f32;
                acc(inputs[0], &mut |d| d.iter_mut().for_each(|x| *x += g[0] / n))
            }
            OpKind::EmbeddingLookup(index) => {
                let dim = val(inputs[0]).shape()[1];
                acc(inputs[0], &mut |d| axpy(1.0, g, &mut d[index * dim..(index + 1) * dim]));
            }
            OpKind::Concat => {
                let mut offset = 0;
                for &v in inputs {
                    let len = val(v).len();
                    acc(v, &mut |d| axpy(1.0, &g[offset..offset + len], d));
                    offset += len;
                }
            }
            OpKind::Slice { start, .. } => {
                let inner = row_len(val(inputs[0]).shape());
                let begin = start * inner;
                acc(inputs[0], &mut |d| axpy(1.0, g, &mut d[begin..begin + g.len()]));
            }
            OpKind::Reshape(_) => acc(inputs[0], &mut |d| axpy(1.0, g, d)),
            OpKind::Entropy => {
                let logp = log_softmax_f64(val(inputs[0]).data());
                let h: f64 = logp.iter().map(|&l| -l.exp() * l).sum();
                let g0 = f64::from(g[0]);
                acc(inputs[0], &mut |d| {
                    for (d, &l) in d.iter_mut().zip(&logp) {
                        *d -= (g0 * l.exp() * (l + h)) as f32;
                    }
                });
            }
        }
    }
}

fn arity(kind: &OpKind, inputs: &[&Tensor], expected: usize) -> Result<(), NumericsError> {
    if inputs.len() != expected {
        return Err(NumericsError::Arity {
            op: kind.name(),
            expected,
            got: inputs.len(),
        });
    }
    Ok(())
}

fn mismatch(kind: &OpKind, lhs: &Tensor, rhs: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op: kind.name(),
        lhs: lhs.shape().to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor, NumericsError> {
    match kind {
        OpKind::MatMul => {
            arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            let ok = matches!((a.rank(), b.rank()), (1 | 2, 1 | 2));
            let k_a = *a.shape().last().unwrap_or(&0);
            let k_b = b.shape()[0];
            if !ok || k_a != k_b {
                return Err(mismatch(kind, a, b.shape()));
            }
            let (m, k, n) = matmul_dims(a.shape(), b.shape());
            let (av, bv) = (a.data(), b.data());
            let mut out = vec![0.0f32; m * n];
            if n == 1 {
                for i in 0..m {
                    out[i] = dot(&av[i * k..(i + 1) * k], bv);
                }
            } else {
                // Row-of-b outer so each row of a large weight matrix is
                // streamed once per batch.
                for p in 0..k {
                    let brow = &bv[p * n..(p + 1) * n];
                    for i in 0..m {
                        let s = av[i * k + p];
                        if s != 0.0 {
                            axpy(s, brow, &mut out[i * n..(i + 1) * n]);
                        }
                    }
                }
            }
            let shape = match (a.rank(), b.rank()) {
                (1, 1) => vec![],
                (1, 2) => vec![n],
                (2, 1) => vec![m],
                _ => vec![m, n],
            };
            Ok(Tensor::from_parts(shape, out))
        }
        OpKind::Conv2d => {
            if inputs.len() != 2 && inputs.len() != 3 {
                return Err(NumericsError::Arity {
                    op: kind.name(),
                    expected: 2,
                    got: inputs.len(),
                });
            }
            let (x, w) = (inputs[0], inputs[1]);
            let xs = x.shape();
            let image_ok = xs.len() == 3 || (xs.len() == 4 && xs[0] == 1);
            let ws = w.shape();
            if !image_ok || ws.len() != 4 {
                return Err(mismatch(kind, x, ws));
            }
            let c = xs[xs.len() - 3];
            let (h, wd) = (xs[xs.len() - 2], xs[xs.len() - 1]);
            if ws[1] != c || ws[2] > h || ws[3] > wd {
                return Err(mismatch(kind, x, ws));
            }
            if let Some(b) = inputs.get(2) {
                if b.shape() != [ws[0]] {
                    return Err(mismatch(kind, w, b.shape()));
                }
            }
            let geo = ConvGeometry::new(xs, ws);
            let mut out = vec![0.0f32; geo.out_channels * geo.oh * geo.ow];
            conv2d_forward(&geo, x.data(), w.data(), inputs.get(2).map(|b| b.data()), &mut out);
            let mut shape = vec![geo.out_channels, geo.oh, geo.ow];
            if xs.len() == 4 {
                shape.insert(0, 1);
            }
            Ok(Tensor::from_parts(shape, out))
        }
        OpKind::Add | OpKind::Mul => {
            arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(mismatch(kind, a, b.shape()));
            }
            let data = if *kind == OpKind::Add {
                a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
            } else {
                a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect()
            };
            Ok(Tensor::from_parts(a.shape().to_vec(), data))
        }
        OpKind::Scale(s) => {
            arity(kind, inputs, 1)?;
            Ok(map(inputs[0], |x| x * s))
        }
        OpKind::Tanh => {
            arity(kind, inputs, 1)?;
            Ok(map(inputs[0], f32::tanh))
        }
        OpKind::Sigmoid => {
            arity(kind, inputs, 1)?;
            Ok(map(inputs[0], sigmoid))
        }
        OpKind::Relu => {
            arity(kind, inputs, 1)?;
            Ok(map(inputs[0], |x| x.max(0.0)))
        }
        OpKind::LogSoftmax => {
            arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.rank() != 1 {
                return Err(mismatch(kind, a, &[]));
            }
            Ok(Tensor::from_parts(a.shape().to_vec(), log_softmax_slice(a.data())))
        }
        OpKind::Sum | OpKind::Mean => {
            arity(kind, inputs, 1)?;
            let a = inputs[0];
            let total: f64 = a.data().iter().map(|&x| f64::from(x)).sum();
            let v = if *kind == OpKind::Sum {
                total
            } else {
                total / a.len() as f64
            };
            Ok(Tensor::scalar(v as f32))
        }
        OpKind::EmbeddingLookup(index) => {
            arity(kind, inputs, 1)?;
            let table = inputs[0];
            if table.rank() != 2 {
                return Err(mismatch(kind, table, &[]));
            }
            let (rows, dim) = (table.shape()[0], table.shape()[1]);
            if *index >= rows {
                return Err(NumericsError::IndexOutOfRange {
                    op: kind.name(),
                    index: *index,
                    bound: rows,
                });
            }
            let row = table.data()[index * dim..(index + 1) * dim].to_vec();
            Ok(Tensor::from_parts(vec![dim], row))
        }
        OpKind::Concat => {
            let first = inputs.first().ok_or(NumericsError::Arity {
                op: kind.name(),
                expected: 1,
                got: 0,
            })?;
            if first.rank() == 0 {
                return Err(mismatch(kind, first, &[]));
            }
            let tail = &first.shape()[1..];
            let mut rows = 0;
            let mut data = Vec::with_capacity(inputs.iter().map(|t| t.len()).sum());
            for t in inputs {
                if t.rank() != first.rank() || &t.shape()[1..] != tail {
                    return Err(mismatch(kind, first, t.shape()));
                }
                rows += t.shape()[0];
                data.extend_from_slice(t.data());
            }
            let mut shape = vec![rows];
            shape.extend_from_slice(tail);
            Ok(Tensor::from_parts(shape, data))
        }
        OpKind::Slice { start, len } => {
            arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.rank() == 0 || *len == 0 || start + len > a.shape()[0] {
                return Err(mismatch(kind, a, &[*start, *len]));
            }
            let inner = row_len(a.shape());
            let data = a.data()[start * inner..(start + len) * inner].to_vec();
            let mut shape = a.shape().to_vec();
            shape[0] = *len;
            Ok(Tensor::from_parts(shape, data))
        }
        OpKind::Reshape(shape) => {
            arity(kind, inputs, 1)?;
            inputs[0].reshaped(shape)
        }
        OpKind::Entropy => {
            arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.rank() != 1 {
                return Err(mismatch(kind, a, &[]));
            }
            Ok(Tensor::scalar(entropy_of_logits(a.data())))
        }
    }
}

fn map(t: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

fn row_len(shape: &[usize]) -> usize {
    shape[1..].iter().product()
}

fn matmul_dims(a: &[usize], b: &[usize]) -> (usize, usize, usize) {
    let (m, k) = if a.len() == 1 { (1, a[0]) } else { (a[0], a[1]) };
    let n = if b.len() == 1 { 1 } else { b[1] };
    (m, k, n)
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_softmax_f64(x: &[f32]) -> Vec<f64> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = x.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    let log_z = max + sum.ln();
    x.iter().map(|&v| f64::from(v) - log_z).collect()
}

/// Numerically stable log-softmax of a slice, evaluated in f64 and rounded
/// once.
pub fn log_softmax_slice(x: &[f32]) -> Vec<f32> {
    log_softmax_f64(x).into_iter().map(|v| v as f32).collect()
}

/// Entropy in nats of `softmax(logits)`.
pub fn entropy_of_logits(logits: &[f32]) -> f32 {
    let h: f64 = log_softmax_f64(logits).iter().map(|&l| -l.exp() * l).sum();
    h.max(0.0) as f32
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // Eight independent lanes so the compiler can vectorize the reduction.
    let mut lanes = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            lanes[l] += ac[l] * bc[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    lanes.iter().sum::<f32>() + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

struct ConvGeometry {
    in_channels: usize,
    h: usize,
    w: usize,
    out_channels: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new(x: &[usize], k: &[usize]) -> Self {
        let n = x.len();
        let (in_channels, h, w) = (x[n - 3], x[n - 2], x[n - 1]);
        let (out_channels, kh, kw) = (k[0], k[2], k[3]);
        Self {
            in_channels,
            h,
            w,
            out_channels,
            kh,
            kw,
            oh: h - kh + 1,
            ow: w - kw + 1,
        }
    }
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Unrolls `x` into a `[patch_len, plane]` matrix whose row `r` matches
    /// column `r` of the kernel viewed as `[out_channels, patch_len]`.
    fn im2col(&self, x: &[f32]) -> Vec<f32> {
        let plane = self.plane();
        let mut cols = vec![0.0; self.patch_len() * plane];
        let mut r = 0;
        for c in 0..self.in_channels {
            let src = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let dst = &mut cols[r * plane..(r + 1) * plane];
                    for i in 0..self.oh {
                        let start = (i + ki) * self.w + kj;
                        dst[i * self.ow..(i + 1) * self.ow].copy_from_slice(&src[start..start + self.ow]);
                    }
                    r += 1;
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvGeometry::im2col`]: scatters patch rows back onto the
    /// input.
    fn col2im_add(&self, cols: &[f32], dx: &mut [f32]) {
        let plane = self.plane();
        let mut r = 0;
        for c in 0..self.in_channels {
            let dst = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let src = &cols[r * plane..(r + 1) * plane];
                    for i in 0..self.oh {
                        let start = (i + ki) * self.w + kj;
                        axpy(1.0, &src[i * self.ow..(i + 1) * self.ow], &mut dst[start..start + self.ow]);
                    }
                    r += 1;
                }
            }
        }
    }
}

fn conv2d_forward(geo: &ConvGeometry, x: &[f32], k: &[f32], bias: Option<&[f32]>, out: &mut [f32]) {
    let (plane, patch) = (geo.plane(), geo.patch_len());
    let cols = geo.im2col(x);
    for o in 0..geo.out_channels {
        let dst = &mut out[o * plane..(o + 1) * plane];
        if let Some(b) = bias {
            dst.fill(b[o]);
        }
        for r in 0..patch {
            axpy(k[o * patch + r], &cols[r * plane..(r + 1) * plane], dst);
        }
    }
}

fn conv2d_kernel_grad(geo: &ConvGeometry, x: &[f32], g: &[f32], dk: &mut [f32]) {
    let (plane, patch) = (geo.plane(), geo.patch_len());
    let cols = geo.im2col(x);
    for o in 0..geo.out_channels {
        let go = &g[o * plane..(o + 1) * plane];
        if go.iter().all(|&v| v == 0.0) {
            continue;
        }
        for r in 0..patch {
            dk[o * patch + r] += dot(&cols[r * plane..(r + 1) * plane], go);
        }
    }
}

fn conv2d_input_grad(geo: &ConvGeometry, k: &[f32], g: &[f32], dx: &mut [f32]) {
    let (plane, patch) = (geo.plane(), geo.patch_len());
    let mut cols = vec![0.0; patch * plane];
    for o in 0..geo.out_channels {
        let go = &g[o * plane..(o + 1) * plane];
        for r in 0..patch {
            axpy(k[o * patch + r], go, &mut cols[r * plane..(r + 1) * plane]);
        }
    }
    geo.col2im_add(&cols, dx);
}
