//! Tape of recorded operations and the reverse sweep over it.
//!
//! Every operation appends one node whose inputs are strictly earlier nodes,
//! so the node list is already in topological order and the backward pass is
//! a single reverse scan.

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::kernels::{gemm, Layout};
use crate::tensor::{check_shape, numel, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds accepted by [`Graph::apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    ElementwiseMul,
    Tanh,
    Sum,
    Scale(f64),
    Reshape(Vec<usize>),
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Sqrt,
    Reciprocal,
    Log,
    Square,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul {
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_rhs: bool,
    },
    Transpose {
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Add,
    Sub,
    Mul,
    Scale(f64),
    Shift,
    Tanh,
    Sum,
    SumAxis {
        outer: usize,
        len: usize,
        inner: usize,
    },
    Reshape,
    Concat {
        outer: usize,
        chunks: Vec<usize>,
    },
    Slice {
        outer: usize,
        full: usize,
        offset: usize,
        chunk: usize,
    },
    Sqrt,
    Reciprocal,
    Log,
    Square,
    Softplus,
    Gather(Rc<[usize]>),
}

struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    needs_grad: bool,
}

/// An append-only tape of tensor operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn raw(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).expect("shape and data built together")
    }

    /// Records a tensor as a leaf. Gradients are tracked when the tensor
    /// is marked `requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value: Tensor::new(t.shape().to_vec(), t.into_data()).expect("valid tensor"),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (no gradient) leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut t = t;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// Records a copy of a trainable parameter's values as a gradient leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let value = Self::raw(t.shape().to_vec(), t.data().to_vec());
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Scalar value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `target`'s stored gradient. A node the
    /// loss does not depend on contributes zeros.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => target.accumulate_grad(g),
            None => target.accumulate_grad(&vec![0.0; self.node(v)?.value.numel()]),
        }
    }

    /// Dispatches one of the named primitives.
    pub fn apply(&mut self, kind: Primitive, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::ElementwiseMul => 2,
            Primitive::Concat { .. } => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(TensorError::InvalidShape {
                op: "apply",
                shape: vec![inputs.len()],
                reason: format!("{kind:?} takes {arity} inputs"),
            });
        }
        match kind {
            Primitive::MatMul => self.matmul(inputs[0], inputs[1]),
            Primitive::Add => self.add(inputs[0], inputs[1]),
            Primitive::Sub => self.sub(inputs[0], inputs[1]),
            Primitive::ElementwiseMul => self.mul(inputs[0], inputs[1]),
            Primitive::Tanh => Ok(self.tanh(inputs[0])),
            Primitive::Sum => Ok(self.sum(inputs[0])),
            Primitive::Scale(c) => Ok(self.scale(inputs[0], c)),
            Primitive::Reshape(shape) => self.reshape(inputs[0], &shape),
            Primitive::Concat { axis } => self.concat(inputs, axis),
            Primitive::Slice { axis, start, len } => self.slice(inputs[0], axis, start, len),
            Primitive::Sqrt => self.sqrt(inputs[0]),
            Primitive::Reciprocal => self.reciprocal(inputs[0]),
            Primitive::Log => self.log(inputs[0]),
            Primitive::Square => Ok(self.square(inputs[0])),
        }
    }

    /// Matrix product. Accepts `[m,k] x [k,n]`, batched `[b,m,k] x [b,k,n]`,
    /// and `[b,m,k] x [k,n]` with the right operand shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.node(a)?.value.shape().to_vec();
        let sb = self.node(b)?.value.shape().to_vec();
        let (batch, m, k, n, shared_rhs) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n, true),
            ([bt, m, k], [k2, n]) if k == k2 => (1, bt * m, *k, *n, true),
            ([bt, m, k], [bt2, k2, n]) if bt == bt2 && k == k2 => (*bt, *m, *k, *n, false),
            _ => return Err(mismatch("matmul", &sa, &sb)),
        };
        let out_shape = match sa.len() {
            2 => vec![m, n],
            _ if shared_rhs => vec![sa[0], sa[1], n],
            _ => vec![batch, m, n],
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let av = self.nodes[a.0].value.data();
            let bv = self.nodes[b.0].value.data();
            for t in 0..batch {
                let b_off = if shared_rhs { 0 } else { t * k * n };
                gemm(
                    m,
                    k,
                    n,
                    &av[t * m * k..],
                    Layout::Normal,
                    &bv[b_off..],
                    Layout::Normal,
                    &mut out[t * m * n..],
                    false,
                );
            }
        }
        Ok(self.push(
            Op::MatMul {
                batch,
                m,
                k,
                n,
                shared_rhs,
            },
            vec![a, b],
            Self::raw(out_shape, out),
        ))
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.shape().to_vec();
        let (batch, rows, cols) = match s.as_slice() {
            [r, c] => (1, *r, *c),
            [b, r, c] => (*b, *r, *c),
            _ => {
                return Err(TensorError::InvalidShape {
                    op: "transpose",
                    shape: s,
                    reason: "rank must be 2 or 3".into(),
                })
            }
        };
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; src.len()];
        transpose_into(src, &mut out, batch, rows, cols);
        let mut shape = s.clone();
        let r = shape.len();
        shape.swap(r - 1, r - 2);
        Ok(self.push(
            Op::Transpose { batch, rows, cols },
            vec![a],
            Self::raw(shape, out),
        ))
    }

    fn binary(&mut self, name: &'static str, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let sa = self.node(a)?.value.shape();
        let sb = self.node(b)?.value.shape();
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        let shape = sa.to_vec();
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(op, vec![a, b], Self::raw(shape, data)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("elementwise_mul", Op::Mul, a, b, |x, y| x * y)
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[a.0].value;
        let shape = src.shape().to_vec();
        let data = src.data().iter().map(|x| f(*x)).collect();
        self.push(op, vec![a], Self::raw(shape, data))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(c), a, |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Shift, a, |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Op::Square, a, |x| x * x)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Op::Softplus, a, |x| x.max(0.0) + (-x.abs()).exp().ln_1p())
    }

    fn checked_unary(
        &mut self,
        name: &'static str,
        op: Op,
        a: Var,
        valid: impl Fn(f64) -> bool,
        f: impl Fn(f64) -> f64,
    ) -> Result<Var> {
        let src = self.node(a)?.value.data();
        if let Some((index, &value)) = src.iter().enumerate().find(|(_, x)| !valid(**x)) {
            return Err(TensorError::Domain { op: name, index, value });
        }
        Ok(self.unary(op, a, f))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.checked_unary("sqrt", Op::Sqrt, a, |x| x >= 0.0, f64::sqrt)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.checked_unary("log", Op::Log, a, |x| x > 0.0, f64::ln)
    }

    pub fn reciprocal(&mut self, a: Var) -> Result<Var> {
        self.checked_unary("reciprocal", Op::Reciprocal, a, |x| x != 0.0, |x| 1.0 / x)
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Op::Sum, vec![a], Self::raw(vec![1], vec![s]))
    }

    /// Sums out one axis.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.node(a)?.value.shape().to_vec();
        if axis >= s.len() {
            return Err(TensorError::InvalidShape {
                op: "sum_axis",
                shape: s,
                reason: format!("axis {axis} out of range"),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let len = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(&src[base..base + inner]).for_each(|(d, x)| *d += x);
            }
        }
        let mut shape: Vec<usize> = s[..axis].iter().chain(&s[axis + 1..]).copied().collect();
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(self.push(Op::SumAxis { outer, len, inner }, vec![a], Self::raw(shape, out)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        check_shape("reshape", shape)?;
        let src = &self.node(a)?.value;
        if numel(shape) != src.numel() {
            return Err(mismatch("reshape", src.shape(), shape));
        }
        let data = src.data().to_vec();
        Ok(self.push(Op::Reshape, vec![a], Self::raw(shape.to_vec(), data)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .node(*parts.first().ok_or(TensorError::InvalidShape {
                op: "concat",
                shape: vec![],
                reason: "no inputs".into(),
            })?)?
            .value
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: first,
                reason: format!("axis {axis} out of range"),
            });
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut chunks = Vec::with_capacity(parts.len());
        let mut total_axis = 0;
        for p in parts {
            let s = self.node(*p)?.value.shape();
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(mismatch("concat", &first, s));
            }
            chunks.push(s[axis] * inner);
            total_axis += s[axis];
        }
        let row: usize = chunks.iter().sum();
        let mut out = Vec::with_capacity(outer * row);
        for o in 0..outer {
            for (p, &c) in parts.iter().zip(&chunks) {
                out.extend_from_slice(&self.nodes[p.0].value.data()[o * c..(o + 1) * c]);
            }
        }
        let mut shape = first;
        shape[axis] = total_axis;
        Ok(self.push(Op::Concat { outer, chunks }, parts.to_vec(), Self::raw(shape, out)))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.node(a)?.value.shape().to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape: s,
                reason: format!("axis {axis}, range {start}..{}", start + len),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let full = s[axis] * inner;
        let offset = start * inner;
        let chunk = len * inner;
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(outer * chunk);
        for o in 0..outer {
            out.extend_from_slice(&src[o * full + offset..o * full + offset + chunk]);
        }
        let mut shape = s;
        shape[axis] = len;
        Ok(self.push(
            Op::Slice {
                outer,
                full,
                offset,
                chunk,
            },
            vec![a],
            Self::raw(shape, out),
        ))
    }

    /// `out[i] = a[indices[i]]` over flattened storage.
    pub fn gather(&mut self, a: Var, indices: Rc<[usize]>, shape: &[usize]) -> Result<Var> {
        check_shape("gather", shape)?;
        let src = self.node(a)?.value.data();
        if numel(shape) != indices.len() {
            return Err(mismatch("gather", &[indices.len()], shape));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(TensorError::InvalidShape {
                op: "gather",
                shape: vec![src.len()],
                reason: format!("index {bad} out of range"),
            });
        }
        let data = indices.iter().map(|&i| src[i]).collect();
        Ok(self.push(Op::Gather(indices), vec![a], Self::raw(shape.to_vec(), data)))
    }

    /// Repeats a one-element tensor to `shape`.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if self.node(a)?.value.numel() != 1 {
            return Err(mismatch("broadcast_scalar", self.shape(a), shape));
        }
        let idx: Rc<[usize]> = vec![0; numel(shape)].into();
        self.gather(a, idx, shape)
    }

    /// Reverse sweep from a scalar loss. Gradients of earlier passes are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.node(loss)?.value.shape().to_vec();
        if numel(&shape) != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let ins = &node.inputs;
        let y = node.value.data();
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        let send = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| {
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let send_map = |grads: &mut [Option<Vec<f64>>], v: Var, f: &dyn Fn(usize) -> f64| {
            if !needs(v) {
                return;
            }
            let n = g.len();
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().enumerate().for_each(|(i, a)| *a += f(i)),
                slot @ None => *slot = Some((0..n).map(f).collect()),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul {
                batch,
                m,
                k,
                n,
                shared_rhs,
            } => {
                let (batch, m, k, n, shared) = (*batch, *m, *k, *n, *shared_rhs);
                let (a, b) = (ins[0], ins[1]);
                if needs(a) {
                    let bv = val(b);
                    let mut da = vec![0.0; batch * m * k];
                    for t in 0..batch {
                        let b_off = if shared { 0 } else { t * k * n };
                        // dA = dC * B^T
                        gemm(
                            m,
                            n,
                            k,
                            &g[t * m * n..],
                            Layout::Normal,
                            &bv[b_off..],
                            Layout::Transposed,
                            &mut da[t * m * k..],
                            false,
                        );
                    }
                    send(grads, a, da);
                }
                if needs(b) {
                    let av = val(a);
                    let blen = if shared { k * n } else { batch * k * n };
                    let mut db = vec![0.0; blen];
                    for t in 0..batch {
                        let b_off = if shared { 0 } else { t * k * n };
                        // dB = A^T * dC
                        gemm(
                            k,
                            m,
                            n,
                            &av[t * m * k..],
                            Layout::Transposed,
                            &g[t * m * n..],
                            Layout::Normal,
                            &mut db[b_off..],
                            shared && t > 0,
                        );
                    }
                    send(grads, b, db);
                }
            }
            Op::Transpose { batch, rows, cols } => {
                if needs(ins[0]) {
                    let mut out = vec![0.0; g.len()];
                    transpose_into(g, &mut out, *batch, *cols, *rows);
                    send(grads, ins[0], out);
                }
            }
            Op::Add => {
                send_map(grads, ins[0], &|i| g[i]);
                send_map(grads, ins[1], &|i| g[i]);
            }
            Op::Sub => {
                send_map(grads, ins[0], &|i| g[i]);
                send_map(grads, ins[1], &|i| -g[i]);
            }
            Op::Mul => {
                let (av, bv) = (val(ins[0]), val(ins[1]));
                send_map(grads, ins[0], &|i| g[i] * bv[i]);
                send_map(grads, ins[1], &|i| g[i] * av[i]);
            }
            Op::Scale(c) => {
                let c = *c;
                send_map(grads, ins[0], &|i| c * g[i]);
            }
            Op::Shift | Op::Reshape => send_map(grads, ins[0], &|i| g[i]),
            Op::Tanh => send_map(grads, ins[0], &|i| g[i] * (1.0 - y[i] * y[i])),
            Op::Sqrt => send_map(grads, ins[0], &|i| 0.5 * g[i] / y[i]),
            Op::Reciprocal => send_map(grads, ins[0], &|i| -g[i] * y[i] * y[i]),
            Op::Log => {
                let x = val(ins[0]);
                send_map(grads, ins[0], &|i| g[i] / x[i]);
            }
            Op::Square => {
                let x = val(ins[0]);
                send_map(grads, ins[0], &|i| 2.0 * x[i] * g[i]);
            }
            Op::Softplus => {
                let x = val(ins[0]);
                send_map(grads, ins[0], &|i| g[i] / (1.0 + (-x[i]).exp()));
            }
            Op::Sum => {
                if needs(ins[0]) {
                    let n = val(ins[0]).len();
                    send(grads, ins[0], vec![g[0]; n]);
                }
            }
            Op::SumAxis { outer, len, inner } => {
                if needs(ins[0]) {
                    let (outer, len, inner) = (*outer, *len, *inner);
                    let mut out = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            let base = (o * len + l) * inner;
                            out[base..base + inner].copy_from_slice(src);
                        }
                    }
                    send(grads, ins[0], out);
                }
            }
            Op::Concat { outer, chunks } => {
                let row: usize = chunks.iter().sum();
                let mut offset = 0;
                for (p, &c) in ins.iter().zip(chunks) {
                    if needs(*p) {
                        let mut out = Vec::with_capacity(outer * c);
                        for o in 0..*outer {
                            out.extend_from_slice(&g[o * row + offset..o * row + offset + c]);
                        }
                        send(grads, *p, out);
                    }
                    offset += c;
                }
            }
            Op::Slice {
                outer,
                full,
                offset,
                chunk,
            } => {
                if needs(ins[0]) {
                    let mut out = vec![0.0; outer * full];
                    for o in 0..*outer {
                        out[o * full + offset..o * full + offset + chunk]
                            .copy_from_slice(&g[o * chunk..(o + 1) * chunk]);
                    }
                    send(grads, ins[0], out);
                }
            }
            Op::Gather(idx) => {
                if needs(ins[0]) {
                    let mut out = vec![0.0; val(ins[0]).len()];
                    for (gi, &src) in g.iter().zip(idx.iter()) {
                        out[src] += gi;
                    }
                    send(grads, ins[0], out);
                }
            }
        }
    }
}

fn transpose_into(src: &[f64], dst: &mut [f64], batch: usize, rows: usize, cols: usize) {
    for t in 0..batch {
        let s = &src[t * rows * cols..(t + 1) * rows * cols];
        let d = &mut dst[t * rows * cols..(t + 1) * rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                d[c * rows + r] = s[r * cols + c];
            }
        }
    }
}
