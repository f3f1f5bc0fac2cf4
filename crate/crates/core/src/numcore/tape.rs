//! Tape-based reverse-mode differentiation over [`RealArray`] values.
//!
//! A [`Tape`] records every primitive applied to its variables. Calling
//! [`grad`] on a scalar variable replays the record backwards and returns the
//! adjoint of each requested leaf. Constants and detached values take part in
//! the forward pass but never receive adjoints, which is how truncated
//! gradient flow is expressed.
//!
//! The tape uses interior mutability and is `!Sync`: one record belongs to one
//! evaluation.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use super::array::RealArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Square(usize),
    MaxConst(usize, f64),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    Slice {
        src: usize,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Reshape(usize),
    Broadcast(usize),
    Pool2(usize),
    Custom {
        src: usize,
        name: &'static str,
        deriv: RealArray,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Square(..) => "square",
            Op::MaxConst(..) => "max_const",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::Slice { .. } => "slice",
            Op::Concat { .. } => "concat",
            Op::Reshape(..) => "reshape",
            Op::Broadcast(..) => "broadcast",
            Op::Pool2(..) => "pool2",
            Op::Custom { name, .. } => name,
        }
    }

    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf | Op::Const => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::MaxConst(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumAxis(a, _)
            | Op::Reshape(a)
            | Op::Broadcast(a)
            | Op::Pool2(a) => vec![*a],
            Op::Slice { src, .. } | Op::Custom { src, .. } => vec![*src],
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

struct Node {
    value: Rc<RealArray>,
    op: Op,
    tracked: bool,
}

/// Differentiation record.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: RefCell<Option<String>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Splits a shape around `axis` into (outer, dim, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Maps every flat index of `out_shape` to the flat index of the broadcast
/// source with shape `src_shape`.
fn broadcast_index_map(src_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let pad = out_shape.len() - src_shape.len();
    let mut src_strides = vec![0usize; out_shape.len()];
    let mut stride = 1;
    for d in (0..src_shape.len()).rev() {
        src_strides[d + pad] = if src_shape[d] == 1 { 0 } else { stride };
        stride *= src_shape[d];
    }
    let n: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        map.push(idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum());
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

fn accumulate(slot: &mut Option<RealArray>, delta: RealArray) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: RealArray, op: Op) -> Var<'_> {
        if !value.is_finite() {
            let mut fault = self.fault.borrow_mut();
            if fault.is_none() {
                *fault = Some(op.name().to_string());
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        let tracked = match op {
            Op::Leaf => true,
            Op::Const => false,
            _ => op.parents().iter().any(|&p| nodes[p].tracked),
        };
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<RealArray> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: RealArray) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// Records a value that never receives an adjoint.
    pub fn constant(&self, value: RealArray) -> Var<'_> {
        self.push(value, Op::Const)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(RealArray::scalar(value))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of zero parts");
        let values: Vec<Rc<RealArray>> = parts.iter().map(|p| self.value_of(p.id)).collect();
        let first = values[0].shape().to_vec();
        assert!(axis < first.len(), "concat axis {axis} out of range for {first:?}");
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for v in &values {
            let s = v.shape();
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for d in 0..s.len() {
                assert!(d == axis || s[d] == first[d], "concat extent mismatch {s:?} vs {first:?}");
            }
            out_shape[axis] += s[axis];
        }
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let dim = v.shape()[axis];
                let block = dim * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        self.push(
            RealArray::from_parts(out_shape, data),
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
        )
    }

    /// Elementwise primitive with a caller-supplied derivative. Every use
    /// should ship with its own finite-difference check.
    pub fn map_unary<'t>(
        &'t self,
        x: Var<'t>,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Var<'t> {
        let xv = self.value_of(x.id);
        let value = xv.map(&f);
        let deriv = xv.map(&df);
        self.push(
            value,
            Op::Custom {
                src: x.id,
                name,
                deriv,
            },
        )
    }

    /// Name of the first primitive that produced a non-finite value, if any.
    pub fn fault(&self) -> Option<String> {
        self.fault.borrow().clone()
    }

    fn backward(&self, root: usize) -> Result<Vec<Option<RealArray>>> {
        if let Some(primitive) = self.fault() {
            return Err(Error::NonFinite { primitive });
        }
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root].value;
        if root_value.len() != 1 {
            return Err(Error::Precondition(format!(
                "gradient root must be scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut adj: Vec<Option<RealArray>> = vec![None; nodes.len()];
        adj[root] = Some(RealArray::from_parts(root_value.shape().to_vec(), vec![1.0]));

        for i in (0..=root).rev() {
            let node = &nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let val = |id: usize| -> &RealArray { &nodes[id].value };
            let tracked = |id: usize| nodes[id].tracked;
            match &node.op {
                Op::Leaf => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Const => {}
                Op::Add(a, b) => {
                    if tracked(*a) {
                        accumulate(&mut adj[*a], g.clone());
                    }
                    if tracked(*b) {
                        accumulate(&mut adj[*b], g);
                    }
                }
                Op::Sub(a, b) => {
                    if tracked(*a) {
                        accumulate(&mut adj[*a], g.clone());
                    }
                    if tracked(*b) {
                        accumulate(&mut adj[*b], g.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if tracked(*a) {
                        accumulate(&mut adj[*a], g.zip_map(val(*b), |g, y| g * y));
                    }
                    if tracked(*b) {
                        accumulate(&mut adj[*b], g.zip_map(val(*a), |g, x| g * x));
                    }
                }
                Op::Div(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    if tracked(*a) {
                        accumulate(&mut adj[*a], g.zip_map(y, |g, y| g / y));
                    }
                    if tracked(*b) {
                        let gb = RealArray::from_parts(
                            g.shape().to_vec(),
                            g.data()
                                .iter()
                                .zip(x.data())
                                .zip(y.data())
                                .map(|((g, x), y)| -g * x / (y * y))
                                .collect(),
                        );
                        accumulate(&mut adj[*b], gb);
                    }
                }
                Op::Neg(a) => accumulate(&mut adj[*a], g.map(|v| -v)),
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut adj[*a], g.map(|v| c * v));
                }
                Op::Offset(a) => accumulate(&mut adj[*a], g),
                Op::MatMul(a, b) => {
                    if tracked(*a) {
                        accumulate(&mut adj[*a], g.matmul(&val(*b).transpose()));
                    }
                    if tracked(*b) {
                        accumulate(&mut adj[*b], val(*a).transpose().matmul(&g));
                    }
                }
                Op::Tanh(a) => {
                    accumulate(&mut adj[*a], g.zip_map(&node.value, |g, y| g * (1.0 - y * y)))
                }
                Op::Sigmoid(a) => {
                    accumulate(&mut adj[*a], g.zip_map(&node.value, |g, y| g * y * (1.0 - y)))
                }
                Op::Exp(a) => accumulate(&mut adj[*a], g.zip_map(&node.value, |g, y| g * y)),
                Op::Log(a) => accumulate(&mut adj[*a], g.zip_map(val(*a), |g, x| g / x)),
                Op::Sqrt(a) => {
                    accumulate(&mut adj[*a], g.zip_map(&node.value, |g, y| g / (2.0 * y)))
                }
                Op::Square(a) => accumulate(&mut adj[*a], g.zip_map(val(*a), |g, x| 2.0 * g * x)),
                Op::MaxConst(a, c) => {
                    let c = *c;
                    accumulate(
                        &mut adj[*a],
                        g.zip_map(val(*a), |g, x| if x > c { g } else { 0.0 }),
                    )
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    accumulate(&mut adj[*a], RealArray::full(val(*a).shape(), gv));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let gv = g.item() / x.len() as f64;
                    accumulate(&mut adj[*a], RealArray::full(x.shape(), gv));
                }
                Op::SumAxis(a, axis) => {
                    let shape = val(*a).shape().to_vec();
                    let (outer, dim, inner) = axis_split(&shape, *axis);
                    let mut out = vec![0.0; outer * dim * inner];
                    for o in 0..outer {
                        for d in 0..dim {
                            let dst = &mut out[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                            dst.copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                        }
                    }
                    accumulate(&mut adj[*a], RealArray::from_parts(shape, out));
                }
                Op::Slice { src, axis, start } => {
                    let shape = val(*src).shape().to_vec();
                    let (outer, dim, inner) = axis_split(&shape, *axis);
                    let len = g.shape()[*axis];
                    let mut out = vec![0.0; outer * dim * inner];
                    for o in 0..outer {
                        let dst = (o * dim + start) * inner;
                        out[dst..dst + len * inner]
                            .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    accumulate(&mut adj[*src], RealArray::from_parts(shape, out));
                }
                Op::Concat { parts, axis } => {
                    let (outer, total, inner) = axis_split(g.shape(), *axis);
                    let mut offset = 0;
                    for &p in parts {
                        let pshape = val(p).shape().to_vec();
                        let dim = pshape[*axis];
                        if tracked(p) {
                            let mut out = Vec::with_capacity(outer * dim * inner);
                            for o in 0..outer {
                                let s = (o * total + offset) * inner;
                                out.extend_from_slice(&g.data()[s..s + dim * inner]);
                            }
                            accumulate(&mut adj[p], RealArray::from_parts(pshape, out));
                        }
                        offset += dim;
                    }
                }
                Op::Reshape(a) => {
                    let shape = val(*a).shape().to_vec();
                    accumulate(&mut adj[*a], RealArray::from_parts(shape, g.into_data()));
                }
                Op::Broadcast(a) => {
                    let src_shape = val(*a).shape().to_vec();
                    let map = broadcast_index_map(&src_shape, g.shape());
                    let mut out = vec![0.0; src_shape.iter().product()];
                    for (gv, &si) in g.data().iter().zip(&map) {
                        out[si] += gv;
                    }
                    accumulate(&mut adj[*a], RealArray::from_parts(src_shape, out));
                }
                Op::Pool2(a) => {
                    let shape = val(*a).shape().to_vec();
                    let (n, h, w, f) = (shape[0], shape[1], shape[2], shape[3]);
                    let (ho, wo) = (h / 2, w / 2);
                    let mut out = vec![0.0; n * h * w * f];
                    for b in 0..n {
                        for y in 0..h {
                            for x in 0..w {
                                let gi = ((b * ho + y / 2) * wo + x / 2) * f;
                                let oi = ((b * h + y) * w + x) * f;
                                for c in 0..f {
                                    out[oi + c] = 0.25 * g.data()[gi + c];
                                }
                            }
                        }
                    }
                    accumulate(&mut adj[*a], RealArray::from_parts(shape, out));
                }
                Op::Custom { src, deriv, .. } => {
                    accumulate(&mut adj[*src], g.zip_map(deriv, |g, d| g * d))
                }
            }
            for p in node.op.parents() {
                if adj[p].as_ref().is_some_and(|a| !a.is_finite()) {
                    return Err(Error::NonFinite {
                        primitive: format!("{} (backward)", node.op.name()),
                    });
                }
            }
        }
        Ok(adj)
    }
}

/// Reverse-mode gradient of scalar `loss` with respect to each leaf.
///
/// Leaves that do not influence the loss (or were detached from it) receive
/// zero arrays of their own shape.
pub fn grad<'t>(loss: Var<'t>, leaves: &[Var<'t>]) -> Result<Vec<RealArray>> {
    let tape = loss.tape;
    let mut adj = tape.backward(loss.id)?;
    Ok(leaves
        .iter()
        .map(|leaf| {
            assert!(std::ptr::eq(leaf.tape, tape), "leaf recorded on a different tape");
            adj[leaf.id]
                .take()
                .unwrap_or_else(|| RealArray::zeros(leaf.shape().as_slice()))
        })
        .collect())
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<RealArray> {
        self.tape.value_of(self.id)
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.value().map(f);
        self.tape.push(value, op)
    }

    fn binary(self, rhs: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        assert_eq!(
            a.shape(),
            b.shape(),
            "elementwise `{}` needs equal shapes; broadcast explicitly",
            op.name()
        );
        let value = a.zip_map(&b, f);
        self.tape.push(value, op)
    }

    /// Same value, cut off from gradient flow.
    pub fn detach(self) -> Var<'t> {
        let v = self.value();
        self.tape.push(RealArray::clone(&v), Op::Const)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| c * x)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        self.unary(Op::Offset(self.id), |x| x + c)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let value = self.value().matmul(&rhs.value());
        self.tape.push(value, Op::MatMul(self.id, rhs.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// Elementwise `max(x, c)` for a constant `c`.
    pub fn max_const(self, c: f64) -> Var<'t> {
        self.unary(Op::MaxConst(self.id, c), |x| x.max(c))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(RealArray::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let m = v.sum() / v.len() as f64;
        self.tape.push(RealArray::scalar(m), Op::Mean(self.id))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(self, axis: usize) -> Var<'t> {
        let v = self.value();
        let shape = v.shape();
        assert!(axis < shape.len(), "sum_axis {axis} out of range for {shape:?}");
        let (outer, dim, inner) = axis_split(shape, axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &v.data()[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (acc, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        self.tape
            .push(RealArray::from_parts(out_shape, out), Op::SumAxis(self.id, axis))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Var<'t> {
        let v = self.value();
        let shape = v.shape();
        assert!(axis < shape.len(), "slice axis {axis} out of range for {shape:?}");
        assert!(start < end && end <= shape[axis], "slice {start}..{end} out of range for {shape:?}");
        let (outer, dim, inner) = axis_split(shape, axis);
        let len = end - start;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = (o * dim + start) * inner;
            data.extend_from_slice(&v.data()[s..s + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        self.tape.push(
            RealArray::from_parts(out_shape, data),
            Op::Slice {
                src: self.id,
                axis,
                start,
            },
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let value = self
            .value()
            .reshape(shape)
            .unwrap_or_else(|e| panic!("reshape: {e}"));
        self.tape.push(value, Op::Reshape(self.id))
    }

    /// Numpy-style broadcast: leading dims may be added, size-1 dims expand.
    pub fn broadcast_to(self, shape: &[usize]) -> Var<'t> {
        let v = self.value();
        let src = v.shape();
        assert!(src.len() <= shape.len(), "cannot broadcast {src:?} to {shape:?}");
        let pad = shape.len() - src.len();
        for (d, &s) in src.iter().enumerate() {
            assert!(s == 1 || s == shape[d + pad], "cannot broadcast {src:?} to {shape:?}");
        }
        let map = broadcast_index_map(src, shape);
        let data = map.iter().map(|&i| v.data()[i]).collect();
        self.tape
            .push(RealArray::from_parts(shape.to_vec(), data), Op::Broadcast(self.id))
    }

    /// 2x2 average pooling over axes 1 and 2 of an (N, H, W, F) array.
    pub fn pool2(self) -> Var<'t> {
        let v = self.value();
        let shape = v.shape();
        assert_eq!(shape.len(), 4, "pool2 needs (N, H, W, F), got {shape:?}");
        let (n, h, w, f) = (shape[0], shape[1], shape[2], shape[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "pool2 needs even spatial dims, got {shape:?}");
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![0.0; n * ho * wo * f];
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let oi = ((b * ho + y / 2) * wo + x / 2) * f;
                    let ii = ((b * h + y) * w + x) * f;
                    for c in 0..f {
                        out[oi + c] += 0.25 * v.data()[ii + c];
                    }
                }
            }
        }
        self.tape.push(
            RealArray::from_parts(vec![n, ho, wo, f], out),
            Op::Pool2(self.id),
        )
    }

    /// Cyclic shift along `axis` by `shift` positions (positive moves
    /// entries towards higher indices). Composite of slice and concat.
    pub fn roll(self, axis: usize, shift: isize) -> Var<'t> {
        let dim = self.shape()[axis] as isize;
        let s = shift.rem_euclid(dim) as usize;
        if s == 0 {
            return self;
        }
        let dim = dim as usize;
        let tail = self.slice(axis, dim - s, dim);
        let head = self.slice(axis, 0, dim - s);
        self.tape.concat(&[tail, head], axis)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Div(self.id, rhs.id), |a, b| a / b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id), |x| -x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::fd::finite_diff_grad;
    use crate::rng::SplitMix64;

    fn rand_array(shape: &[usize], seed: u64, lo: f64, hi: f64) -> RealArray {
        let mut rng = SplitMix64::new(seed);
        RealArray::from_fn(shape, |_| rng.uniform(lo, hi))
    }

    fn max_rel_err(a: &RealArray, b: &RealArray) -> f64 {
        let scale = a.max_abs().max(b.max_abs()).max(1e-12);
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs() / scale))
    }

    /// Checks the analytic gradient of `build` against central differences.
    fn check(inputs: &[RealArray], build: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>) {
        let tape = Tape::new();
        let leaves: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = build(&tape, &leaves);
        let analytic = grad(loss, &leaves).unwrap();
        let numeric = finite_diff_grad(
            |xs| {
                let t = Tape::new();
                let ls: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
                Ok(build(&t, &ls).item())
            },
            inputs,
            1e-5,
        )
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert_eq!(a.shape(), n.shape());
            let err = max_rel_err(a, n);
            assert!(err < 1e-4, "relative error {err}: analytic {a:?} numeric {n:?}");
        }
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![0.3, -1.0, 7.0]));
        let g = grad(a.sum(), &[a]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![1.0, 2.0, 3.0]));
        let g = grad(a.square().sum(), &[a]).unwrap();
        assert_eq!(g[0].data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unused_and_detached_leaves_get_zero() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![1.0, 2.0]));
        let b = tape.leaf(RealArray::from_vec(vec![5.0]));
        let loss = (a.detach() * a).sum();
        let g = grad(loss, &[a, b]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 2.0]);
        assert_eq!(g[1].data(), &[0.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![1.0, 2.0]));
        let c = tape.constant(RealArray::from_vec(vec![3.0, 4.0]));
        let g = grad(c.square().sum(), &[a]).unwrap();
        assert_eq!(g[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_forward_names_primitive() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![-1.0, 2.0]));
        let loss = a.ln().sum();
        match grad(loss, &[a]) {
            Err(Error::NonFinite { primitive }) => assert_eq!(primitive, "log"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_backward_is_reported() {
        let tape = Tape::new();
        let a = tape.leaf(RealArray::from_vec(vec![0.0, 4.0]));
        let loss = a.sqrt().sum();
        match grad(loss, &[a]) {
            Err(Error::NonFinite { primitive }) => assert!(primitive.contains("sqrt"), "{primitive}"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn gradient_is_linear_in_the_loss() {
        let x = rand_array(&[4], 3, -1.0, 1.0);
        let (ca, cb) = (2.5, -0.75);
        let grads_of = |which: u8| {
            let tape = Tape::new();
            let l = tape.leaf(x.clone());
            let f = l.tanh().sum();
            let g = l.square().mean();
            let loss = match which {
                0 => f,
                1 => g,
                _ => f.scale(ca) + g.scale(cb),
            };
            grad(loss, &[l]).unwrap().remove(0)
        };
        let (gf, gg, gc) = (grads_of(0), grads_of(1), grads_of(2));
        for i in 0..4 {
            let expect = ca * gf.data()[i] + cb * gg.data()[i];
            assert!((gc.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fd_add_sub_mul_div_neg() {
        let a = rand_array(&[3, 2], 1, -1.0, 1.0);
        let b = rand_array(&[3, 2], 2, 0.5, 2.0);
        check(&[a.clone(), b.clone()], |_, v| ((v[0] + v[1]) * v[1]).sum());
        check(&[a.clone(), b.clone()], |_, v| (v[0] - v[1]).square().sum());
        check(&[a.clone(), b.clone()], |_, v| (v[0] / v[1]).sum());
        check(&[a], |_, v| (-v[0]).scale(1.7).offset(0.3).square().sum());
    }

    #[test]
    fn fd_matmul() {
        let a = rand_array(&[3, 4], 5, -1.0, 1.0);
        let b = rand_array(&[4, 2], 6, -1.0, 1.0);
        check(&[a, b], |_, v| v[0].matmul(v[1]).tanh().sum());
    }

    #[test]
    fn fd_transcendentals() {
        let a = rand_array(&[5], 7, 0.2, 1.5);
        check(std::slice::from_ref(&a), |_, v| v[0].tanh().sum());
        check(std::slice::from_ref(&a), |_, v| v[0].sigmoid().square().sum());
        check(std::slice::from_ref(&a), |_, v| v[0].exp().mean());
        check(std::slice::from_ref(&a), |_, v| v[0].ln().sum());
        check(&[a], |_, v| v[0].sqrt().sum());
    }

    #[test]
    fn fd_max_const_away_from_kink() {
        let a = RealArray::from_vec(vec![-0.7, -0.2, 0.3, 0.9]);
        check(&[a], |_, v| v[0].max_const(0.05).square().sum());
    }

    #[test]
    fn fd_reductions() {
        let a = rand_array(&[2, 3, 4], 8, -1.0, 1.0);
        check(std::slice::from_ref(&a), |_, v| v[0].sum_axis(1).square().sum());
        check(std::slice::from_ref(&a), |_, v| v[0].sum_axis(2).tanh().sum());
        check(&[a], |_, v| v[0].square().mean());
    }

    #[test]
    fn fd_slice_concat_reshape_roll() {
        let a = rand_array(&[3, 4, 2], 9, -1.0, 1.0);
        let b = rand_array(&[3, 1, 2], 10, -1.0, 1.0);
        check(std::slice::from_ref(&a), |_, v| v[0].slice(1, 1, 3).square().sum());
        check(&[a.clone(), b], |t, v| {
            let c = t.concat(&[v[0], v[1]], 1);
            (c.tanh() * c).sum()
        });
        check(std::slice::from_ref(&a), |_, v| v[0].reshape(&[12, 2]).tanh().square().sum());
        check(&[a], |t, v| {
            let r = v[0].roll(1, 1);
            let w = t.constant(rand_array(&[3, 4, 2], 11, -1.0, 1.0));
            (r * w).sum()
        });
    }

    #[test]
    fn fd_broadcast_and_pool() {
        let a = rand_array(&[1, 3], 12, -1.0, 1.0);
        check(&[a], |t, v| {
            let w = t.constant(rand_array(&[4, 3], 13, -1.0, 1.0));
            (v[0].broadcast_to(&[4, 3]) * w).tanh().sum()
        });
        let s = rand_array(&[2], 14, -1.0, 1.0);
        check(&[s], |_, v| v[0].broadcast_to(&[3, 2]).square().sum());
        let img = rand_array(&[2, 4, 4, 3], 15, 0.0, 1.0);
        check(&[img], |_, v| v[0].pool2().square().sum());
    }

    #[test]
    fn fd_custom_primitive() {
        let a = rand_array(&[4], 16, -1.0, 1.0);
        check(&[a], |t, v| t.map_unary(v[0], "cube", |x| x * x * x, |x| 3.0 * x * x).sum());
    }

    #[test]
    fn roll_moves_entries_forward() {
        let tape = Tape::new();
        let a = tape.constant(RealArray::from_vec(vec![0.0, 1.0, 2.0, 3.0]));
        assert_eq!(a.roll(0, 1).value().data(), &[3.0, 0.0, 1.0, 2.0]);
        assert_eq!(a.roll(0, -1).value().data(), &[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(a.roll(0, 4).value().data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn pool2_averages_blocks() {
        let tape = Tape::new();
        let a = tape.constant(RealArray::from_fn(&[1, 2, 2, 1], |i| i as f64));
        assert_eq!(a.pool2().value().data(), &[1.5]);
    }
}
