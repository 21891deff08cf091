use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{AdError, Result};
use crate::tensor::{strides, Tensor};

/// A recorded primitive. Input node ids always precede the output node,
/// so the node list is in topological order by construction.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Matmul(usize, usize),
    Reshape(usize, Vec<usize>),
    Permute(usize, Vec<usize>),
    Slice(usize, Vec<(usize, usize)>),
    Pad(usize, Vec<(usize, usize)>),
    Concat(Vec<usize>, usize),
    SumAll(usize),
    MeanAll(usize),
    SumLeading(usize, usize),
    BroadcastLeading(usize, Vec<usize>),
    SumLast(usize),
    RepeatLast(usize, usize),
    MaxLast(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    PowConst(usize, f64),
    SafeRecip(usize),
    Sin(usize),
    Cos(usize),
    Im2col { x: usize, kh: usize, kw: usize },
    Col2im { g: usize, b: usize, c: usize, h: usize, w: usize, kh: usize, kw: usize },
    AvgPool2(usize),
    Upsample2(usize),
    PermuteLast(usize, Arc<Vec<usize>>),
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Matmul(a, b) => vec![*a, *b],
            Neg(a) | SumAll(a) | MeanAll(a) | SumLast(a) | MaxLast(a)
            | Tanh(a) | Relu(a) | Exp(a) | Ln(a) | Sqrt(a) | SafeRecip(a) | Sin(a)
            | Cos(a) | AvgPool2(a) | Upsample2(a) => vec![*a],
            Reshape(a, _) | Permute(a, _) | Slice(a, _) | Pad(a, _) | SumLeading(a, _)
            | BroadcastLeading(a, _) | RepeatLast(a, _) | PowConst(a, _)
            | PermuteLast(a, _) => vec![*a],
            Concat(xs, _) => xs.clone(),
            Im2col { x, .. } => vec![*x],
            Col2im { g, .. } => vec![*g],
        }
    }
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// Records primitive operations executed through [`Var`]s. Confined to a
/// single thread; drop the tape to release all intermediates.
#[derive(Default, Debug)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a tape. Cheap to copy; values are immutable once
/// recorded.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, data, requires_grad, op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Record a trainable leaf (participates in gradients).
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), true, Op::Leaf)
    }

    /// Record a constant leaf (no gradient flows into it).
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), false, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.push(vec![], vec![v], false, Op::Leaf)
    }

    pub(crate) fn truncate(&self, len: usize) {
        self.nodes.borrow_mut().truncate(len);
    }

    /// Recompute every non-leaf node from its inputs and verify the stored
    /// values are reproduced bit-identically.
    pub fn replay_check(&self) -> bool {
        let nodes = self.nodes.borrow();
        for node in nodes.iter() {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            match eval(&nodes, &node.op) {
                Ok((shape, data)) => {
                    if shape != node.shape || data != node.data {
                        return false;
                    }
                }
                Err(_) => return false,
            }
        }
        true
    }

    fn apply(&self, op: Op) -> Result<Var<'_>> {
        let (shape, data) = {
            let nodes = self.nodes.borrow();
            eval(&nodes, &op)?
        };
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push(shape, data, requires_grad, op))
    }
}

fn same_tape(a: &Tape, b: &Tape) -> bool {
    std::ptr::eq(a, b)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn value(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        Tensor::new(nodes[self.id].shape.clone(), nodes[self.id].data.clone()).unwrap()
    }

    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        assert_eq!(nodes[self.id].data.len(), 1, "item() on non-scalar var");
        nodes[self.id].data[0]
    }

    fn binary(&self, rhs: Var<'t>, f: fn(usize, usize) -> Op) -> Result<Var<'t>> {
        assert!(same_tape(self.tape, rhs.tape), "vars from different tapes");
        self.tape.apply(f(self.id, rhs.id))
    }

    pub fn add(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, Op::Add)
    }

    pub fn sub(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, Op::Sub)
    }

    pub fn mul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, Op::Mul)
    }

    pub fn div(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, Op::Div)
    }

    pub fn neg(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Neg(self.id))
    }

    pub fn matmul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, Op::Matmul)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(AdError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(),
                rhs: shape.to_vec(),
            });
        }
        self.tape.apply(Op::Reshape(self.id, shape.to_vec()))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t>> {
        self.tape.apply(Op::Permute(self.id, axes.to_vec()))
    }

    /// Per-axis half-open ranges.
    pub fn slice(&self, ranges: &[(usize, usize)]) -> Result<Var<'t>> {
        self.tape.apply(Op::Slice(self.id, ranges.to_vec()))
    }

    /// Per-axis (before, after) zero padding.
    pub fn pad(&self, amounts: &[(usize, usize)]) -> Result<Var<'t>> {
        self.tape.apply(Op::Pad(self.id, amounts.to_vec()))
    }

    pub fn sum_all(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::SumAll(self.id))
    }

    pub fn mean_all(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::MeanAll(self.id))
    }

    /// Reduce the first `k` dimensions by summation.
    pub fn sum_leading(&self, k: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::SumLeading(self.id, k))
    }

    /// Tile over new leading dimensions `lead`.
    pub fn broadcast_leading(&self, lead: &[usize]) -> Result<Var<'t>> {
        self.tape.apply(Op::BroadcastLeading(self.id, lead.to_vec()))
    }

    /// Sum over the last axis, keeping it as size 1.
    pub fn sum_last(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::SumLast(self.id))
    }

    /// Repeat a trailing size-1 axis `n` times.
    pub fn repeat_last(&self, n: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::RepeatLast(self.id, n))
    }

    /// Max over the last axis, keeping it as size 1.
    pub fn max_last(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::MaxLast(self.id))
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Tanh(self.id))
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Relu(self.id))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Exp(self.id))
    }

    pub fn ln(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Ln(self.id))
    }

    pub fn sqrt(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Sqrt(self.id))
    }

    pub fn powc(&self, p: f64) -> Result<Var<'t>> {
        self.tape.apply(Op::PowConst(self.id, p))
    }

    /// Elementwise 1/x with 1/0 defined as 0.
    pub fn safe_recip(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::SafeRecip(self.id))
    }

    pub fn sin(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Sin(self.id))
    }

    pub fn cos(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Cos(self.id))
    }

    /// Unfold [b,c,h,w] into [b*oh*ow, c*kh*kw] patches (stride 1, valid).
    pub fn im2col(&self, kh: usize, kw: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::Im2col { x: self.id, kh, kw })
    }

    /// Adjoint of [`Var::im2col`]: scatter-add patches back to [b,c,h,w].
    pub fn col2im(&self, b: usize, c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::Col2im { g: self.id, b, c, h, w, kh, kw })
    }

    pub fn avgpool2(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::AvgPool2(self.id))
    }

    pub fn upsample2(&self) -> Result<Var<'t>> {
        self.tape.apply(Op::Upsample2(self.id))
    }

    /// Reindex the last axis: out[..., i] = in[..., perm[i]].
    pub fn permute_last(&self, perm: Arc<Vec<usize>>) -> Result<Var<'t>> {
        self.tape.apply(Op::PermuteLast(self.id, perm))
    }
}

pub fn concat<'t>(vars: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    assert!(!vars.is_empty(), "concat of zero vars");
    let tape = vars[0].tape;
    assert!(vars.iter().all(|v| same_tape(v.tape, tape)), "vars from different tapes");
    tape.apply(Op::Concat(vars.iter().map(|v| v.id).collect(), axis))
}

// ── forward kernels ─────────────────────────────────────────────────────

type Out = (Vec<usize>, Vec<f64>);

fn eval(nodes: &[Node], op: &Op) -> Result<Out> {
    use Op::*;
    match op {
        Leaf => unreachable!("leaf nodes are never re-evaluated"),
        Add(a, b) => ew2(nodes, *a, *b, "add", |x, y| x + y),
        Sub(a, b) => ew2(nodes, *a, *b, "subtract", |x, y| x - y),
        Mul(a, b) => ew2(nodes, *a, *b, "multiply", |x, y| x * y),
        Div(a, b) => {
            if nodes[*b].data.iter().any(|v| v.abs() < 1e-300) {
                return Err(AdError::DivisionByZero);
            }
            ew2(nodes, *a, *b, "divide", |x, y| x / y)
        }
        Neg(a) => Ok((nodes[*a].shape.clone(), nodes[*a].data.iter().map(|v| -v).collect())),
        Matmul(a, b) => matmul_eval(nodes, *a, *b),
        Reshape(a, shape) => Ok((shape.clone(), nodes[*a].data.clone())),
        Permute(a, axes) => permute_eval(nodes, *a, axes),
        Slice(a, ranges) => slice_eval(nodes, *a, ranges),
        Pad(a, amounts) => pad_eval(nodes, *a, amounts),
        Concat(xs, axis) => concat_eval(nodes, xs, *axis),
        SumAll(a) => Ok((vec![], vec![nodes[*a].data.iter().sum()])),
        MeanAll(a) => {
            let n = nodes[*a].data.len() as f64;
            Ok((vec![], vec![nodes[*a].data.iter().sum::<f64>() / n]))
        }
        SumLeading(a, k) => sum_leading_eval(nodes, *a, *k),
        BroadcastLeading(a, lead) => {
            let inner = &nodes[*a];
            let reps: usize = lead.iter().product();
            let mut shape = lead.clone();
            shape.extend_from_slice(&inner.shape);
            let mut data = Vec::with_capacity(reps * inner.data.len());
            for _ in 0..reps {
                data.extend_from_slice(&inner.data);
            }
            Ok((shape, data))
        }
        SumLast(a) => {
            let node = &nodes[*a];
            let n = *node.shape.last().ok_or_else(|| invalid("sum_last", "rank-0 input"))?;
            let rows = node.data.len() / n;
            let mut shape = node.shape.clone();
            *shape.last_mut().unwrap() = 1;
            let data = (0..rows)
                .map(|r| node.data[r * n..(r + 1) * n].iter().sum())
                .collect();
            Ok((shape, data))
        }
        RepeatLast(a, n) => {
            let node = &nodes[*a];
            if node.shape.last() != Some(&1) {
                return Err(invalid("repeat_last", format!("last axis must be 1, shape {:?}", node.shape)));
            }
            let mut shape = node.shape.clone();
            *shape.last_mut().unwrap() = *n;
            let mut data = Vec::with_capacity(node.data.len() * n);
            for v in &node.data {
                data.extend(std::iter::repeat(*v).take(*n));
            }
            Ok((shape, data))
        }
        MaxLast(a) => {
            let node = &nodes[*a];
            let n = *node.shape.last().ok_or_else(|| invalid("max_last", "rank-0 input"))?;
            let rows = node.data.len() / n;
            let mut shape = node.shape.clone();
            *shape.last_mut().unwrap() = 1;
            let data = (0..rows)
                .map(|r| node.data[r * n..(r + 1) * n].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            Ok((shape, data))
        }
        Tanh(a) => ew1(nodes, *a, f64::tanh),
        Relu(a) => ew1(nodes, *a, |v| v.max(0.0)),
        Exp(a) => {
            let out = ew1(nodes, *a, f64::exp)?;
            if out.1.iter().any(|v| !v.is_finite()) {
                return Err(AdError::NonFinite { op: "exp" });
            }
            Ok(out)
        }
        Ln(a) => {
            if nodes[*a].data.iter().any(|v| *v <= 0.0) {
                return Err(invalid("logarithm", "non-positive input"));
            }
            ew1(nodes, *a, f64::ln)
        }
        Sqrt(a) => {
            if nodes[*a].data.iter().any(|v| *v < 0.0) {
                return Err(invalid("sqrt", "negative input"));
            }
            ew1(nodes, *a, f64::sqrt)
        }
        PowConst(a, p) => {
            let p = *p;
            let out = ew1(nodes, *a, |v| v.powf(p))?;
            if out.1.iter().any(|v| !v.is_finite()) {
                return Err(AdError::NonFinite { op: "power-by-constant" });
            }
            Ok(out)
        }
        SafeRecip(a) => ew1(nodes, *a, |v| if v.abs() < 1e-300 { 0.0 } else { 1.0 / v }),
        Sin(a) => ew1(nodes, *a, f64::sin),
        Cos(a) => ew1(nodes, *a, f64::cos),
        Im2col { x, kh, kw } => im2col_eval(nodes, *x, *kh, *kw),
        Col2im { g, b, c, h, w, kh, kw } => col2im_eval(nodes, *g, *b, *c, *h, *w, *kh, *kw),
        AvgPool2(a) => avgpool2_eval(nodes, *a),
        Upsample2(a) => upsample2_eval(nodes, *a),
        PermuteLast(a, perm) => {
            let node = &nodes[*a];
            let n = *node.shape.last().ok_or_else(|| invalid("permute_last", "rank-0 input"))?;
            if perm.len() != n {
                return Err(invalid("permute_last", format!("perm length {} vs axis {}", perm.len(), n)));
            }
            let rows = node.data.len() / n;
            let mut data = Vec::with_capacity(node.data.len());
            for r in 0..rows {
                let row = &node.data[r * n..(r + 1) * n];
                data.extend(perm.iter().map(|&j| row[j]));
            }
            Ok((node.shape.clone(), data))
        }
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> AdError {
    AdError::InvalidArgument { op, msg: msg.into() }
}

fn ew1(nodes: &[Node], a: usize, f: impl Fn(f64) -> f64) -> Result<Out> {
    Ok((nodes[a].shape.clone(), nodes[a].data.iter().map(|&v| f(v)).collect()))
}

/// Elementwise binary op. Shapes must match, or one operand is a scalar,
/// or the smaller operand's shape is a suffix of the larger (it is then
/// repeated over the leading batch dimensions).
fn ew2(nodes: &[Node], a: usize, b: usize, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Out> {
    let (na, nb) = (&nodes[a], &nodes[b]);
    if na.shape == nb.shape {
        let data = na.data.iter().zip(&nb.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok((na.shape.clone(), data));
    }
    if na.data.len() == 1 && nb.data.len() == 1 {
        // both single-element: keep the higher-rank shape
        let shape = if na.shape.len() >= nb.shape.len() { na.shape.clone() } else { nb.shape.clone() };
        return Ok((shape, vec![f(na.data[0], nb.data[0])]));
    }
    if nb.data.len() == 1 {
        let y = nb.data[0];
        return Ok((na.shape.clone(), na.data.iter().map(|&x| f(x, y)).collect()));
    }
    if na.data.len() == 1 {
        let x = na.data[0];
        return Ok((nb.shape.clone(), nb.data.iter().map(|&y| f(x, y)).collect()));
    }
    if is_suffix(&nb.shape, &na.shape) {
        let m = nb.data.len();
        let data = na.data
            .chunks(m)
            .flat_map(|chunk| chunk.iter().zip(&nb.data).map(|(&x, &y)| f(x, y)))
            .collect();
        return Ok((na.shape.clone(), data));
    }
    if is_suffix(&na.shape, &nb.shape) {
        let m = na.data.len();
        let data = nb.data
            .chunks(m)
            .flat_map(|chunk| na.data.iter().zip(chunk).map(|(&x, &y)| f(x, y)))
            .collect();
        return Ok((nb.shape.clone(), data));
    }
    Err(AdError::ShapeMismatch { op: name, lhs: na.shape.clone(), rhs: nb.shape.clone() })
}

pub(crate) fn is_suffix(small: &[usize], big: &[usize]) -> bool {
    small.len() < big.len() && &big[big.len() - small.len()..] == small
}

fn matmul_eval(nodes: &[Node], a: usize, b: usize) -> Result<Out> {
    let (na, nb) = (&nodes[a], &nodes[b]);
    if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
        return Err(AdError::ShapeMismatch { op: "matmul", lhs: na.shape.clone(), rhs: nb.shape.clone() });
    }
    let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &na.data[i * k..(i + 1) * k];
        let dst = &mut out[i * n..(i + 1) * n];
        for (l, &av) in row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &nb.data[l * n..(l + 1) * n];
            for (d, &bv) in dst.iter_mut().zip(brow) {
                *d += av * bv;
            }
        }
    }
    Ok((vec![m, n], out))
}

fn permute_eval(nodes: &[Node], a: usize, axes: &[usize]) -> Result<Out> {
    let node = &nodes[a];
    let rank = node.shape.len();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&x| x >= rank || std::mem::replace(&mut seen[x], true)) {
        return Err(invalid("transpose", format!("axes {:?} invalid for shape {:?}", axes, node.shape)));
    }
    let out_shape: Vec<usize> = axes.iter().map(|&x| node.shape[x]).collect();
    let in_strides = strides(&node.shape);
    let out_strides = strides(&out_shape);
    let mut data = vec![0.0; node.data.len()];
    let mut idx = vec![0usize; rank];
    for (o, slot) in data.iter_mut().enumerate() {
        // decode output index, map through axes to input offset
        let mut rem = o;
        for d in 0..rank {
            idx[d] = rem / out_strides[d];
            rem %= out_strides[d];
        }
        let mut src = 0;
        for d in 0..rank {
            src += idx[d] * in_strides[axes[d]];
        }
        *slot = node.data[src];
    }
    Ok((out_shape, data))
}

fn slice_eval(nodes: &[Node], a: usize, ranges: &[(usize, usize)]) -> Result<Out> {
    let node = &nodes[a];
    if ranges.len() != node.shape.len()
        || ranges.iter().zip(&node.shape).any(|(&(s, e), &d)| s > e || e > d)
    {
        return Err(invalid("slice", format!("ranges {:?} invalid for shape {:?}", ranges, node.shape)));
    }
    let out_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
    let in_strides = strides(&node.shape);
    let numel: usize = out_shape.iter().product();
    let out_strides = strides(&out_shape);
    let mut data = vec![0.0; numel];
    for (o, slot) in data.iter_mut().enumerate() {
        let mut rem = o;
        let mut src = 0;
        for d in 0..out_shape.len() {
            let i = rem / out_strides[d];
            rem %= out_strides[d];
            src += (i + ranges[d].0) * in_strides[d];
        }
        *slot = node.data[src];
    }
    Ok((out_shape, data))
}

fn pad_eval(nodes: &[Node], a: usize, amounts: &[(usize, usize)]) -> Result<Out> {
    let node = &nodes[a];
    if amounts.len() != node.shape.len() {
        return Err(invalid("padding", format!("amounts {:?} invalid for shape {:?}", amounts, node.shape)));
    }
    let out_shape: Vec<usize> = node.shape.iter().zip(amounts).map(|(&d, &(b, e))| d + b + e).collect();
    let in_strides = strides(&node.shape);
    let out_strides = strides(&out_shape);
    let numel: usize = out_shape.iter().product();
    let mut data = vec![0.0; numel];
    for (i, &v) in node.data.iter().enumerate() {
        let mut rem = i;
        let mut dst = 0;
        for d in 0..node.shape.len() {
            let x = rem / in_strides[d];
            rem %= in_strides[d];
            dst += (x + amounts[d].0) * out_strides[d];
        }
        data[dst] = v;
    }
    Ok((out_shape, data))
}

fn concat_eval(nodes: &[Node], xs: &[usize], axis: usize) -> Result<Out> {
    let first = &nodes[xs[0]];
    let rank = first.shape.len();
    if axis >= rank {
        return Err(invalid("concatenate", format!("axis {} for rank {}", axis, rank)));
    }
    let mut axis_total = 0;
    for &x in xs {
        let s = &nodes[x].shape;
        if s.len() != rank
            || s.iter().zip(&first.shape).enumerate().any(|(d, (a, b))| d != axis && a != b)
        {
            return Err(AdError::ShapeMismatch { op: "concatenate", lhs: first.shape.clone(), rhs: s.clone() });
        }
        axis_total += s[axis];
    }
    let mut out_shape = first.shape.clone();
    out_shape[axis] = axis_total;
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let numel: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for o in 0..outer {
        for &x in xs {
            let node = &nodes[x];
            let block = node.shape[axis] * inner;
            data.extend_from_slice(&node.data[o * block..(o + 1) * block]);
        }
    }
    Ok((out_shape, data))
}

fn sum_leading_eval(nodes: &[Node], a: usize, k: usize) -> Result<Out> {
    let node = &nodes[a];
    if k > node.shape.len() {
        return Err(invalid("sum_leading", format!("k={} for rank {}", k, node.shape.len())));
    }
    let out_shape = node.shape[k..].to_vec();
    let inner: usize = out_shape.iter().product();
    let mut data = vec![0.0; inner];
    for chunk in node.data.chunks(inner) {
        for (d, &v) in data.iter_mut().zip(chunk) {
            *d += v;
        }
    }
    Ok((out_shape, data))
}

fn im2col_eval(nodes: &[Node], x: usize, kh: usize, kw: usize) -> Result<Out> {
    let node = &nodes[x];
    if node.shape.len() != 4 {
        return Err(invalid("im2col", format!("expected [b,c,h,w], got {:?}", node.shape)));
    }
    let (b, c, h, w) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
    if h < kh || w < kw {
        return Err(invalid("im2col", format!("input {}x{} smaller than kernel {}x{}", h, w, kh, kw)));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let cols = c * kh * kw;
    let mut data = vec![0.0; b * oh * ow * cols];
    let mut row = 0;
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = &mut data[row * cols..(row + 1) * cols];
                let mut p = 0;
                for ci in 0..c {
                    let base = ((bi * c + ci) * h + oy) * w + ox;
                    for ky in 0..kh {
                        let src = base + ky * w;
                        dst[p..p + kw].copy_from_slice(&node.data[src..src + kw]);
                        p += kw;
                    }
                }
                row += 1;
            }
        }
    }
    Ok((vec![b * oh * ow, cols], data))
}

#[allow(clippy::too_many_arguments)]
fn col2im_eval(nodes: &[Node], g: usize, b: usize, c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Result<Out> {
    let node = &nodes[g];
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let cols = c * kh * kw;
    if node.shape != [b * oh * ow, cols] {
        return Err(AdError::ShapeMismatch { op: "col2im", lhs: node.shape.clone(), rhs: vec![b * oh * ow, cols] });
    }
    let mut data = vec![0.0; b * c * h * w];
    let mut row = 0;
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let src = &node.data[row * cols..(row + 1) * cols];
                let mut p = 0;
                for ci in 0..c {
                    let base = ((bi * c + ci) * h + oy) * w + ox;
                    for ky in 0..kh {
                        let dst = base + ky * w;
                        for kx in 0..kw {
                            data[dst + kx] += src[p + kx];
                        }
                        p += kw;
                    }
                }
                row += 1;
            }
        }
    }
    Ok((vec![b, c, h, w], data))
}

fn avgpool2_eval(nodes: &[Node], a: usize) -> Result<Out> {
    let node = &nodes[a];
    if node.shape.len() != 4 {
        return Err(invalid("avgpool2", format!("expected [b,c,h,w], got {:?}", node.shape)));
    }
    let (b, c, h, w) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(invalid("avgpool2", format!("spatial dims must be even, got {}x{}", h, w)));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut data = vec![0.0; b * c * oh * ow];
    for bc in 0..b * c {
        let src = &node.data[bc * h * w..(bc + 1) * h * w];
        let dst = &mut data[bc * oh * ow..(bc + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let p = 2 * oy * w + 2 * ox;
                dst[oy * ow + ox] = 0.25 * (src[p] + src[p + 1] + src[p + w] + src[p + w + 1]);
            }
        }
    }
    Ok((vec![b, c, oh, ow], data))
}

fn upsample2_eval(nodes: &[Node], a: usize) -> Result<Out> {
    let node = &nodes[a];
    if node.shape.len() != 4 {
        return Err(invalid("upsample2", format!("expected [b,c,h,w], got {:?}", node.shape)));
    }
    let (b, c, h, w) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
    let (oh, ow) = (h * 2, w * 2);
    let mut data = vec![0.0; b * c * oh * ow];
    for bc in 0..b * c {
        let src = &node.data[bc * h * w..(bc + 1) * h * w];
        let dst = &mut data[bc * oh * ow..(bc + 1) * oh * ow];
        for y in 0..h {
            for x in 0..w {
                let v = src[y * w + x];
                let p = 2 * y * ow + 2 * x;
                dst[p] = v;
                dst[p + 1] = v;
                dst[p + ow] = v;
                dst[p + ow + 1] = v;
            }
        }
    }
    Ok((vec![b, c, oh, ow], data))
}
