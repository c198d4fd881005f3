//! Reverse-mode differentiation over a recorded tape of tensor operations.
//!
//! A [`Tape`] owns every intermediate value. Operations return [`Var`]
//! handles; [`Tape::backward`] walks the tape in reverse and returns the
//! gradient of a scalar with respect to every differentiable node.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Log-probability stand-in for masked entries.
pub const MASKED_LOGIT: f64 = -1e30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Min(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    Mean(usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Softmax(usize),
    MaskedLogSoftmax(usize, Vec<bool>),
    GatherRows(usize, Vec<usize>),
    ScatterRows(usize, Vec<usize>),
    Clamp(usize, f64, f64),
    Index(usize, usize),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Add parameter gradients into the store's accumulators.
    pub fn accumulate(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.grad_mut(id).add_assign(g);
            }
        }
    }
}

/// Shape of `b` broadcast against `a` in `a ⊕ b`.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    Row,
}

fn broadcast_kind(a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape == b.shape {
        Ok(Broadcast::Same)
    } else if b.len() == 1 {
        Ok(Broadcast::Scalar)
    } else if a.rank() == 2 && b.len() == a.cols() && b.rows() == 1 {
        Ok(Broadcast::Row)
    } else {
        Err(Error::Shape(format!("cannot broadcast {:?} against {:?}", b.shape, a.shape)))
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let cols = a.cols();
    let data = a
        .data
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = match kind {
                Broadcast::Same => b.data[i],
                Broadcast::Scalar => b.data[0],
                Broadcast::Row => b.data[i % cols],
            };
            f(x, y)
        })
        .collect();
    Tensor { shape: a.shape.clone(), data }
}

/// Reduce a gradient shaped like `a` to the shape of the broadcast operand.
fn unbroadcast(g: &Tensor, b: &Tensor, kind: Broadcast) -> Tensor {
    match kind {
        Broadcast::Same => g.clone(),
        Broadcast::Scalar => Tensor { shape: b.shape.clone(), data: vec![g.data.iter().sum()] },
        Broadcast::Row => {
            let cols = g.cols();
            let mut data = vec![0.0; cols];
            for (i, v) in g.data.iter().enumerate() {
                data[i % cols] += v;
            }
            Tensor { shape: b.shape.clone(), data }
        }
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// A stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Same value, detached from differentiation.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", ta.shape, tb.shape)));
        }
        let v = matmul(ta, tb);
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(v, Op::MatMul(a.0, b.0), g))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, allow_broadcast: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let kind = broadcast_kind(ta, tb)?;
        if !allow_broadcast && kind != Broadcast::Same {
            return Err(Error::Shape(format!("elementwise {:?} vs {:?}", ta.shape, tb.shape)));
        }
        let v = broadcast_zip(ta, tb, kind, f);
        let g = self.needs(&[a.0, b.0]);
        Ok(self.push(v, op, g))
    }

    /// `a + b`, with `b` a same-shape tensor, a scalar, or a row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a.0, b.0), |x, y| x + y, true)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a.0, b.0), |x, y| x - y, true)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a.0, b.0), |x, y| x * y, true)
    }

    /// Elementwise minimum of same-shape tensors; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Min(a.0, b.0), f64::min, false)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        let g = self.needs(&[a.0]);
        self.push(v, Op::Scale(a.0, k), g)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        let g = self.needs(&[a.0]);
        self.push(v, Op::AddScalar(a.0), g)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a).map(f);
        let g = self.needs(&[a.0]);
        self.push(v, op, g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a.0), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    /// Clamp into `[lo, hi]`; the gradient passes only inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a.0, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data.iter().sum());
        let g = self.needs(&[a.0]);
        self.push(v, Op::Sum(a.0), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.data.iter().sum::<f64>() / t.len() as f64);
        let g = self.needs(&[a.0]);
        self.push(v, Op::Mean(a.0), g)
    }

    /// Sum over an axis of a matrix: axis 0 gives a column-sum vector, axis 1 a row-sum vector.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || axis > 1 {
            return Err(Error::Shape(format!("sum over axis {axis} of {:?}", t.shape)));
        }
        let (r, c) = (t.rows(), t.cols());
        let (v, op) = if axis == 0 {
            let mut d = vec![0.0; c];
            for i in 0..r {
                for (o, x) in d.iter_mut().zip(t.row(i)) {
                    *o += x;
                }
            }
            (Tensor::vector(d), Op::SumRows(a.0))
        } else {
            (Tensor::vector((0..r).map(|i| t.row(i).iter().sum()).collect()), Op::SumCols(a.0))
        };
        let g = self.needs(&[a.0]);
        Ok(self.push(v, op, g))
    }

    /// Concatenate along the last axis (vectors end to end, matrices side by side).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let rank = first.rank().max(1);
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || t.rank().max(1) != rank {
                return Err(Error::Shape(format!("concat {:?} with {:?}", first.shape, t.shape)));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let shape = if rank == 1 { vec![cols] } else { vec![rows, cols] };
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let g = self.needs(&idx);
        Ok(self.push(Tensor { shape, data }, Op::Concat(idx), g))
    }

    /// Collect scalars into a vector.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.len() != 1 {
                return Err(Error::Shape(format!("stack expects scalars, got {:?}", t.shape)));
            }
            data.push(t.data[0]);
        }
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let g = self.needs(&idx);
        Ok(self.push(Tensor::vector(data), Op::Stack(idx), g))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut data = vec![0.0; t.len()];
        for r in 0..t.rows() {
            softmax_row(t.row(r), &mut data[r * c..(r + 1) * c]);
        }
        let v = Tensor { shape: t.shape.clone(), data };
        let g = self.needs(&[a.0]);
        self.push(v, Op::Softmax(a.0), g)
    }

    /// Log-softmax of a logit vector restricted to `mask`; masked entries hold
    /// [`MASKED_LOGIT`] and receive no gradient.
    pub fn masked_log_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || t.len() != mask.len() {
            return Err(Error::Shape(format!("mask of {} for logits {:?}", mask.len(), t.shape)));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        let m = t.data.iter().zip(mask).filter(|(_, &k)| k).map(|(&x, _)| x).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + t.data.iter().zip(mask).filter(|(_, &k)| k).map(|(&x, _)| (x - m).exp()).sum::<f64>().ln();
        let data = t.data.iter().zip(mask).map(|(&x, &k)| if k { x - lse } else { MASKED_LOGIT }).collect();
        let g = self.needs(&[a.0]);
        Ok(self.push(Tensor { shape: t.shape.clone(), data }, Op::MaskedLogSoftmax(a.0, mask.to_vec()), g))
    }

    /// Rows of a matrix selected by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::Shape(format!("gather_rows on {:?}", t.shape)));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Shape(format!("row {bad} out of range for {:?}", t.shape)));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let g = self.needs(&[a.0]);
        Ok(self.push(Tensor { shape: vec![idx.len(), c], data }, Op::GatherRows(a.0, idx.to_vec()), g))
    }

    /// Sum row `i` of `a` into output row `idx[i]` of a `rows`-row matrix.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || t.rows() != idx.len() || idx.iter().any(|&i| i >= rows) {
            return Err(Error::Shape(format!("scatter {:?} into {rows} rows", t.shape)));
        }
        let c = t.cols();
        let mut data = vec![0.0; rows * c];
        for (r, &i) in idx.iter().enumerate() {
            for (o, x) in data[i * c..(i + 1) * c].iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let g = self.needs(&[a.0]);
        Ok(self.push(Tensor { shape: vec![rows, c], data }, Op::ScatterRows(a.0, idx.to_vec()), g))
    }

    /// One entry (flat index) as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let t = self.value(a);
        let x = *t.data.get(i).ok_or_else(|| Error::Shape(format!("index {i} of {:?}", t.shape)))?;
        let g = self.needs(&[a.0]);
        Ok(self.push(Tensor::scalar(x), Op::Index(a.0, i), g))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = Tensor::new(shape, self.value(a).data.clone())?;
        let g = self.needs(&[a.0]);
        Ok(self.push(t, Op::Reshape(a.0), g))
    }

    /// Gradients of the scalar `loss` with respect to every differentiable node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor { shape: lt.shape.clone(), data: vec![1.0] });
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<(ParamId, usize)> = self.params.iter().map(|(&id, v)| (id, v.0)).collect();
        params.sort();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        let mut send = |j: usize, d: Tensor| {
            if !self.nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(acc) => acc.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.nodes[*a].needs_grad {
                    send(*a, matmul_nt(g, val(*b)));
                }
                if self.nodes[*b].needs_grad {
                    send(*b, matmul_tn(val(*a), g));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let kind = broadcast_kind(val(*a), val(*b)).expect("checked in forward");
                send(*a, g.clone());
                let gb = unbroadcast(g, val(*b), kind);
                let gb = if matches!(node.op, Op::Sub(..)) { gb.map(|x| -x) } else { gb };
                send(*b, gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let kind = broadcast_kind(ta, tb).expect("checked in forward");
                send(*a, broadcast_zip(g, tb, kind, |x, y| x * y));
                let full = g.zip(ta, |x, y| x * y);
                send(*b, unbroadcast(&full, tb, kind));
            }
            Op::Min(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ga = Tensor {
                    shape: g.shape.clone(),
                    data: (0..g.len()).map(|k| if ta.data[k] <= tb.data[k] { g.data[k] } else { 0.0 }).collect(),
                };
                let gb = g.zip(&ga, |x, y| x - y);
                send(*a, ga);
                send(*b, gb);
            }
            Op::Scale(a, k) => send(*a, g.map(|x| x * k)),
            Op::AddScalar(a) | Op::Reshape(a) => {
                let shape = val(*a).shape.clone();
                send(*a, Tensor { shape, data: g.data.clone() });
            }
            Op::Relu(a) => send(*a, g.zip(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::Exp(a) => send(*a, g.zip(&node.value, |d, y| d * y)),
            Op::Log(a) => send(*a, g.zip(val(*a), |d, x| d / x)),
            Op::Square(a) => send(*a, g.zip(val(*a), |d, x| 2.0 * x * d)),
            Op::Clamp(a, lo, hi) => send(*a, g.zip(val(*a), |d, x| if x >= *lo && x <= *hi { d } else { 0.0 })),
            Op::Sum(a) => send(*a, val(*a).map(|_| g.data[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                send(*a, val(*a).map(|_| g.data[0] / n));
            }
            Op::SumRows(a) => {
                let t = val(*a);
                let c = t.cols();
                send(*a, Tensor { shape: t.shape.clone(), data: (0..t.len()).map(|k| g.data[k % c]).collect() });
            }
            Op::SumCols(a) => {
                let t = val(*a);
                let c = t.cols();
                send(*a, Tensor { shape: t.shape.clone(), data: (0..t.len()).map(|k| g.data[k / c]).collect() });
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let t = val(p);
                    let c = t.cols();
                    let mut data = Vec::with_capacity(t.len());
                    for r in 0..rows {
                        data.extend_from_slice(&g.data[r * total + off..r * total + off + c]);
                    }
                    off += c;
                    send(p, Tensor { shape: t.shape.clone(), data });
                }
            }
            Op::Stack(parts) => {
                for (k, &p) in parts.iter().enumerate() {
                    let shape = val(p).shape.clone();
                    send(p, Tensor { shape, data: vec![g.data[k]] });
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut data = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), &g.data[r * c..(r + 1) * c]);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for k in 0..c {
                        data[r * c + k] = yr[k] * (gr[k] - dot);
                    }
                }
                send(*a, Tensor { shape: y.shape.clone(), data });
            }
            Op::MaskedLogSoftmax(a, mask) => {
                let y = &node.value;
                let total: f64 = g.data.iter().zip(mask).filter(|(_, &k)| k).map(|(d, _)| d).sum();
                let data = (0..y.len()).map(|k| if mask[k] { g.data[k] - y.data[k].exp() * total } else { 0.0 }).collect();
                send(*a, Tensor { shape: y.shape.clone(), data });
            }
            Op::GatherRows(a, idx) => {
                let t = val(*a);
                let c = t.cols();
                let mut data = vec![0.0; t.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for (o, x) in data[i * c..(i + 1) * c].iter_mut().zip(&g.data[r * c..(r + 1) * c]) {
                        *o += x;
                    }
                }
                send(*a, Tensor { shape: t.shape.clone(), data });
            }
            Op::ScatterRows(a, idx) => {
                let c = g.cols();
                let mut data = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    data.extend_from_slice(&g.data[i * c..(i + 1) * c]);
                }
                send(*a, Tensor { shape: vec![idx.len(), c], data });
            }
            Op::Index(a, k) => {
                let mut d = Tensor::zeros(&val(*a).shape);
                d.data[*k] = g.data[0];
                send(*a, d);
            }
        }
    }
}
