//! Dynamic reverse-mode tape.
//!
//! Every forward pass records its primitive operations into a fresh [`Tape`].
//! Node ids grow monotonically, so the record is already in topological order
//! and [`Tape::backward`] is a single reverse sweep that visits each node once.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::TensorError;
use crate::kernels::{self, ConvGeom};
use crate::scalar::{matmul_into, Scalar};
use crate::tensor::Tensor;

/// Lower clamp applied to the argument of [`Var::ln`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Backward rule of a user-defined op: `(inputs, output, grad_output) -> grad per input`.
pub type BackwardFn<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Vec<Tensor<T>>>;

enum Op<T: Scalar> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Powf(usize, T),
    Softmax { x: usize, axis: usize },
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Transpose(usize),
    Pick(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { x: usize, start: usize },
    GatherRows(usize, Vec<usize>),
    SetMean(usize),
    SetStd(usize),
    Conv2d { x: usize, k: usize, geom: ConvGeom },
    ChannelAffine { x: usize, scale: usize, shift: usize },
    GlobalAvgPool(usize),
    Custom { inputs: Vec<usize>, backward: BackwardFn<T> },
}

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    tracked: bool,
}

/// Operation record for one forward pass. Confined to a single thread.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Gradients of the leaves reached by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when it did not influence the loss.
    pub fn get_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Records a user-defined op with an explicit backward rule.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t, T>],
        output: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Var<'t, T> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        self.push(output, Op::Custom { inputs: ids.clone(), backward }, &ids)
    }

    fn push_raw(&self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, tracked });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var<'_, T> {
        let tracked = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].tracked)
        };
        if tracked {
            self.push_raw(value, op, true)
        } else {
            self.push_raw(value, Op::Leaf, false)
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Propagates d(loss)/d(node) back to every tracked leaf.
    ///
    /// A leaf used by several ops receives the sum of the contributions.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>, TensorError> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(TensorError::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if !root.tracked {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::full(root.value.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let mut acc = |target: usize, t: Tensor<T>| {
                if !nodes[target].tracked {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            let val = |i: usize| -> &Tensor<T> { &nodes[i].value };
            let out = &node.value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    if nodes[*a].tracked {
                        let mut ga = vec![T::zero(); m * k];
                        T::gemm(m, n, k, T::one(), g.data(), n as isize, 1, bv.data(), 1, n as isize, T::zero(), &mut ga, k as isize, 1);
                        acc(*a, Tensor::new(vec![m, k], ga)?);
                    }
                    if nodes[*b].tracked {
                        let mut gb = vec![T::zero(); k * n];
                        T::gemm(k, m, n, T::one(), av.data(), 1, k as isize, g.data(), n as isize, 1, T::zero(), &mut gb, n as isize, 1);
                        acc(*b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, val(*b), |gv, bv| gv * bv);
                    let gb = zip_map(&g, val(*a), |gv, av| gv * av);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::AddRow(x, b) => {
                    let n = val(*b).numel();
                    let mut gb = vec![T::zero(); n];
                    for row in g.data().chunks_exact(n) {
                        for (d, v) in gb.iter_mut().zip(row) {
                            *d += *v;
                        }
                    }
                    acc(*b, Tensor::new(val(*b).shape().to_vec(), gb)?);
                    acc(*x, g);
                }
                Op::Scale(x, s) => acc(*x, g.map(|v| v * *s)),
                Op::Relu(x) => acc(*x, zip_map(&g, val(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() })),
                Op::Exp(x) => acc(*x, zip_map(&g, out, |gv, yv| gv * yv)),
                Op::Ln(x) => {
                    let floor = T::of(LOG_FLOOR);
                    acc(*x, zip_map(&g, val(*x), |gv, xv| if xv >= floor { gv / xv } else { T::zero() }));
                }
                Op::Powf(x, p) => {
                    let p = *p;
                    acc(
                        *x,
                        zip_map(&g, val(*x), |gv, xv| {
                            if p == T::zero() || xv <= T::zero() {
                                T::zero()
                            } else {
                                gv * p * xv.powf(p - T::one())
                            }
                        }),
                    );
                }
                Op::Softmax { x, axis } => {
                    let (o, l, i) = kernels::axis_split(out.shape(), *axis);
                    let gx = kernels::softmax_backward(out.data(), g.data(), o, l, i);
                    acc(*x, Tensor::new(out.shape().to_vec(), gx)?);
                }
                Op::Sum(x) => acc(*x, Tensor::full(val(*x).shape(), g.item())),
                Op::Mean(x) => {
                    let xv = val(*x);
                    let scale = g.item() / T::of(xv.numel() as f64);
                    acc(*x, Tensor::full(xv.shape(), scale));
                }
                Op::Reshape(x) => acc(*x, g.reshape(val(*x).shape())?),
                Op::Transpose(x) => acc(*x, transpose2(&g)),
                Op::Pick(x, idx) => {
                    let xv = val(*x);
                    let n = xv.shape()[1];
                    let mut gx = vec![T::zero(); xv.numel()];
                    for (r, &c) in idx.iter().enumerate() {
                        gx[r * n + c] = g.data()[r];
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
                Op::ConcatCols(parts) => {
                    let total = out.shape()[1];
                    let rows = out.shape()[0];
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).shape()[1];
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        acc(p, Tensor::new(vec![rows, w], gp)?);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = val(p);
                        let len = pv.numel();
                        acc(p, Tensor::new(pv.shape().to_vec(), g.data()[offset..offset + len].to_vec())?);
                        offset += len;
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = val(*x);
                    let (rows, n) = (xv.shape()[0], xv.shape()[1]);
                    let w = out.shape()[1];
                    let mut gx = vec![T::zero(); rows * n];
                    for r in 0..rows {
                        gx[r * n + start..r * n + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    acc(*x, Tensor::new(vec![rows, n], gx)?);
                }
                Op::GatherRows(x, idx) => {
                    let xv = val(*x);
                    let stride = xv.numel() / xv.shape()[0];
                    let mut gx = vec![T::zero(); xv.numel()];
                    for (r, &src) in idx.iter().enumerate() {
                        for (d, v) in gx[src * stride..(src + 1) * stride].iter_mut().zip(&g.data()[r * stride..(r + 1) * stride]) {
                            *d += *v;
                        }
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
                Op::SetMean(x) => {
                    let xv = val(*x);
                    let (groups, n, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                    let inv = T::one() / T::of(n as f64);
                    let mut gx = vec![T::zero(); xv.numel()];
                    for gi in 0..groups {
                        let src = &g.data()[gi * c..(gi + 1) * c];
                        for row in gx[gi * n * c..(gi + 1) * n * c].chunks_exact_mut(c) {
                            for (d, v) in row.iter_mut().zip(src) {
                                *d = *v * inv;
                            }
                        }
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
                Op::SetStd(x) => {
                    let xv = val(*x);
                    let (groups, n, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                    let mean = kernels::set_mean(xv.data(), groups, n, c);
                    let nf = T::of(n as f64);
                    let mut gx = vec![T::zero(); xv.numel()];
                    for gi in 0..groups {
                        let range = gi * n * c..(gi + 1) * n * c;
                        let sd = &out.data()[gi * c..(gi + 1) * c];
                        let mu = &mean[gi * c..(gi + 1) * c];
                        let gg = &g.data()[gi * c..(gi + 1) * c];
                        for (grow, xrow) in gx[range.clone()].chunks_exact_mut(c).zip(xv.data()[range].chunks_exact(c)) {
                            for j in 0..c {
                                if sd[j] > T::zero() {
                                    grow[j] = gg[j] * (xrow[j] - mu[j]) / (nf * sd[j]);
                                }
                            }
                        }
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
                Op::Conv2d { x, k, geom } => {
                    let (xv, kv) = (val(*x), val(*k));
                    let (gx, gk) = kernels::conv2d_backward(geom, xv.data(), kv.data(), g.data());
                    if nodes[*x].tracked {
                        acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                    }
                    acc(*k, Tensor::new(kv.shape().to_vec(), gk)?);
                }
                Op::ChannelAffine { x, scale, shift } => {
                    let (xv, sv) = (val(*x), val(*scale));
                    let c = sv.numel();
                    let spatial = xv.numel() / (xv.shape()[0] * c);
                    let mut gx = vec![T::zero(); xv.numel()];
                    let mut gs = vec![T::zero(); c];
                    let mut gb = vec![T::zero(); c];
                    for (blk, (gblk, xblk)) in g.data().chunks_exact(spatial).zip(xv.data().chunks_exact(spatial)).enumerate() {
                        let ch = blk % c;
                        let s = sv.data()[ch];
                        for ((d, gv), xval) in gx[blk * spatial..(blk + 1) * spatial].iter_mut().zip(gblk).zip(xblk) {
                            *d = *gv * s;
                            gs[ch] += *gv * *xval;
                            gb[ch] += *gv;
                        }
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                    acc(*scale, Tensor::new(sv.shape().to_vec(), gs)?);
                    acc(*shift, Tensor::new(val(*shift).shape().to_vec(), gb)?);
                }
                Op::GlobalAvgPool(x) => {
                    let xv = val(*x);
                    let blocks = out.numel();
                    let spatial = xv.numel() / blocks;
                    let inv = T::one() / T::of(spatial as f64);
                    let mut gx = Vec::with_capacity(xv.numel());
                    for gv in g.data() {
                        gx.extend(std::iter::repeat_n(*gv * inv, spatial));
                    }
                    acc(*x, Tensor::new(xv.shape().to_vec(), gx)?);
                }
                Op::Custom { inputs, backward } => {
                    let vals: Vec<&Tensor<T>> = inputs.iter().map(|&i| val(i)).collect();
                    let gs = backward(&vals, out, &g);
                    if gs.len() != inputs.len() {
                        return Err(TensorError::contract("custom", "backward returned wrong number of gradients"));
                    }
                    for (&i, gi) in inputs.iter().zip(gs) {
                        if gi.shape() != val(i).shape() {
                            return Err(TensorError::dim("custom backward", gi.shape(), val(i).shape()));
                        }
                        acc(i, gi);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn transpose2<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("transpose shape")
}

fn require_rank(op: &'static str, shape: &[usize], rank: usize) -> Result<(), TensorError> {
    if shape.len() != rank {
        return Err(TensorError::contract(op, format!("expected rank {rank}, got shape {shape:?}")));
    }
    Ok(())
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (a, b) = (self.value(), rhs.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::dim("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![T::zero(); m * n];
        matmul_into(m, k, n, a.data(), b.data(), &mut c);
        Ok(self.tape.push(Tensor::new(vec![m, n], c)?, Op::MatMul(self.id, rhs.id), &[self.id, rhs.id]))
    }

    fn binary(self, rhs: Var<'t, T>, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var<'t, T>, TensorError> {
        let (a, b) = (self.value(), rhs.value());
        if a.shape() != b.shape() {
            return Err(TensorError::dim(name, a.shape(), b.shape()));
        }
        Ok(self.tape.push(zip_map(&a, &b, f), op, &[self.id, rhs.id]))
    }

    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(rhs, "add", |x, y| x + y, Op::Add(self.id, rhs.id))
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(rhs, "sub", |x, y| x - y, Op::Sub(self.id, rhs.id))
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        self.binary(rhs, "mul", |x, y| x * y, Op::Mul(self.id, rhs.id))
    }

    /// `x[i][j] + bias[j]` for `x` of shape `(m, n)` and bias of `n` values.
    pub fn add_row(self, bias: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (x, b) = (self.value(), bias.value());
        let n = b.numel();
        if x.rank() != 2 || x.shape()[1] != n {
            return Err(TensorError::dim("add_row", x.shape(), b.shape()));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (d, v) in row.iter_mut().zip(b.data()) {
                *d += *v;
            }
        }
        Ok(self.tape.push(Tensor::new(x.shape().to_vec(), data)?, Op::AddRow(self.id, bias.id), &[self.id, bias.id]))
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        let y = self.value().map(|v| v * s);
        self.tape.push(y, Op::Scale(self.id, s), &[self.id])
    }

    /// `s·x + offset`.
    pub fn affine_scalar(self, s: T, offset: T) -> Var<'t, T> {
        let y = self.value().map(|v| v * s + offset);
        self.tape.push(y, Op::Scale(self.id, s), &[self.id])
    }

    pub fn relu(self) -> Var<'t, T> {
        let y = self.value().map(|v| if v > T::zero() { v } else { T::zero() });
        self.tape.push(y, Op::Relu(self.id), &[self.id])
    }

    pub fn exp(self) -> Var<'t, T> {
        let y = self.value().map(T::exp);
        self.tape.push(y, Op::Exp(self.id), &[self.id])
    }

    /// Natural log of `max(x, 1e-12)`.
    pub fn ln(self) -> Var<'t, T> {
        let floor = T::of(LOG_FLOOR);
        let y = self.value().map(|v| v.max(floor).ln());
        self.tape.push(y, Op::Ln(self.id), &[self.id])
    }

    /// Elementwise `x^p`; the derivative is taken as 0 wherever `x <= 0`.
    pub fn powf(self, p: T) -> Var<'t, T> {
        let y = self.value().map(|v| if p == T::zero() { T::one() } else { v.max(T::zero()).powf(p) });
        self.tape.push(y, Op::Powf(self.id, p), &[self.id])
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(TensorError::contract("softmax", format!("axis {axis} invalid for shape {:?}", x.shape())));
        }
        let (o, l, i) = kernels::axis_split(x.shape(), axis);
        let y = kernels::softmax_forward(x.data(), o, l, i);
        Ok(self.tape.push(Tensor::new(x.shape().to_vec(), y)?, Op::Softmax { x: self.id, axis }, &[self.id]))
    }

    pub fn sum(self) -> Var<'t, T> {
        let s = self.value().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Var<'t, T> {
        let x = self.value();
        let s: T = x.data().iter().copied().sum();
        let m = s / T::of(x.numel() as f64);
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id), &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>, TensorError> {
        let y = (*self.value()).clone().reshape(shape)?;
        Ok(self.tape.push(y, Op::Reshape(self.id), &[self.id]))
    }

    pub fn transpose(self) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        require_rank("transpose", x.shape(), 2)?;
        Ok(self.tape.push(transpose2(&x), Op::Transpose(self.id), &[self.id]))
    }

    /// Selects `x[i][cols[i]]` from a `(m, n)` matrix, giving `m` values.
    pub fn pick(self, cols: &[usize]) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        require_rank("pick", x.shape(), 2)?;
        let (m, n) = (x.shape()[0], x.shape()[1]);
        if cols.len() != m {
            return Err(TensorError::contract("pick", format!("{} indices for {m} rows", cols.len())));
        }
        if let Some(bad) = cols.iter().find(|&&c| c >= n) {
            return Err(TensorError::contract("pick", format!("column {bad} out of range 0..{n}")));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| x.data()[r * n + c]).collect();
        Ok(self.tape.push(Tensor::new(vec![m], data)?, Op::Pick(self.id, cols.to_vec()), &[self.id]))
    }

    /// Concatenates `(m, n_i)` matrices side by side.
    pub fn concat_cols(parts: &[Var<'t, T>]) -> Result<Var<'t, T>, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::contract("concat_cols", "no inputs"))?;
        let vals: Vec<_> = parts.iter().map(Var::value).collect();
        let rows = vals[0].shape()[0];
        for v in &vals {
            if v.rank() != 2 || v.shape()[0] != rows {
                return Err(TensorError::dim("concat_cols", vals[0].shape(), v.shape()));
            }
        }
        let total: usize = vals.iter().map(|v| v.shape()[1]).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                let w = v.shape()[1];
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.push(Tensor::new(vec![rows, total], data)?, Op::ConcatCols(ids.clone()), &ids))
    }

    /// Concatenates along the leading axis; trailing extents must agree.
    pub fn concat_rows(parts: &[Var<'t, T>]) -> Result<Var<'t, T>, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::contract("concat_rows", "no inputs"))?;
        let vals: Vec<_> = parts.iter().map(Var::value).collect();
        let tail = vals[0].shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for v in &vals {
            if v.shape()[1..] != tail[..] {
                return Err(TensorError::dim("concat_rows", vals[0].shape(), v.shape()));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.push(Tensor::new(shape, data)?, Op::ConcatRows(ids.clone()), &ids))
    }

    /// Columns `start..end` of a `(m, n)` matrix.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        require_rank("slice_cols", x.shape(), 2)?;
        let (m, n) = (x.shape()[0], x.shape()[1]);
        if start >= end || end > n {
            return Err(TensorError::contract("slice_cols", format!("range {start}..{end} invalid for {n} columns")));
        }
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&x.data()[r * n + start..r * n + end]);
        }
        Ok(self.tape.push(Tensor::new(vec![m, end - start], data)?, Op::SliceCols { x: self.id, start }, &[self.id]))
    }

    /// Rows `idx` (along the leading axis), in the given order; repeats allowed.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        let lead = x.shape()[0];
        if idx.is_empty() {
            return Err(TensorError::contract("gather_rows", "empty index list"));
        }
        if let Some(bad) = idx.iter().find(|&&i| i >= lead) {
            return Err(TensorError::contract("gather_rows", format!("row {bad} out of range 0..{lead}")));
        }
        let stride = x.numel() / lead;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            data.extend_from_slice(&x.data()[i * stride..(i + 1) * stride]);
        }
        let mut shape = x.shape().to_vec();
        shape[0] = idx.len();
        Ok(self.tape.push(Tensor::new(shape, data)?, Op::GatherRows(self.id, idx.to_vec()), &[self.id]))
    }

    /// Mean over the middle axis: `(g, n, c) -> (g, c)`.
    pub fn set_mean(self) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        require_rank("set_mean", x.shape(), 3)?;
        let (g, n, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let y = kernels::set_mean(x.data(), g, n, c);
        Ok(self.tape.push(Tensor::new(vec![g, c], y)?, Op::SetMean(self.id), &[self.id]))
    }

    /// Population standard deviation over the middle axis: `(g, n, c) -> (g, c)`.
    ///
    /// The derivative is taken as 0 where the deviation is exactly 0.
    pub fn set_std(self) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        require_rank("set_std", x.shape(), 3)?;
        let (g, n, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mean = kernels::set_mean(x.data(), g, n, c);
        let y = kernels::set_std(x.data(), &mean, g, n, c);
        Ok(self.tape.push(Tensor::new(vec![g, c], y)?, Op::SetStd(self.id), &[self.id]))
    }

    /// Cross-correlation of `(C, H, W)` or `(N, C, H, W)` input with `(O, C, kH, kW)` kernels.
    pub fn conv2d(self, kernels_: Var<'t, T>, stride: usize, padding: usize) -> Result<Var<'t, T>, TensorError> {
        let (x, k) = (self.value(), kernels_.value());
        let batched = match x.rank() {
            3 => false,
            4 => true,
            _ => return Err(TensorError::dim("conv2d", x.shape(), k.shape())),
        };
        if k.rank() != 4 || stride == 0 {
            return Err(TensorError::dim("conv2d", x.shape(), k.shape()));
        }
        let s = x.shape();
        let (n, c, h, w) = if batched { (s[0], s[1], s[2], s[3]) } else { (1, s[0], s[1], s[2]) };
        let (o, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kc != c || kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::dim("conv2d", x.shape(), k.shape()));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let geom = ConvGeom { n, c, h, w, o, kh, kw, stride, pad: padding, oh, ow };
        let y = kernels::conv2d_forward(&geom, x.data(), k.data());
        let shape = if batched { vec![n, o, oh, ow] } else { vec![o, oh, ow] };
        Ok(self.tape.push(Tensor::new(shape, y)?, Op::Conv2d { x: self.id, k: kernels_.id, geom }, &[self.id, kernels_.id]))
    }

    /// `x[n][c][..]·scale[c] + shift[c]` for `x` of shape `(N, C, ...)`.
    pub fn channel_affine(self, scale: Var<'t, T>, shift: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (x, sv, bv) = (self.value(), scale.value(), shift.value());
        if x.rank() < 2 || sv.numel() != x.shape()[1] || bv.numel() != x.shape()[1] {
            return Err(TensorError::dim("channel_affine", x.shape(), sv.shape()));
        }
        let c = sv.numel();
        let spatial = x.numel() / (x.shape()[0] * c);
        let mut data = x.data().to_vec();
        for (blk, chunk) in data.chunks_exact_mut(spatial).enumerate() {
            let ch = blk % c;
            let (s, b) = (sv.data()[ch], bv.data()[ch]);
            for v in chunk {
                *v = *v * s + b;
            }
        }
        Ok(self.tape.push(
            Tensor::new(x.shape().to_vec(), data)?,
            Op::ChannelAffine { x: self.id, scale: scale.id, shift: shift.id },
            &[self.id, scale.id, shift.id],
        ))
    }

    /// Mean over all trailing axes: `(N, C, ...) -> (N, C)`.
    pub fn global_avg_pool(self) -> Result<Var<'t, T>, TensorError> {
        let x = self.value();
        if x.rank() < 3 {
            return Err(TensorError::contract("global_avg_pool", format!("expected rank >= 3, got {:?}", x.shape())));
        }
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let spatial = x.numel() / (n * c);
        let inv = T::one() / T::of(spatial as f64);
        let data = x.data().chunks_exact(spatial).map(|ch| ch.iter().copied().sum::<T>() * inv).collect();
        Ok(self.tape.push(Tensor::new(vec![n, c], data)?, Op::GlobalAvgPool(self.id), &[self.id]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 2], &[5., 6., 7., 8.]));
        assert_eq!(a.matmul(b).unwrap().value().data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_identity_and_zero() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[0.3, -1.2, 4.0, 2.5]));
        let eye = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let zero = tape.constant(Tensor::zeros(&[2, 2]));
        assert_eq!(eye.matmul(x).unwrap().value().data(), x.value().data());
        assert!(zero.matmul(x).unwrap().value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let msg = a.matmul(b).err().unwrap().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn conv2d_hand_examples() {
        let tape = Tape::new();
        let img = tape.constant(Tensor::full(&[1, 3, 3], 1.0));
        let ones = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = img.conv2d(ones, 1, 0).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1]);
        assert_eq!(y.value().item(), 9.0);

        let x = tape.constant(t(&[1, 2, 2], &[1., 2., 3., 4.]));
        let unit = tape.constant(t(&[1, 1, 1, 1], &[1.]));
        assert_eq!(x.conv2d(unit, 1, 0).unwrap().value().data(), x.value().data());

        let zero = tape.constant(Tensor::zeros(&[2, 1, 3, 3]));
        let z = x.conv2d(zero, 1, 1).unwrap();
        assert_eq!(z.shape(), vec![2, 2, 2]);
        assert!(z.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_rejects_oversized_kernel() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 2]));
        let k = tape.constant(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(matches!(x.conv2d(k, 1, 0), Err(TensorError::Dimension { .. })));
        assert!(x.conv2d(k, 1, 1).is_ok());
    }

    #[test]
    fn softmax_hand_examples() {
        let tape = Tape::new();
        let y = tape.constant(t(&[2], &[0.0, 3f64.ln()])).softmax(0).unwrap();
        assert!((y.value().data()[0] - 0.25).abs() < 1e-12);
        assert!((y.value().data()[1] - 0.75).abs() < 1e-12);
        let u = tape.constant(Tensor::full(&[5], 2.0)).softmax(0).unwrap();
        assert!(u.value().data().iter().all(|&v| (v - 0.2).abs() < 1e-12));
        assert!(tape.constant(Tensor::zeros(&[2, 2])).softmax(2).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let tape = Tape::<f32>::new();
        let y = tape.constant(Tensor::from_f64(&[3], &[1000.0, 999.0, -1000.0]).unwrap()).softmax(0).unwrap();
        let v = y.value();
        assert!(v.all_finite());
        assert!((v.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn backward_sum_of_squares() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1., 2., 3.]));
        let loss = x.mul(x).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2., 4., 6.]);
    }

    #[test]
    fn backward_constant_function_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]));
        let c = tape.constant(t(&[2], &[3., 4.]));
        let loss = c.sum().add(x.scale(0.0).sum()).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get_or_zeros(x).data(), &[0., 0.]);
    }

    #[test]
    fn backward_column_sums_of_all_ones_matrix() {
        let (m, n) = (4, 3);
        let tape = Tape::new();
        let a = tape.constant(Tensor::full(&[m, n], 1.0));
        let x = tape.leaf(t(&[n, 1], &[0.5, -1.0, 2.0]));
        let loss = a.matmul(x).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[m as f64; 3]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]));
        assert!(matches!(tape.backward(x.relu()), Err(TensorError::Contract { .. })));
    }

    #[test]
    fn reused_tensor_accumulates_exactly() {
        let xs = [0.7, -1.3, 2.2];
        let single = |k: f64| {
            let tape = Tape::new();
            let x = tape.leaf(t(&[3], &xs));
            let loss = x.scale(k).exp().sum();
            tape.backward(loss).unwrap().get(x).unwrap().clone()
        };
        let tape = Tape::new();
        let x = tape.leaf(t(&[3], &xs));
        let loss = x.scale(0.5).exp().sum().add(x.scale(2.0).exp().sum()).unwrap();
        let both = tape.backward(loss).unwrap().get(x).unwrap().clone();
        let (a, b) = (single(0.5), single(2.0));
        for i in 0..3 {
            assert_eq!(both.data()[i], a.data()[i] + b.data()[i]);
        }
    }

    #[test]
    fn std_of_identical_rows_is_exactly_zero_with_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[1, 3, 2], &[0.4, 1.0, 0.4, 1.0, 0.4, 1.0]));
        let sd = x.set_std().unwrap();
        assert_eq!(sd.value().data(), &[0.0, 0.0]);
        let grads = tape.backward(sd.sum()).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn std_of_many_identical_pixels_is_exactly_zero() {
        for v in [0.1f32, 0.7, -3.3, 1e-3, 123.456] {
            for n in [7usize, 9, 49, 300] {
                let tape = Tape::new();
                let x = tape.constant(Tensor::full(&[1, n, 1], v));
                assert_eq!(x.set_std().unwrap().value().data(), &[0.0], "value {v} n {n}");
                assert_eq!(x.set_mean().unwrap().value().data(), &[v]);
            }
        }
    }

    #[test]
    fn ln_is_clamped() {
        let tape = Tape::<f64>::new();
        let y = tape.constant(t(&[2], &[0.0, 1.0])).ln();
        assert_eq!(y.value().data()[0], LOG_FLOOR.ln());
        assert_eq!(y.value().data()[1], 0.0);
    }
}
