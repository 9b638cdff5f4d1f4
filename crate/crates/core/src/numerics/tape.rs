//! Reverse-mode differentiation over a fixed op set.
//!
//! Every op evaluates eagerly and appends a node holding its output and the
//! indices of its inputs. Inputs always precede outputs, so a single reverse
//! sweep over the node list visits each op exactly once.

use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels;
use super::tensor::{fmt_shape, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    TopkMask {
        input: usize,
        keep: Option<Vec<bool>>,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    MeanAxis {
        input: usize,
        axis: usize,
    },
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Reshape(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records differentiable ops and replays them in reverse.
///
/// A tape is single-threaded; independent tapes may live on different
/// threads.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input; it receives a gradient on backward.
    pub fn leaf(&mut self, mut value: Tensor) -> Var {
        value.grad = None;
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, mut value: Tensor) -> Var {
        value.grad = None;
        self.push_unchecked(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).value.grad.as_deref()
    }

    /// Whether `v` was recorded on this tape.
    pub fn owns(&self, v: Var) -> bool {
        v.tape == self.id && v.index < self.nodes.len()
    }

    fn node(&self, v: Var) -> &Node {
        assert!(self.owns(v), "variable does not belong to this tape");
        &self.nodes[v.index]
    }

    fn check(&self, v: Var) -> Result<usize> {
        if self.owns(v) {
            Ok(v.index)
        } else {
            Err(Error::Tape("variable belongs to a different tape".into()))
        }
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if let Some(bad) = value.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{name} produced non-finite value {bad}"
            )));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn data(&self, i: usize) -> &[f64] {
        self.nodes[i].value.data()
    }

    fn shape_of(&self, i: usize) -> &[usize] {
        self.nodes[i].value.shape()
    }

    fn dims2(&self, op: &'static str, i: usize) -> Result<(usize, usize)> {
        match *self.shape_of(i) {
            [m, n] => Ok((m, n)),
            ref s => Err(Error::shape(
                op,
                format!("expected a 2-D tensor, got {}", fmt_shape(s)),
            )),
        }
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        if self.shape_of(a) == self.shape_of(b) {
            Ok(())
        } else {
            Err(Error::shape(
                op,
                format!(
                    "{} vs {}",
                    fmt_shape(self.shape_of(a)),
                    fmt_shape(self.shape_of(b))
                ),
            ))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let (m, p) = self.dims2("matmul", a)?;
        let (p2, n) = self.dims2("matmul", b)?;
        if p != p2 {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{} vs {}",
                    fmt_shape(self.shape_of(a)),
                    fmt_shape(self.shape_of(b))
                ),
            ));
        }
        let out = kernels::matmul(self.data(a), self.data(b), m, p, n);
        self.push(
            "matmul",
            Tensor::new([m, n], out)?,
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let (m, n) = self.dims2("transpose", a)?;
        let out = kernels::transpose(self.data(a), m, n);
        self.push(
            "transpose",
            Tensor::new([n, m], out)?,
            Op::Transpose(a),
            &[a],
        )
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape(name, a, b)?;
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape_of(a).to_vec();
        self.push(name, Tensor::new(shape, out)?, op(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Adds a vector of length `last_dim(a)` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (a, bias) = (self.check(a)?, self.check(bias)?);
        let n = self.nodes[a].value.last_dim();
        if self.shape_of(bias) != [n] {
            return Err(Error::shape(
                "add_bias",
                format!(
                    "{} vs bias {}",
                    fmt_shape(self.shape_of(a)),
                    fmt_shape(self.shape_of(bias))
                ),
            ));
        }
        let b = self.data(bias);
        let out: Vec<f64> = self
            .data(a)
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let shape = self.shape_of(a).to_vec();
        self.push(
            "add_bias",
            Tensor::new(shape, out)?,
            Op::AddBias(a, bias),
            &[a, bias],
        )
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let a = self.check(a)?;
        let out: Vec<f64> = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape_of(a).to_vec();
        self.push(name, Tensor::new(shape, out)?, op, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let i = self.check(a)?;
        self.map("scale", a, |x| x * factor, Op::Scale(i, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(i))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.map("tanh", a, f64::tanh, Op::Tanh(i))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.map("relu", a, |x| x.max(0.0), Op::Relu(i))
    }

    /// Row-wise softmax over the last axis of a 2-D tensor.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let (m, n) = self.dims2("softmax_rows", a)?;
        if self
            .data(a)
            .iter()
            .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::Numeric(
                "softmax_rows input contains NaN or +inf".into(),
            ));
        }
        let out = kernels::softmax_rows(self.data(a), n)?;
        self.push(
            "softmax_rows",
            Tensor::new([m, n], out)?,
            Op::Softmax(a),
            &[a],
        )
    }

    /// Keeps the `k` largest entries of each row and sets the rest to `-inf`.
    ///
    /// Rows with `k >= n` pass through untouched.
    pub fn topk_mask_rows(&mut self, a: Var, k: usize) -> Result<Var> {
        let a = self.check(a)?;
        if k < 1 {
            return Err(Error::Config(
                "top-k retention count must be at least 1".into(),
            ));
        }
        let (m, n) = self.dims2("topk_mask_rows", a)?;
        let mut out = self.data(a).to_vec();
        let keep = if k >= n {
            None
        } else {
            let mut keep = Vec::with_capacity(m * n);
            for row in out.chunks_exact_mut(n) {
                let row_keep = kernels::topk_keep(row, k);
                for (v, &kept) in row.iter_mut().zip(&row_keep) {
                    if !kept {
                        *v = f64::NEG_INFINITY;
                    }
                }
                keep.extend(row_keep);
            }
            Some(keep)
        };
        // -inf is the intended output here, so skip the finiteness check.
        let requires_grad = self.nodes[a].requires_grad;
        Ok(self.push_unchecked(
            Tensor::new([m, n], out)?,
            Op::TopkMask { input: a, keep },
            requires_grad,
        ))
    }

    /// Normalizes over the last axis, then applies `gamma * x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (x, gamma, beta) = (self.check(x)?, self.check(gamma)?, self.check(beta)?);
        if eps <= 0.0 {
            return Err(Error::Config("layer_norm eps must be positive".into()));
        }
        let d = self.nodes[x].value.last_dim();
        for p in [gamma, beta] {
            if self.shape_of(p) != [d] {
                return Err(Error::shape(
                    "layer_norm",
                    format!(
                        "{} vs affine {}",
                        fmt_shape(self.shape_of(x)),
                        fmt_shape(self.shape_of(p))
                    ),
                ));
            }
        }
        let (out, normalized, inv_std) =
            kernels::layer_norm_rows(self.data(x), self.data(gamma), self.data(beta), eps);
        let shape = self.shape_of(x).to_vec();
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            normalized,
            inv_std,
        };
        self.push(
            "layer_norm",
            Tensor::new(shape, out)?,
            op,
            &[x, gamma, beta],
        )
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let idx: Vec<usize> = parts
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<_>>()?;
        let Some(&first) = idx.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        let base = self.shape_of(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {axis} out of range for {}", fmt_shape(&base)),
            ));
        }
        let mut total = 0;
        for &i in &idx {
            let s = self.shape_of(i);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(ax, (x, y))| ax == axis || x == y);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("{} vs {} along axis {axis}", fmt_shape(&base), fmt_shape(s)),
                ));
            }
            total += s[axis];
        }
        let (outer, _, inner) = kernels::axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &i in &idx {
                let chunk = self.shape_of(i)[axis] * inner;
                out.extend_from_slice(&self.data(i)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            "concat",
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: idx.clone(),
                axis,
            },
            &idx,
        )
    }

    pub fn concat_last_axis(&mut self, a: Var, b: Var) -> Result<Var> {
        let rank = self.value(a).rank();
        if rank == 0 {
            return Err(Error::shape("concat_last_axis", "scalar input"));
        }
        self.concat(&[a, b], rank - 1)
    }

    /// Averages over `axis`, removing it from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let a = self.check(a)?;
        let shape = self.shape_of(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "mean_axis",
                format!("axis {axis} out of range for {}", fmt_shape(&shape)),
            ));
        }
        let (outer, len, inner) = kernels::axis_split(&shape, axis);
        let src = self.data(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..len {
                let row = &src[(o * len + t) * inner..(o * len + t + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let scale = 1.0 / len as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        let mut new_shape = shape;
        new_shape.remove(axis);
        self.push(
            "mean_axis",
            Tensor::new(new_shape, out)?,
            Op::MeanAxis { input: a, axis },
            &[a],
        )
    }

    /// Takes `len` consecutive entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let a = self.check(a)?;
        let shape = self.shape_of(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!(
                    "[{start}, {}) on axis {axis} of {}",
                    start + len,
                    fmt_shape(&shape)
                ),
            ));
        }
        let (outer, dim, inner) = kernels::axis_split(&shape, axis);
        let src = self.data(a);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        self.push(
            "slice",
            Tensor::new(new_shape, out)?,
            Op::Slice {
                input: a,
                axis,
                start,
            },
            &[a],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let a = self.check(a)?;
        let value = self.nodes[a].value.clone().reshape(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let total = self.data(a).iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let n = self.data(a).len() as f64;
        let total: f64 = self.data(a).iter().sum();
        self.push("mean", Tensor::scalar(total / n), Op::Mean(a), &[a])
    }

    fn accumulate_slice(&mut self, i: usize, input: usize, axis: usize, start: usize) {
        let (lower, upper) = self.nodes.split_at_mut(i);
        let (parent, node) = (&mut lower[input], &upper[0]);
        if !parent.requires_grad {
            return;
        }
        let g = node.value.grad.as_deref().expect("caller checked");
        let (outer, dim, inner) = kernels::axis_split(parent.value.shape(), axis);
        let len = node.value.shape()[axis];
        let numel = parent.value.numel();
        let acc = parent.value.grad.get_or_insert_with(|| vec![0.0; numel]);
        for o in 0..outer {
            let dst = (o * dim + start) * inner;
            let src = &g[o * len * inner..(o + 1) * len * inner];
            acc[dst..dst + len * inner]
                .iter_mut()
                .zip(src)
                .for_each(|(a, s)| *a += s);
        }
    }

    /// Clears all gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        self.backward_done = false;
    }

    /// Propagates d(loss)/d(node) to every differentiable node reachable
    /// from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.owns(loss) {
            return Err(Error::Tape("loss belongs to a different tape".into()));
        }
        if self.backward_done {
            return Err(Error::Tape(
                "backward already ran on this tape; reset gradients first".into(),
            ));
        }
        let root = &mut self.nodes[loss.index];
        if !root.value.is_scalar() {
            return Err(Error::Tape(format!(
                "loss must be scalar, got shape {}",
                fmt_shape(root.value.shape())
            )));
        }
        if !root.requires_grad {
            return Err(Error::Tape(
                "loss is detached from every differentiable input".into(),
            ));
        }
        root.value.grad = Some(vec![1.0]);
        self.backward_done = true;

        for i in (0..=loss.index).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            if self.nodes[i].value.grad.is_none() {
                continue;
            }
            if let Op::Slice { input, axis, start } = self.nodes[i].op {
                // Accumulated in place: a dense contribution per slice would
                // make segmented attention quadratic in sequence length.
                self.accumulate_slice(i, input, axis, start);
                continue;
            }
            let g = self.nodes[i].value.grad.as_deref().expect("checked above");
            let contributions = self.node_vjp(i, g);
            for (j, contrib) in contributions {
                let node = &mut self.nodes[j];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.value.grad {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` given its output gradient `g`.
    fn node_vjp(&self, i: usize, g: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let node = &self.nodes[i];
        let out = node.value.data();
        let wants = |j: usize| self.nodes[j].requires_grad;
        let mut res = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, p) = (self.shape_of(a)[0], self.shape_of(a)[1]);
                let n = self.shape_of(b)[1];
                if wants(a) {
                    res.push((a, kernels::matmul_grad_lhs(g, self.data(b), m, p, n)));
                }
                if wants(b) {
                    res.push((b, kernels::matmul_grad_rhs(self.data(a), g, m, p, n)));
                }
            }
            &Op::Transpose(a) => {
                let (m, n) = (self.shape_of(a)[0], self.shape_of(a)[1]);
                res.push((a, kernels::transpose(g, n, m)));
            }
            &Op::Add(a, b) => {
                res.push((a, g.to_vec()));
                res.push((b, g.to_vec()));
            }
            &Op::Sub(a, b) => {
                res.push((a, g.to_vec()));
                res.push((b, g.iter().map(|v| -v).collect()));
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    res.push((a, g.iter().zip(self.data(b)).map(|(x, y)| x * y).collect()));
                }
                if wants(b) {
                    res.push((b, g.iter().zip(self.data(a)).map(|(x, y)| x * y).collect()));
                }
            }
            &Op::AddBias(a, bias) => {
                res.push((a, g.to_vec()));
                if wants(bias) {
                    let n = self.shape_of(bias)[0];
                    let mut gb = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
                    }
                    res.push((bias, gb));
                }
            }
            &Op::Scale(a, factor) => res.push((a, g.iter().map(|v| v * factor).collect())),
            &Op::Sigmoid(a) => res.push((
                a,
                g.iter()
                    .zip(out)
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect(),
            )),
            &Op::Tanh(a) => res.push((
                a,
                g.iter()
                    .zip(out)
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect(),
            )),
            &Op::Relu(a) => res.push((
                a,
                g.iter()
                    .zip(self.data(a))
                    .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                    .collect(),
            )),
            &Op::Softmax(a) => {
                let n = self.shape_of(a)[1];
                let mut ga = vec![0.0; g.len()];
                for ((gr, yr), dst) in g
                    .chunks_exact(n)
                    .zip(out.chunks_exact(n))
                    .zip(ga.chunks_exact_mut(n))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    for ((d, gv), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (gv - dot);
                    }
                }
                res.push((a, ga));
            }
            Op::TopkMask { input, keep } => {
                let ga = match keep {
                    None => g.to_vec(),
                    Some(keep) => g
                        .iter()
                        .zip(keep)
                        .map(|(v, &k)| if k { *v } else { 0.0 })
                        .collect(),
                };
                res.push((*input, ga));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let d = self.shape_of(*gamma)[0];
                let gam = self.data(*gamma);
                if wants(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for (r, ((gr, xh), dst)) in g
                        .chunks_exact(d)
                        .zip(normalized.chunks_exact(d))
                        .zip(gx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        let dxh: Vec<f64> = gr.iter().zip(gam).map(|(a, b)| a * b).collect();
                        let sum_dxh: f64 = dxh.iter().sum();
                        let sum_dxh_xh: f64 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum();
                        let s = inv_std[r] / d as f64;
                        for j in 0..d {
                            dst[j] = s * (d as f64 * dxh[j] - sum_dxh - xh[j] * sum_dxh_xh);
                        }
                    }
                    res.push((*x, gx));
                }
                if wants(*gamma) || wants(*beta) {
                    let mut gg = vec![0.0; d];
                    let mut gbeta = vec![0.0; d];
                    for (gr, xh) in g.chunks_exact(d).zip(normalized.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += gr[j] * xh[j];
                            gbeta[j] += gr[j];
                        }
                    }
                    res.push((*gamma, gg));
                    res.push((*beta, gbeta));
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = kernels::axis_split(node.value.shape(), *axis);
                let total = node.value.shape()[*axis] * inner;
                let mut offset = 0;
                for &j in inputs {
                    let chunk = self.shape_of(j)[*axis] * inner;
                    if wants(j) {
                        let mut gj = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            gj.extend_from_slice(
                                &g[o * total + offset..o * total + offset + chunk],
                            );
                        }
                        res.push((j, gj));
                    }
                    offset += chunk;
                }
            }
            &Op::MeanAxis { input, axis } => {
                let (outer, len, inner) = kernels::axis_split(self.shape_of(input), axis);
                let scale = 1.0 / len as f64;
                let mut ga = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for _ in 0..len {
                        ga.extend(src.iter().map(|v| v * scale));
                    }
                }
                res.push((input, ga));
            }
            Op::Slice { .. } => unreachable!("slices accumulate in place"),
            &Op::Reshape(a) => res.push((a, g.to_vec())),
            &Op::Sum(a) => res.push((a, vec![g[0]; self.data(a).len()])),
            &Op::Mean(a) => {
                let n = self.data(a).len();
                res.push((a, vec![g[0] / n as f64; n]));
            }
        }
        res
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
