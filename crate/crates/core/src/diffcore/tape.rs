use std::rc::Rc;

use rand::Rng;

use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
///
/// A `Var` is only meaningful for the tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Operation whose forward pass is computed by the caller and whose
/// vector-Jacobian product is supplied here.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input, each shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Tanh(Var),
    Prelu(Var, Var),
    Dropout(Var, Vec<f64>),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    ConvTime { x: Var, kernel: Var, padding: usize },
    AddBias(Var, Var),
    GraphAggregate(Var, Rc<Tensor>),
    Reshape(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Define-by-run computation record.
///
/// Every forward operation appends a node; nodes only reference earlier
/// nodes, so index order is a topological order and [`Tape::backward`] is a
/// single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a reverse sweep: one optional gradient per recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when the loss
    /// does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but returns zeros for disconnected values.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}

fn same_or_scalar(a: &Tensor, b: &Tensor, what: &str) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.is_scalar() {
        Ok(a.shape().to_vec())
    } else if a.is_scalar() {
        Ok(b.shape().to_vec())
    } else {
        dim_err(format!("{what}: shapes {:?} and {:?} do not broadcast", a.shape(), b.shape()))
    }
}

/// Elementwise binary op with scalar broadcast on either side.
fn zip_broadcast(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = shape.iter().product();
    let (ad, bd) = (a.data(), b.data());
    let get = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
    let data = (0..n).map(|i| f(get(ad, i), get(bd, i))).collect();
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Reduces a full-size gradient onto an operand that may have been broadcast.
fn reduce_to(grad: Vec<f64>, like: &Tensor) -> Tensor {
    if like.numel() == grad.len() {
        Tensor::new(like.shape().to_vec(), grad).expect("grad shape")
    } else {
        Tensor::scalar(grad.iter().sum())
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = same_or_scalar(ta, tb, "add")?;
        let out = zip_broadcast(ta, tb, shape, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = same_or_scalar(ta, tb, "sub")?;
        let out = zip_broadcast(ta, tb, shape, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = same_or_scalar(ta, tb, "mul")?;
        let out = zip_broadcast(ta, tb, shape, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        let out = self.value(a).map(|x| x + shift);
        self.push(out, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Parametric ReLU with a single learned slope for negative inputs.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let s = self.value(slope);
        if !s.is_scalar() {
            return dim_err(format!("prelu slope must be a scalar, got {:?}", s.shape()));
        }
        let s = s.item();
        let out = self.value(x).map(|v| if v > 0.0 { v } else { s * v });
        Ok(self.push(out, Op::Prelu(x, slope)))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).numel();
        let mask: Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout(x, mask)))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(x, lo, hi))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return dim_err(format!("matmul of {:?} and {:?}", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// 1-D convolution along the time axis of a `C_in x T x N` tensor with a
    /// `C_out x C_in x K` kernel, zero padded by `padding` frames on each side.
    /// Each agent column is convolved independently.
    pub fn conv_time(&mut self, x: Var, kernel: Var, padding: usize) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        if tx.rank() != 3 || tk.rank() != 3 || tk.shape()[1] != tx.shape()[0] {
            return dim_err(format!(
                "conv_time input {:?} incompatible with kernel {:?}",
                tx.shape(),
                tk.shape()
            ));
        }
        let (cin, t, n) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (cout, k) = (tk.shape()[0], tk.shape()[2]);
        if k > t + 2 * padding {
            return dim_err(format!(
                "kernel length {k} exceeds padded input length {}",
                t + 2 * padding
            ));
        }
        let t_out = t + 2 * padding - k + 1;
        let mut out = vec![0.0; cout * t_out * n];
        let (xd, kd) = (tx.data(), tk.data());
        for o in 0..cout {
            for c in 0..cin {
                for j in 0..k {
                    let w = kd[(o * cin + c) * k + j];
                    if w == 0.0 {
                        continue;
                    }
                    for to in 0..t_out {
                        let ti = to + j;
                        if ti < padding || ti - padding >= t {
                            continue;
                        }
                        let src = &xd[(c * t + ti - padding) * n..][..n];
                        let dst = &mut out[(o * t_out + to) * n..][..n];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![cout, t_out, n], out)?;
        Ok(self.push(out, Op::ConvTime { x, kernel, padding }))
    }

    /// Adds a per-channel bias `b` (length C) to a tensor whose first axis is C.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let c = tx.shape()[0];
        if tb.numel() != c {
            return dim_err(format!("bias {:?} for input {:?}", tb.shape(), tx.shape()));
        }
        let inner = tx.numel() / c;
        let bd = tb.data();
        let data = tx.data().iter().enumerate().map(|(i, v)| v + bd[i / inner]).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    /// Per-frame neighbourhood aggregation: `out[c,t,i] = sum_j adj[t,i,j] * x[c,t,j]`
    /// for `x: C x T x N` and a constant `adj: T x N x N`.
    pub fn graph_aggregate(&mut self, x: Var, adj: Rc<Tensor>) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3
            || adj.rank() != 3
            || adj.shape()[0] != tx.shape()[1]
            || adj.shape()[1] != tx.shape()[2]
            || adj.shape()[2] != tx.shape()[2]
        {
            return dim_err(format!(
                "graph features {:?} incompatible with adjacency {:?}",
                tx.shape(),
                adj.shape()
            ));
        }
        let (c, t, n) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let mut out = vec![0.0; c * t * n];
        let (xd, ad) = (tx.data(), adj.data());
        for ci in 0..c {
            for ti in 0..t {
                let a = &ad[ti * n * n..][..n * n];
                let src = &xd[(ci * t + ti) * n..][..n];
                let dst = &mut out[(ci * t + ti) * n..][..n];
                for i in 0..n {
                    dst[i] = a[i * n..][..n].iter().zip(src).map(|(w, v)| w * v).sum();
                }
            }
        }
        let out = Tensor::new(vec![c, t, n], out)?;
        Ok(self.push(out, Op::GraphAggregate(x, adj)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Concatenates along the first axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = match parts.first() {
            Some(&v) => self.value(v),
            None => return dim_err("concat of zero tensors"),
        };
        let tail = first.shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return dim_err(format!("concat of {:?} with trailing dims {tail:?}", t.shape()));
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Records a caller-computed value together with its backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(output, Op::Custom(inputs.to_vec(), op))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The tape is not modified, so repeated calls return identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, reduce_to(g.to_vec(), val(*a)).data());
                accumulate(grads, *b, reduce_to(g.to_vec(), val(*b)).data());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, reduce_to(g.to_vec(), val(*a)).data());
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                accumulate(grads, *b, reduce_to(neg, val(*b)).data());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let pick = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
                let ga: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * pick(tb.data(), i)).collect();
                let gb: Vec<f64> = g.iter().enumerate().map(|(i, gi)| gi * pick(ta.data(), i)).collect();
                accumulate(grads, *a, reduce_to(ga, ta).data());
                accumulate(grads, *b, reduce_to(gb, tb).data());
            }
            Op::Scale(a, f) => {
                let ga: Vec<f64> = g.iter().map(|x| x * f).collect();
                accumulate(grads, *a, &ga);
            }
            Op::Offset(a) | Op::Reshape(a) => accumulate(grads, *a, g),
            Op::Exp(a) => {
                let ga: Vec<f64> = g.iter().zip(node.value.data()).map(|(gi, y)| gi * y).collect();
                accumulate(grads, *a, &ga);
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> =
                    g.iter().zip(node.value.data()).map(|(gi, y)| gi * (1.0 - y * y)).collect();
                accumulate(grads, *a, &ga);
            }
            Op::Prelu(x, slope) => {
                let s = val(*slope).item();
                let xd = val(*x).data();
                let mut gs = 0.0;
                let gx: Vec<f64> = g
                    .iter()
                    .zip(xd)
                    .map(|(gi, &v)| {
                        if v > 0.0 {
                            *gi
                        } else {
                            gs += gi * v;
                            gi * s
                        }
                    })
                    .collect();
                accumulate(grads, *x, &gx);
                accumulate(grads, *slope, &[gs]);
            }
            Op::Dropout(x, mask) => {
                let gx: Vec<f64> = g.iter().zip(mask).map(|(gi, m)| gi * m).collect();
                accumulate(grads, *x, &gx);
            }
            Op::Clamp(x, lo, hi) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gi, &v)| if v < *lo || v > *hi { 0.0 } else { *gi })
                    .collect();
                accumulate(grads, *x, &gx);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = G B^T, dB = A^T G
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let brow = &tb.data()[p * n..][..n];
                        ga[i * k + p] = g[i * n..][..n].iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    let grow = &g[i * n..][..n];
                    for p in 0..k {
                        let a = ta.data()[i * k + p];
                        if a == 0.0 {
                            continue;
                        }
                        for (d, s) in gb[p * n..][..n].iter_mut().zip(grow) {
                            *d += a * s;
                        }
                    }
                }
                accumulate(grads, *a, &ga);
                accumulate(grads, *b, &gb);
            }
            Op::ConvTime { x, kernel, padding } => {
                let (tx, tk) = (val(*x), val(*kernel));
                let (cin, t, n) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (cout, k) = (tk.shape()[0], tk.shape()[2]);
                let t_out = node.value.shape()[1];
                let (xd, kd) = (tx.data(), tk.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gk = vec![0.0; kd.len()];
                for o in 0..cout {
                    for c in 0..cin {
                        for j in 0..k {
                            let w = kd[(o * cin + c) * k + j];
                            let mut acc = 0.0;
                            for to in 0..t_out {
                                let ti = to + j;
                                if ti < *padding || ti - padding >= t {
                                    continue;
                                }
                                let goff = (o * t_out + to) * n;
                                let xoff = (c * t + ti - padding) * n;
                                for a in 0..n {
                                    let gv = g[goff + a];
                                    acc += gv * xd[xoff + a];
                                    gx[xoff + a] += w * gv;
                                }
                            }
                            gk[(o * cin + c) * k + j] = acc;
                        }
                    }
                }
                accumulate(grads, *x, &gx);
                accumulate(grads, *kernel, &gk);
            }
            Op::AddBias(x, b) => {
                let c = val(*b).numel();
                let inner = g.len() / c;
                let gb: Vec<f64> = (0..c).map(|ci| g[ci * inner..][..inner].iter().sum()).collect();
                accumulate(grads, *x, g);
                accumulate(grads, *b, &gb);
            }
            Op::GraphAggregate(x, adj) => {
                let s = node.value.shape();
                let (c, t, n) = (s[0], s[1], s[2]);
                let ad = adj.data();
                let mut gx = vec![0.0; g.len()];
                for ci in 0..c {
                    for ti in 0..t {
                        let a = &ad[ti * n * n..][..n * n];
                        let off = (ci * t + ti) * n;
                        for i in 0..n {
                            let gi = g[off + i];
                            for j in 0..n {
                                gx[off + j] += a[i * n + j] * gi;
                            }
                        }
                    }
                }
                accumulate(grads, *x, &gx);
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = val(p).numel();
                    accumulate(grads, p, &g[start..start + len]);
                    start += len;
                }
            }
            Op::Sum(x) => {
                let gx = vec![g[0]; val(*x).numel()];
                accumulate(grads, *x, &gx);
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gt = Tensor::new(node.value.shape().to_vec(), g.to_vec()).expect("grad shape");
                let gs = op.backward(&ins, &node.value, &gt);
                assert_eq!(gs.len(), inputs.len(), "{} returned wrong gradient count", op.name());
                for (&v, gv) in inputs.iter().zip(&gs) {
                    accumulate(grads, v, gv.data());
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..][..n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * n..][..n]) {
                *o += av * bv;
            }
        }
    }
}
