//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value and the handles of its
//! inputs. [`Tape::backward`] walks the nodes in reverse insertion order,
//! which is a valid topological order because inputs always precede outputs.
//! Nodes that do not depend on any tracked leaf carry no gradient.

use super::ops;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Softmax(Var),
    Conv1d {
        x: Var,
        kernels: Var,
        stride: usize,
    },
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        label: usize,
        weight: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
}

/// Parameters of a [`ParamStore`] bound as tracked leaves on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Tracked leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        let v = self.push_leaf(value, true);
        self.params.push((v, id));
        v
    }

    /// Binds every parameter of `store` as a tracked leaf, in store order.
    pub fn bind(&mut self, store: &ParamStore) -> BoundParams {
        let vars = store
            .ids()
            .map(|id| self.param(id, store.get(id).clone()))
            .collect();
        BoundParams { vars }
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        self.push("matmul", out, Op::Matmul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = ops::transpose(self.value(a))?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = ops::add_row(self.value(a), self.value(bias))?;
        self.push("add_row", out, Op::AddRow(a, bias), &[a, bias])
    }

    /// `x · w + b` with a `1×n` bias row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(a))?;
        self.push("softmax_rows", out, Op::Softmax(a), &[a])
    }

    pub fn conv1d(&mut self, x: Var, kernels: Var, stride: usize) -> Result<Var> {
        let out = ops::conv1d(self.value(x), self.value(kernels), stride)?;
        self.push(
            "conv1d",
            out,
            Op::Conv1d { x, kernels, stride },
            &[x, kernels],
        )
    }

    pub fn mean_pool_time(&mut self, a: Var) -> Result<Var> {
        let out = ops::mean_pool_time(self.value(a))?;
        self.push("mean_pool_time", out, Op::MeanRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_cols(&values)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Sum of all entries as a `1×1` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    /// Weighted softmax cross-entropy of a `1×C` logit row; yields a `1×1` scalar.
    pub fn cross_entropy(&mut self, logits: Var, label: usize, weight: f64) -> Result<Var> {
        let l = self.value(logits);
        let loss = ops::cross_entropy(l, label)?;
        let probs = ops::log_softmax(l.data())
            .into_iter()
            .map(f64::exp)
            .collect();
        self.push(
            "cross_entropy",
            Tensor::scalar(weight * loss),
            Op::CrossEntropy {
                logits,
                label,
                weight,
                probs,
            },
            &[logits],
        )
    }

    /// Reverse sweep from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(shape));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let contributions = self.vjp(node, &g)?;
            for (var, contrib) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn vjp(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Matmul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if wants(*a) {
                    out.push((*a, ops::matmul(g, &ops::transpose(val(*b))?)?));
                }
                if wants(*b) {
                    out.push((*b, ops::matmul(&ops::transpose(val(*a))?, g)?));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, ops::transpose(g)?)],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let prod = |other: &Tensor| {
                    Tensor::new(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(other.data())
                            .map(|(x, y)| x * y)
                            .collect(),
                    )
                };
                vec![(*a, prod(val(*b))?), (*b, prod(val(*a))?)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|x| x * f))],
            Op::AddRow(a, bias) => {
                let (m, n) = g.dims2()?;
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for (d, x) in db.iter_mut().zip(g.row(i)) {
                        *d += x;
                    }
                }
                vec![(*a, g.clone()), (*bias, Tensor::new(vec![1, n], db)?)]
            }
            Op::Relu(a) => {
                let data = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                    .collect();
                vec![(*a, Tensor::new(g.shape().to_vec(), data)?)]
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let (r, c) = y.dims2()?;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dx[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![(*a, Tensor::new(vec![r, c], dx)?)]
            }
            Op::Conv1d { x, kernels, stride } => {
                let (xv, kv) = (val(*x), val(*kernels));
                let (_, f_in) = xv.dims2()?;
                let (t_out, f_out) = g.dims2()?;
                let w = kv.shape()[1];
                let (xd, kd, gd) = (xv.data(), kv.data(), g.data());
                let mut dx = vec![0.0; xv.len()];
                let mut dk = vec![0.0; kv.len()];
                for s in 0..t_out {
                    let base = s * stride * f_in;
                    for o in 0..f_out {
                        let go = gd[s * f_out + o];
                        if go == 0.0 {
                            continue;
                        }
                        let koff = o * w * f_in;
                        for q in 0..w * f_in {
                            dx[base + q] += go * kd[koff + q];
                            dk[koff + q] += go * xd[base + q];
                        }
                    }
                }
                vec![
                    (*x, Tensor::new(xv.shape().to_vec(), dx)?),
                    (*kernels, Tensor::new(kv.shape().to_vec(), dk)?),
                ]
            }
            Op::MeanRows(a) => {
                let (t, d) = val(*a).dims2()?;
                let inv = 1.0 / t as f64;
                let row: Vec<f64> = g.data().iter().map(|x| x * inv).collect();
                let data = row.iter().copied().cycle().take(t * d).collect();
                vec![(*a, Tensor::new(vec![t, d], data)?)]
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = val(p).cols();
                    let mut data = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        data.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    out.push((p, Tensor::new(vec![rows, w], data)?));
                    offset += w;
                }
                out
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                vec![(*a, Tensor::filled(val(*a).shape(), gv))]
            }
            Op::CrossEntropy {
                logits,
                label,
                weight,
                probs,
            } => {
                let scale = g.data()[0] * weight;
                let data = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| scale * (p - if j == *label { 1.0 } else { 0.0 }))
                    .collect();
                vec![(*logits, Tensor::new(vec![1, probs.len()], data)?)]
            }
        })
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(Var, ParamId)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` is tracked and reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// One gradient per parameter of `store`, in store order. Parameters the
    /// loss does not depend on get zeros; parameters bound more than once get
    /// the sum of their contributions.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        for &(var, id) in &self.params {
            if let Some(g) = self.wrt(var) {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}
