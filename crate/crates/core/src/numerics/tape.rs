//! Dynamic tape for reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op evaluates eagerly through the plain tensor kernels and appends a
//! node holding its inputs. [`Tape::backward`] walks the nodes in reverse and
//! applies each op's vector-Jacobian product.

use std::cell::RefCell;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Op tag plus whatever the backward pass needs.
#[derive(Clone, Debug)]
pub enum OpRecord {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Softplus(Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddRow(Var, Var),
    ConcatCols(Vec<Var>),
    Sum(Var),
    SumSquares(Var),
}

struct Node {
    value: Tensor,
    op: OpRecord,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: OpRecord) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = match &op {
            OpRecord::Leaf => true,
            other => inputs(other).iter().any(|v| nodes[v.0].requires_grad),
        };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, OpRecord::Leaf)
    }

    /// An input that receives no gradient; ops depending only on constants
    /// are skipped by the reverse pass.
    pub fn constant(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: OpRecord::Leaf,
            requires_grad: false,
        });
        Var(nodes.len() - 1)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
        op: OpRecord,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)?
        };
        Ok(self.push(value, op))
    }

    fn unary(&self, a: Var, f: impl FnOnce(&Tensor) -> Result<Tensor>, op: OpRecord) -> Result<Var> {
        let value = f(&self.nodes.borrow()[a.0].value)?;
        Ok(self.push(value, op))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Tensor::add, OpRecord::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Tensor::sub, OpRecord::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Tensor::mul, OpRecord::Mul(a, b))
    }

    pub fn scale(&self, a: Var, s: f64) -> Result<Var> {
        self.unary(a, |x| Ok(x.scale(s)), OpRecord::Scale(a, s))
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        self.unary(a, |x| Ok(x.tanh()), OpRecord::Tanh(a))
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&self, a: Var) -> Result<Var> {
        self.unary(a, |x| Ok(x.map(softplus)), OpRecord::Softplus(a))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Tensor::matmul, OpRecord::MatMul(a, b))
    }

    /// `a · bᵀ`; the natural form for `x · Wᵀ` with `W` stored out×in.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Tensor::matmul_nt, OpRecord::MatMulNt(a, b))
    }

    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        self.binary(a, row, Tensor::add_row, OpRecord::AddRow(a, row))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = parts.iter().map(|v| &nodes[v.0].value).collect();
            Tensor::concat_cols(&refs)?
        };
        Ok(self.push(value, OpRecord::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        self.unary(a, |x| Ok(Tensor::scalar(x.sum())), OpRecord::Sum(a))
    }

    pub fn sum_squares(&self, a: Var) -> Result<Var> {
        self.unary(a, |x| Ok(Tensor::scalar(x.sum_squares())), OpRecord::SumSquares(a))
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let n = self.nodes.borrow()[a.0].value.numel();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let value_of = |v: &Var| &nodes[v.0].value;
            let wants = |v: &Var| nodes[v.0].requires_grad;
            let mut contributions: Vec<(Var, Tensor)> = Vec::with_capacity(2);
            let mut give = |v: &Var, f: &mut dyn FnMut() -> Result<Tensor>| -> Result<()> {
                if wants(v) {
                    contributions.push((*v, f()?));
                }
                Ok(())
            };
            match &node.op {
                OpRecord::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                OpRecord::Add(a, b) => {
                    give(a, &mut || Ok(g.clone()))?;
                    give(b, &mut || Ok(g.clone()))?;
                }
                OpRecord::Sub(a, b) => {
                    give(a, &mut || Ok(g.clone()))?;
                    give(b, &mut || Ok(g.neg()))?;
                }
                OpRecord::Mul(a, b) => {
                    give(a, &mut || g.mul(value_of(b)))?;
                    give(b, &mut || g.mul(value_of(a)))?;
                }
                OpRecord::Scale(a, s) => give(a, &mut || Ok(g.scale(*s)))?,
                OpRecord::Tanh(a) => give(a, &mut || g.mul(&node.value.map(|y| 1.0 - y * y)))?,
                OpRecord::Softplus(a) => give(a, &mut || g.mul(&value_of(a).map(sigmoid)))?,
                OpRecord::MatMul(a, b) => {
                    give(a, &mut || g.matmul_nt(value_of(b)))?;
                    give(b, &mut || value_of(a).matmul_tn(&g))?;
                }
                OpRecord::MatMulNt(a, b) => {
                    give(a, &mut || g.matmul(value_of(b)))?;
                    give(b, &mut || g.matmul_tn(value_of(a)))?;
                }
                OpRecord::AddRow(a, row) => {
                    give(a, &mut || Ok(g.clone()))?;
                    give(row, &mut || g.sum_rows())?;
                }
                OpRecord::ConcatCols(parts) => {
                    let widths: Vec<usize> = parts
                        .iter()
                        .map(|p| value_of(p).dims2("concat_cols").map(|(_, w)| w))
                        .collect::<Result<_>>()?;
                    for (p, piece) in parts.iter().zip(g.split_cols(&widths)?) {
                        let mut piece = Some(piece);
                        give(p, &mut || Ok(piece.take().expect("one piece per part")))?;
                    }
                }
                OpRecord::Sum(a) => {
                    let s = g.item()?;
                    give(a, &mut || Ok(Tensor::full(value_of(a).shape(), s)))?;
                }
                OpRecord::SumSquares(a) => {
                    let s = g.item()?;
                    give(a, &mut || Ok(value_of(a).scale(2.0 * s)))?;
                }
            }
            // Leaves keep their gradient; everything else has been consumed.
            for (target, contrib) in contributions {
                let slot = &mut grads[target.0];
                *slot = Some(match slot.take() {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn inputs(op: &OpRecord) -> Vec<Var> {
    match op {
        OpRecord::Leaf => Vec::new(),
        OpRecord::Add(a, b)
        | OpRecord::Sub(a, b)
        | OpRecord::Mul(a, b)
        | OpRecord::MatMul(a, b)
        | OpRecord::MatMulNt(a, b)
        | OpRecord::AddRow(a, b) => vec![*a, *b],
        OpRecord::Scale(a, _)
        | OpRecord::Tanh(a)
        | OpRecord::Softplus(a)
        | OpRecord::Sum(a)
        | OpRecord::SumSquares(a) => vec![*a],
        OpRecord::ConcatCols(parts) => parts.clone(),
    }
}
