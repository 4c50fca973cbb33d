//! Reverse-mode autodiff on a flat tape.
//!
//! Every tensor lives in an arena owned by [`Tape`]; ops append a node and
//! record which inputs produced it. `backward` replays the recorded ops in
//! reverse, propagating adjoints through per-pass buffers and then folding
//! them into each tensor's persistent `grad`, so repeated backward calls
//! accumulate (two identical calls double every gradient).
//!
//! All values are `f64`, row-major contiguous. Broadcasting is deliberately
//! narrow: scalar × tensor, row-vector bias/scale against a matrix, and
//! per-row scaling. Anything else is a shape error, not a silent broadcast.

mod backward;
mod linalg;
mod ops;

pub(crate) use linalg::{mm, mm_nt, mm_tn};

use thiserror::Error;

/// Handle into a [`Tape`] arena.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("{op}: data length {len} does not match shape {shape:?}")]
    DataLen {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: row index {index} out of bounds for {bound} rows")]
    RowOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward target must hold exactly one element, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward target does not require grad")]
    BackwardOnConstant,
    #[error("max pool: group {group} has no unmasked rows")]
    EmptyGroup { group: usize },
}

/// Dense tensor value: shape, row-major data, and (after backward) an
/// accumulated gradient for nodes that require one.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One recorded operation. Fields are the input ids plus whatever forward
/// context the adjoint needs (outputs themselves are re-read from the arena).
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    /// Batched matmul over the leading axis: [g,m,k]·[g,k,n].
    Bmm { a: TensorId, b: TensorId },
    /// Batched matmul with the second operand transposed: [g,m,k]·[g,n,k]ᵀ.
    BmmNt { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    /// [m,n] + v[n] broadcast down rows.
    AddRowVec { x: TensorId, v: TensorId },
    /// [m,n] ⊙ v[n] broadcast down rows.
    MulRowVec { x: TensorId, v: TensorId },
    /// Row i of x scaled by s[i].
    ScaleRows { x: TensorId, s: TensorId },
    /// Multiply by a compile-time constant.
    Scale { x: TensorId, c: f64 },
    /// Multiply by a one-element tensor (trainable scalar).
    MulScalar { x: TensorId, s: TensorId },
    Sigmoid { x: TensorId },
    Tanh { x: TensorId },
    Relu { x: TensorId },
    Exp { x: TensorId },
    Ln { x: TensorId },
    /// x^p for constant p; callers keep x in the op's domain (x > 0, or p ≥ 0 with x ≥ 0).
    PowConst { x: TensorId, p: f64 },
    Clamp { x: TensorId, lo: f64, hi: f64 },
    /// Row-wise softmax of a rank-2 tensor.
    SoftmaxRows { x: TensorId },
    LayerNormRows { x: TensorId, gamma: TensorId, beta: TensorId, eps: f64 },
    /// Row-wise cosine similarity against a vector; zero-norm rows yield 0.
    CosineSimRows { x: TensorId, v: TensorId },
    /// out[i] = x[ids[i]]; duplicate ids accumulate on backward.
    RowGather { x: TensorId, ids: Vec<usize> },
    ConcatRows { parts: Vec<TensorId> },
    ConcatCols { parts: Vec<TensorId> },
    SliceCols { x: TensorId, from: usize, to: usize },
    /// Same data, new shape with equal element count.
    Reshape { x: TensorId },
    /// Column-wise max over consecutive row blocks; `argmax` (filled during
    /// forward) routes the gradient, ties to the lowest row index.
    MaxOverGroups { x: TensorId, argmax: Vec<usize> },
    SumAll { x: TensorId },
    MeanAll { x: TensorId },
}

/// Arena of tensors plus the op that produced each.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Tensor>,
    pub(crate) ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor.
    pub fn leaf(
        &mut self,
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<TensorId, TensorError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(TensorError::DataLen {
                op: "leaf",
                len: data.len(),
                shape,
            });
        }
        Ok(self.push(data, shape, requires_grad, Op::Leaf))
    }

    /// Register a non-trainable input (masks, labels, injected data).
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<TensorId, TensorError> {
        self.leaf(data, shape, false)
    }

    /// One-element constant.
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![v], vec![1], false, Op::Leaf)
    }

    pub(crate) fn push(
        &mut self,
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op,
    ) -> TensorId {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.nodes.push(Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        });
        self.ops.push(op);
        TensorId(self.nodes.len() - 1)
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Accumulated gradient, if this node requires one and backward has run.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.nodes {
            t.grad = None;
        }
    }

    pub(crate) fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Reverse sweep from a one-element loss. Adjoints are propagated through
    /// per-call buffers and then added into each node's persistent grad, so
    /// calling twice doubles every accumulated gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        let lt = &self.nodes[loss.0];
        if lt.len() != 1 {
            return Err(TensorError::NotScalar(lt.shape.clone()));
        }
        if !lt.requires_grad {
            return Err(TensorError::BackwardOnConstant);
        }

        let mut pass: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pass[loss.0] = Some(vec![1.0]);

        for oid in (0..=loss.0).rev() {
            let Some(gout) = pass[oid].take() else {
                continue;
            };
            let op = self.ops[oid].clone();
            self.backward_op(&op, TensorId(oid), &gout, &mut pass);
            pass[oid] = Some(gout);
        }

        for (i, g) in pass.into_iter().enumerate() {
            let (Some(g), node) = (g, &mut self.nodes[i]) else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            match &mut node.grad {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    /// Add `contrib` into the pass buffer for `id` (skipped for constants).
    pub(crate) fn acc(
        &self,
        pass: &mut [Option<Vec<f64>>],
        id: TensorId,
        contrib: impl FnOnce() -> Vec<f64>,
    ) {
        if !self.rg(id) {
            return;
        }
        let c = contrib();
        debug_assert_eq!(c.len(), self.nodes[id.0].len());
        match &mut pass[id.0] {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(&c) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_rejects_bad_len() {
        let mut t = Tape::new();
        assert!(matches!(
            t.leaf(vec![1.0; 5], vec![2, 3], true),
            Err(TensorError::DataLen { .. })
        ));
    }

    #[test]
    fn backward_requires_single_element() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0], vec![2], true).unwrap();
        assert!(matches!(t.backward(a), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn backward_twice_doubles_grads() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, -2.0, 3.0], vec![3], true).unwrap();
        let s = t.sum_all(a).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[1.0, 1.0, 1.0]);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn constants_get_no_grad() {
        let mut t = Tape::new();
        let a = t.leaf(vec![2.0], vec![1], true).unwrap();
        let c = t.constant(vec![3.0], vec![1]).unwrap();
        let p = t.mul(a, c).unwrap();
        t.backward(p).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[3.0]);
        assert!(t.grad(c).is_none());
    }
}
