//! Reverse-mode gradient tape.
//!
//! A [`Graph`] records every primitive applied to its nodes in creation
//! order, so node ids are already topologically sorted. Forward values are
//! computed eagerly when a node is pushed; [`Graph::backward`] walks the
//! record in reverse and accumulates vector-Jacobian products into every node
//! that transitively depends on a parameter leaf.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
    },
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Relu(NodeId),
    /// Saves the row-wise log-softmax of the logits.
    SoftmaxCrossEntropy {
        logits: NodeId,
        onehot: NodeId,
    },
    SquaredError {
        pred: NodeId,
        label: NodeId,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    SumSquares(NodeId),
    AbsSum(NodeId),
    Sigmoid(NodeId),
    Sum(Vec<NodeId>),
    Rows {
        x: NodeId,
        start: usize,
        len: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    saved: Option<Vec<f64>>,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`]: one gradient buffer per node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`; all zeros when the node does
    /// not influence the loss.
    pub fn get(&self, id: NodeId) -> Tensor {
        let shape = self.shapes[id.0].clone();
        match &self.grads[id.0] {
            Some(g) => Tensor::from_raw(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn wrt(&self, ids: &[NodeId]) -> Vec<Tensor> {
        ids.iter().map(|&id| self.get(id)).collect()
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

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Result<NodeId> {
        Ok(self.constant(Tensor::scalar(value)?))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            saved: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let (value, saved) = forward(&op, &self.nodes)?;
        let requires_grad = inputs(&op).iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            saved,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// `x·w + bias` with the bias broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul {
            x,
            w,
            bias: Some(bias),
        })
    }

    pub fn matmul(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul { x, w, bias: None })
    }

    /// Elementwise `max(x, slope·x)`.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        if !(slope >= 0.0 && slope.is_finite()) {
            return Err(Error::Validation(format!(
                "leaky relu slope must be finite and >= 0, got {slope}"
            )));
        }
        self.push(Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(x))
    }

    /// Mean over rows of the cross-entropy between `softmax(logits)` and a
    /// one-hot target.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, onehot: NodeId) -> Result<NodeId> {
        self.push(Op::SoftmaxCrossEntropy { logits, onehot })
    }

    /// Mean over rows of the squared Euclidean distance between rows.
    pub fn squared_error(&mut self, pred: NodeId, label: NodeId) -> Result<NodeId> {
        self.push(Op::SquaredError { pred, label })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    /// Product of two scalars.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        if !factor.is_finite() {
            return Err(Error::Validation(format!("non-finite scale {factor}")));
        }
        self.push(Op::Scale(x, factor))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumSquares(x))
    }

    pub fn abs_sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::AbsSum(x))
    }

    /// Logistic function, evaluated without overflow for either sign.
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(x))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        if terms.is_empty() {
            return self.scalar(0.0);
        }
        self.push(Op::Sum(terms.to_vec()))
    }

    /// Contiguous row block `start..start + len` of a matrix.
    pub fn rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::Rows { x, start, len })
    }

    /// Recomputes every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut replayed: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                _ => forward(&node.op, &replayed)?.0,
            };
            replayed.push(Node {
                op: node.op.clone(),
                value,
                saved: node.saved.clone(),
                requires_grad: node.requires_grad,
            });
        }
        Ok(replayed.into_iter().map(|n| n.value).collect())
    }

    /// Reverse-mode accumulation of d(loss)/d(node) for every node that
    /// depends on a parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::Validation(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |id: NodeId| nodes[id.0].value.values();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { x, w, bias } => {
                let xs = nodes[x.0].value.shape();
                let (n, a) = (rows_of(xs), xs[xs.len() - 1]);
                let b = nodes[w.0].value.cols();
                if let Some(dx) = slot(nodes, grads, *x) {
                    // dX = dOut · Wᵀ
                    gemm(n, b, a, g, b, 1, val(*w), 1, b, dx, a, true);
                }
                if let Some(dw) = slot(nodes, grads, *w) {
                    // dW = Xᵀ · dOut
                    gemm(a, n, b, val(*x), 1, a, g, b, 1, dw, b, true);
                }
                if let Some(bias) = bias {
                    if let Some(db) = slot(nodes, grads, *bias) {
                        for row in g.chunks_exact(b) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let tie = slope.min(1.0);
                    for ((d, &xv), gv) in dx.iter_mut().zip(val(*x)).zip(g) {
                        let s = xv * slope;
                        let local = if xv > s {
                            1.0
                        } else if xv < s {
                            *slope
                        } else {
                            tie
                        };
                        *d += gv * local;
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for ((d, &xv), gv) in dx.iter_mut().zip(val(*x)).zip(g) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, onehot } => {
                let log_sm = node.saved.as_ref().expect("log-softmax saved");
                let n = rows_of(nodes[logits.0].value.shape()) as f64;
                let scale = g[0] / n;
                let y = val(*onehot);
                if let Some(dl) = slot(nodes, grads, *logits) {
                    for ((d, &ls), &yv) in dl.iter_mut().zip(log_sm).zip(y) {
                        *d += scale * (ls.exp() - yv);
                    }
                }
                if let Some(dy) = slot(nodes, grads, *onehot) {
                    for (d, &ls) in dy.iter_mut().zip(log_sm) {
                        *d -= scale * ls;
                    }
                }
            }
            Op::SquaredError { pred, label } => {
                let n = rows_of(nodes[pred.0].value.shape()) as f64;
                let scale = 2.0 * g[0] / n;
                let (p, l) = (val(*pred), val(*label));
                if let Some(dp) = slot(nodes, grads, *pred) {
                    for ((d, pv), lv) in dp.iter_mut().zip(p).zip(l) {
                        *d += scale * (pv - lv);
                    }
                }
                if let Some(dl) = slot(nodes, grads, *label) {
                    for ((d, pv), lv) in dl.iter_mut().zip(p).zip(l) {
                        *d -= scale * (pv - lv);
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(da) = slot(nodes, grads, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = slot(nodes, grads, *b) {
                    axpy(db, sign, g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a)[0], val(*b)[0]);
                if let Some(da) = slot(nodes, grads, *a) {
                    da[0] += g[0] * bv;
                }
                if let Some(db) = slot(nodes, grads, *b) {
                    db[0] += g[0] * av;
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    axpy(dx, *c, g);
                }
            }
            Op::SumSquares(x) => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let s = 2.0 * g[0];
                    for (d, xv) in dx.iter_mut().zip(val(*x)) {
                        *d += s * xv;
                    }
                }
            }
            Op::AbsSum(x) => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for (d, &xv) in dx.iter_mut().zip(val(*x)) {
                        if xv > 0.0 {
                            *d += g[0];
                        } else if xv < 0.0 {
                            *d -= g[0];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for ((d, s), gv) in dx.iter_mut().zip(node.value.values()).zip(g) {
                        *d += gv * s * (1.0 - s);
                    }
                }
            }
            Op::Sum(terms) => {
                for t in terms {
                    if let Some(dt) = slot(nodes, grads, *t) {
                        dt[0] += g[0];
                    }
                }
            }
            Op::Rows { x, start, len } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let c = nodes[x.0].value.cols();
                    axpy(&mut dx[start * c..(start + len) * c], 1.0, g);
                }
            }
        }
    }
}

fn inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul { x, w, bias } => {
            let mut v = vec![*x, *w];
            v.extend(bias);
            v
        }
        Op::LeakyRelu { x, .. }
        | Op::Relu(x)
        | Op::Scale(x, _)
        | Op::SumSquares(x)
        | Op::AbsSum(x)
        | Op::Sigmoid(x)
        | Op::Rows { x, .. } => vec![*x],
        Op::SoftmaxCrossEntropy { logits, onehot } => vec![*logits, *onehot],
        Op::SquaredError { pred, label } => vec![*pred, *label],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Sum(terms) => terms.clone(),
    }
}

fn rows_of(shape: &[usize]) -> usize {
    if shape.len() == 2 {
        shape[0]
    } else {
        1
    }
}

/// Gradient buffer for `id`, allocated on first use; `None` for constants.
fn slot<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    id: NodeId,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id.0].requires_grad {
        return None;
    }
    let len = nodes[id.0].value.len();
    Some(grads[id.0].get_or_insert_with(|| vec![0.0; len]))
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// `c (m×n) (+)= a (m×k) · b (k×n)` with explicit strides so transposed
/// operands need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    accumulate: bool,
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(m == 0 || n == 0 || c.len() > (m - 1) * rsc + (n - 1));
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn scalar_of(op: &'static str, t: &Tensor) -> Result<f64> {
    if !t.is_scalar() {
        return Err(Error::shape(op, t.shape(), &[1]));
    }
    Ok(t.item())
}

fn forward(op: &Op, nodes: &[Node]) -> Result<(Tensor, Option<Vec<f64>>)> {
    let val = |id: &NodeId| &nodes[id.0].value;
    let map = |x: &Tensor, f: &dyn Fn(f64) -> f64| {
        Tensor::from_raw(x.shape().to_vec(), x.values().iter().map(|&v| f(v)).collect())
    };
    let scalar = |v: f64| Tensor::from_raw(vec![1], vec![v]);
    let out = match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::MatMul { x, w, bias } => {
            let (xt, wt) = (val(x), val(w));
            if wt.rank() != 2 || xt.cols() != wt.rows() {
                return Err(Error::shape("matmul", xt.shape(), wt.shape()));
            }
            let (n, a, b) = (xt.rows(), xt.cols(), wt.cols());
            let mut out = vec![0.0; n * b];
            if let Some(bias) = bias {
                let bt = val(bias);
                if bt.rank() != 1 || bt.len() != b {
                    return Err(Error::shape("affine bias", wt.shape(), bt.shape()));
                }
                for row in out.chunks_exact_mut(b) {
                    row.copy_from_slice(bt.values());
                }
            }
            gemm(n, a, b, xt.values(), a, 1, wt.values(), b, 1, &mut out, b, true);
            let shape = if xt.rank() == 2 { vec![n, b] } else { vec![b] };
            (Tensor::from_raw(shape, out), None)
        }
        Op::LeakyRelu { x, slope } => (map(val(x), &|v| v.max(slope * v)), None),
        Op::Relu(x) => (map(val(x), &|v| v.max(0.0)), None),
        Op::SoftmaxCrossEntropy { logits, onehot } => {
            let (lt, yt) = (val(logits), val(onehot));
            same_shape("softmax_cross_entropy", lt, yt)?;
            let c = lt.cols();
            let n = lt.rows();
            let mut log_sm = Vec::with_capacity(lt.len());
            let mut total = 0.0;
            for (r, (lrow, yrow)) in lt
                .values()
                .chunks_exact(c)
                .zip(yt.values().chunks_exact(c))
                .enumerate()
            {
                let hot = yrow.iter().filter(|&&v| v == 1.0).count();
                if hot != 1 || yrow.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Validation(format!(
                        "row {r} of cross-entropy target is not one-hot: {yrow:?}"
                    )));
                }
                let m = lrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + lrow.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                for (&l, &y) in lrow.iter().zip(yrow) {
                    let ls = l - lse;
                    log_sm.push(ls);
                    if y == 1.0 {
                        total -= ls;
                    }
                }
            }
            (scalar(total / n as f64), Some(log_sm))
        }
        Op::SquaredError { pred, label } => {
            let (p, l) = (val(pred), val(label));
            same_shape("squared_error", p, l)?;
            let sum: f64 = p
                .values()
                .iter()
                .zip(l.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (scalar(sum / p.rows() as f64), None)
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let (at, bt) = (val(a), val(b));
            same_shape("elementwise", at, bt)?;
            let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
            let values = at
                .values()
                .iter()
                .zip(bt.values())
                .map(|(x, y)| x + sign * y)
                .collect();
            (Tensor::from_raw(at.shape().to_vec(), values), None)
        }
        Op::Mul(a, b) => {
            let av = scalar_of("mul", val(a))?;
            let bv = scalar_of("mul", val(b))?;
            (scalar(av * bv), None)
        }
        Op::Scale(x, c) => (map(val(x), &|v| v * c), None),
        Op::SumSquares(x) => (scalar(val(x).sum_squares()), None),
        Op::AbsSum(x) => (scalar(val(x).values().iter().map(|v| v.abs()).sum()), None),
        Op::Sigmoid(x) => (map(val(x), &logistic), None),
        Op::Sum(terms) => {
            let mut total = 0.0;
            for t in terms {
                total += scalar_of("sum", val(t))?;
            }
            (scalar(total), None)
        }
        Op::Rows { x, start, len } => {
            let xt = val(x);
            if xt.rank() != 2 || *len == 0 || start + len > xt.rows() {
                return Err(Error::shape("rows", xt.shape(), &[*start, *len]));
            }
            let c = xt.cols();
            let values = xt.values()[start * c..(start + len) * c].to_vec();
            (Tensor::from_raw(vec![*len, c], values), None)
        }
    };
    Ok(out)
}

/// `1 / (1 + e^{-x})`, rearranged for negative `x` so `exp` never overflows.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
