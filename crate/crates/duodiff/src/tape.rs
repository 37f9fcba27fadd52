//! Reverse-mode automatic differentiation on a flat tape.
//!
//! The networks in this crate are small enough that a full tensor library
//! would be overkill, but hand-written backward passes are exactly the kind
//! of code that rots silently. This module keeps the middle ground: dense
//! row-major matrices, an explicit operation tape, and one backward rule per
//! operation, each checked against central finite differences in the tests.
//!
//! Typical use builds a fresh [`Tape`] per forward pass, records inputs with
//! [`Tape::input`], chains operations, and calls [`Tape::backward`] on a
//! scalar loss node. Gradients are then read back per node with
//! [`Tape::grad`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from tensor construction or tape operations.
#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{op}: shape mismatch between {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("tensor data length {len} does not match {rows}x{cols}")]
    BadTensorData { rows: usize, cols: usize, len: usize },
    #[error("{op}: row index {index} out of range for {rows} rows")]
    RowIndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("{op}: expected {expected} entries, got {got}")]
    BadLength {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward requires a 1x1 loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("repeat_rows would produce an empty tensor")]
    EmptyRepeat,
}

/// Dense row-major matrix of `f64`. A row vector is a `1 x n` tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TapeError> {
        if data.len() != rows * cols {
            return Err(TapeError::BadTensorData {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    /// Single row vector `1 x n`.
    pub fn row(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn as_scalar(&self) -> Option<f64> {
        if self.is_scalar() {
            Some(self.data[0])
        } else {
            None
        }
    }

    /// Contents of row `i` as a slice.
    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transposed(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Handle to a node on a [`Tape`]. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddBroadcastRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Silu(NodeId),
    SoftmaxRows(NodeId),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    RepeatRows(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    MeanRows(NodeId),
    SumSq(NodeId),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x * sigmoid(x)`, the activation used throughout the networks here. Kept
/// public so forward-only code paths can match the tape exactly.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Recorded computation graph. Operations evaluate eagerly; `backward`
/// replays the tape in reverse to accumulate gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf node. Leaves receive gradients but have no parents.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by the most recent [`Tape::backward`] call.
    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn shapes_err(
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
    ) -> TapeError {
        TapeError::ShapeMismatch {
            op,
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: b.rows(),
            rhs_cols: b.cols(),
        }
    }

    /// Matrix product `a * b` with `a: r x k`, `b: k x c`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.cols() != vb.rows() {
            return Err(Self::shapes_err("matmul", va, vb));
        }
        let value = matmul_values(va, vb);
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.transposed();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Self::shapes_err("add", va, vb));
        }
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x += y;
        }
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// `a + b` where `b` is a single row broadcast across every row of `a`.
    pub fn add_broadcast_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if vb.rows() != 1 || va.cols() != vb.cols() {
            return Err(Self::shapes_err("add_broadcast_row", va, vb));
        }
        let value = Tensor::from_fn(va.rows(), va.cols(), |i, j| va.get(i, j) + vb.get(0, j));
        Ok(self.push(value, Op::AddBroadcastRow(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Self::shapes_err("sub", va, vb));
        }
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x -= y;
        }
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        for x in value.data_mut() {
            *x *= factor;
        }
        self.push(value, Op::Scale(a, factor))
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        for x in value.data_mut() {
            *x = silu(*x);
        }
        self.push(value, Op::Silu(a))
    }

    /// Softmax applied independently to each row.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let mut value = va.clone();
        for i in 0..value.rows() {
            let row_max = va
                .row_slice(i)
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let cols = value.cols();
            let row = &mut value.data_mut()[i * cols..(i + 1) * cols];
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - row_max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Concatenate along columns: `a: n x p`, `b: n x q` giving `n x (p+q)`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rows() != vb.rows() {
            return Err(Self::shapes_err("concat_cols", va, vb));
        }
        let (p, q) = (va.cols(), vb.cols());
        let value = Tensor::from_fn(va.rows(), p + q, |i, j| {
            if j < p {
                va.get(i, j)
            } else {
                vb.get(i, j - p)
            }
        });
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Stack rows: `a: n x d`, `b: m x d` giving `(n+m) x d`.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.cols() != vb.cols() {
            return Err(Self::shapes_err("concat_rows", va, vb));
        }
        let mut data = va.data().to_vec();
        data.extend_from_slice(vb.data());
        let value = Tensor::from_vec(va.rows() + vb.rows(), va.cols(), data)?;
        Ok(self.push(value, Op::ConcatRows(a, b)))
    }

    /// Repeat row `i` of `a` exactly `counts[i]` times, in order. A count of
    /// zero drops the row. Used to upsample token sequences by durations.
    pub fn repeat_rows(&mut self, a: NodeId, counts: &[usize]) -> Result<NodeId, TapeError> {
        let va = &self.nodes[a.0].value;
        if counts.len() != va.rows() {
            return Err(TapeError::BadLength {
                op: "repeat_rows",
                expected: va.rows(),
                got: counts.len(),
            });
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(TapeError::EmptyRepeat);
        }
        let mut data = Vec::with_capacity(total * va.cols());
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                data.extend_from_slice(va.row_slice(i));
            }
        }
        let value = Tensor::from_vec(total, va.cols(), data)?;
        Ok(self.push(value, Op::RepeatRows(a, counts.to_vec())))
    }

    /// Select rows of `a` by index, with repetition allowed. Gradients from
    /// repeated selections accumulate onto the same source row.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TapeError> {
        let va = &self.nodes[a.0].value;
        for &idx in indices {
            if idx >= va.rows() {
                return Err(TapeError::RowIndexOutOfRange {
                    op: "gather_rows",
                    index: idx,
                    rows: va.rows(),
                });
            }
        }
        let mut data = Vec::with_capacity(indices.len() * va.cols());
        for &idx in indices {
            data.extend_from_slice(va.row_slice(idx));
        }
        let value = Tensor::from_vec(indices.len(), va.cols(), data)?;
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec())))
    }

    /// Average over rows, producing a single row.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let n = va.rows() as f64;
        let value = Tensor::from_fn(1, va.cols(), |_, j| {
            (0..va.rows()).map(|i| va.get(i, j)).sum::<f64>() / n
        });
        self.push(value, Op::MeanRows(a))
    }

    /// Sum of squared entries, as a 1x1 scalar node.
    pub fn sumsq(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().map(|x| x * x).sum();
        self.push(Tensor::scalar(s), Op::SumSq(a))
    }

    /// Run the backward pass from a scalar loss node, replacing any gradients
    /// from a previous call.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TapeError> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(TapeError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        for node in &mut self.nodes {
            for g in node.grad.data_mut() {
                *g = 0.0;
            }
        }
        self.nodes[loss.0].grad.set(0, 0, 1.0);

        for id in (0..=loss.0).rev() {
            // Parents always precede children on the tape, so splitting at the
            // current index gives mutable access to every parent at once.
            let (head, tail) = self.nodes.split_at_mut(id);
            let node = &tail[0];
            let grad = &node.grad;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = matmul_values(grad, &head[b.0].value.transposed());
                    let db = matmul_values(&head[a.0].value.transposed(), grad);
                    add_into(&mut head[a.0].grad, &da);
                    add_into(&mut head[b.0].grad, &db);
                }
                Op::Transpose(a) => {
                    let da = grad.transposed();
                    add_into(&mut head[a.0].grad, &da);
                }
                Op::Add(a, b) => {
                    let g = grad.clone();
                    add_into(&mut head[a.0].grad, &g);
                    add_into(&mut head[b.0].grad, &g);
                }
                Op::AddBroadcastRow(a, b) => {
                    let g = grad.clone();
                    let mut db = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            let v = db.get(0, j) + g.get(i, j);
                            db.set(0, j, v);
                        }
                    }
                    add_into(&mut head[a.0].grad, &g);
                    add_into(&mut head[b.0].grad, &db);
                }
                Op::Sub(a, b) => {
                    let g = grad.clone();
                    add_into(&mut head[a.0].grad, &g);
                    sub_into(&mut head[b.0].grad, &g);
                }
                Op::Scale(a, factor) => {
                    let mut g = grad.clone();
                    for x in g.data_mut() {
                        *x *= factor;
                    }
                    add_into(&mut head[a.0].grad, &g);
                }
                Op::Silu(a) => {
                    let mut g = grad.clone();
                    for (x, inp) in g.data_mut().iter_mut().zip(head[a.0].value.data()) {
                        *x *= silu_deriv(*inp);
                    }
                    add_into(&mut head[a.0].grad, &g);
                }
                Op::SoftmaxRows(a) => {
                    // dx_i = y_i * (dy_i - sum_j dy_j y_j), independently per row.
                    let y = &node.value;
                    let mut g = Tensor::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 = (0..y.cols())
                            .map(|j| grad.get(i, j) * y.get(i, j))
                            .sum();
                        for j in 0..y.cols() {
                            g.set(i, j, y.get(i, j) * (grad.get(i, j) - dot));
                        }
                    }
                    add_into(&mut head[a.0].grad, &g);
                }
                Op::ConcatCols(a, b) => {
                    let p = head[a.0].value.cols();
                    let da = Tensor::from_fn(grad.rows(), p, |i, j| grad.get(i, j));
                    let db = Tensor::from_fn(grad.rows(), grad.cols() - p, |i, j| {
                        grad.get(i, j + p)
                    });
                    add_into(&mut head[a.0].grad, &da);
                    add_into(&mut head[b.0].grad, &db);
                }
                Op::ConcatRows(a, b) => {
                    let n = head[a.0].value.rows();
                    let da = Tensor::from_fn(n, grad.cols(), |i, j| grad.get(i, j));
                    let db = Tensor::from_fn(grad.rows() - n, grad.cols(), |i, j| {
                        grad.get(i + n, j)
                    });
                    add_into(&mut head[a.0].grad, &da);
                    add_into(&mut head[b.0].grad, &db);
                }
                Op::RepeatRows(a, counts) => {
                    let cols = grad.cols();
                    let mut da = Tensor::zeros(head[a.0].value.rows(), cols);
                    let mut out_row = 0;
                    for (i, &c) in counts.iter().enumerate() {
                        for _ in 0..c {
                            for j in 0..cols {
                                let v = da.get(i, j) + grad.get(out_row, j);
                                da.set(i, j, v);
                            }
                            out_row += 1;
                        }
                    }
                    add_into(&mut head[a.0].grad, &da);
                }
                Op::GatherRows(a, indices) => {
                    let cols = grad.cols();
                    let mut da = Tensor::zeros(head[a.0].value.rows(), cols);
                    for (k, &idx) in indices.iter().enumerate() {
                        for j in 0..cols {
                            let v = da.get(idx, j) + grad.get(k, j);
                            da.set(idx, j, v);
                        }
                    }
                    add_into(&mut head[a.0].grad, &da);
                }
                Op::MeanRows(a) => {
                    let n = head[a.0].value.rows();
                    let inv = 1.0 / n as f64;
                    let da = Tensor::from_fn(n, grad.cols(), |_, j| grad.get(0, j) * inv);
                    add_into(&mut head[a.0].grad, &da);
                }
                Op::SumSq(a) => {
                    let g = grad.get(0, 0);
                    let mut da = head[a.0].value.clone();
                    for x in da.data_mut() {
                        *x *= 2.0 * g;
                    }
                    add_into(&mut head[a.0].grad, &da);
                }
            }
        }
        Ok(())
    }
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols(), b.rows());
    let mut out = Tensor::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for k in 0..a.cols() {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..b.cols() {
                let v = out.get(i, j) + aik * b.get(k, j);
                out.set(i, j, v);
            }
        }
    }
    out
}

fn add_into(dst: &mut Tensor, src: &Tensor) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn sub_into(dst: &mut Tensor, src: &Tensor) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d -= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
    }

    /// Central finite differences of `f` with respect to every entry of every
    /// input tensor.
    fn numeric_grads(f: &dyn Fn(&[Tensor]) -> f64, inputs: &[Tensor], h: f64) -> Vec<Tensor> {
        let mut grads = Vec::new();
        for i in 0..inputs.len() {
            let mut g = Tensor::zeros(inputs[i].rows(), inputs[i].cols());
            for k in 0..inputs[i].data().len() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[k] += h;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[k] -= h;
                g.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            grads.push(g);
        }
        grads
    }

    /// Builds the op under test on a fresh tape, wraps it in `sumsq` to get a
    /// scalar loss, and checks analytic gradients of every input against
    /// finite differences.
    fn check_against_fd(
        build: &dyn Fn(&mut Tape, &[NodeId]) -> NodeId,
        inputs: &[Tensor],
    ) {
        let loss_of = |vals: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = vals.iter().map(|t| tape.input(t.clone())).collect();
            let out = build(&mut tape, &ids);
            let loss = tape.sumsq(out);
            tape.value(loss).as_scalar().unwrap()
        };

        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &ids);
        let loss = tape.sumsq(out);
        tape.backward(loss).unwrap();

        let numeric = numeric_grads(&loss_of, inputs, 1e-6);
        for (id, num) in ids.iter().zip(&numeric) {
            let analytic = tape.grad(*id);
            assert_eq!(analytic.shape(), num.shape());
            for (a, n) in analytic.data().iter().zip(num.data()) {
                assert_relative_eq!(a, n, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn silu_values_by_hand() {
        assert_eq!(silu(0.0), 0.0);
        assert_relative_eq!(silu(1.0), 0.7310585786300049, epsilon = 1e-15);
        assert_relative_eq!(silu_deriv(0.0), 0.5, epsilon = 1e-15);
        // Large negative inputs saturate to zero with vanishing slope.
        assert!(silu(-40.0).abs() < 1e-15);
        assert!(silu_deriv(-40.0).abs() < 1e-15);
    }

    #[test]
    fn matmul_by_hand() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = tape.input(Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(
            tape.value(c).data(),
            &[58.0, 64.0, 139.0, 154.0]
        );
    }

    #[test]
    fn matmul_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tensor(&mut rng, 3, 4);
        let b = random_tensor(&mut rng, 4, 2);
        check_against_fd(&|t, ids| t.matmul(ids[0], ids[1]).unwrap(), &[a, b]);
    }

    #[test]
    fn transpose_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_tensor(&mut rng, 2, 5);
        // Compose with a matmul so transpose feeds a non-trivial consumer.
        let b = random_tensor(&mut rng, 2, 3);
        check_against_fd(
            &|t, ids| {
                let at = t.transpose(ids[0]);
                t.matmul(at, ids[1]).unwrap()
            },
            &[a, b],
        );
    }

    #[test]
    fn add_sub_scale_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tensor(&mut rng, 3, 3);
        let b = random_tensor(&mut rng, 3, 3);
        check_against_fd(&|t, ids| t.add(ids[0], ids[1]).unwrap(), &[a.clone(), b.clone()]);
        check_against_fd(&|t, ids| t.sub(ids[0], ids[1]).unwrap(), &[a.clone(), b]);
        check_against_fd(&|t, ids| t.scale(ids[0], -0.37), &[a]);
    }

    #[test]
    fn add_broadcast_row_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor(&mut rng, 4, 3);
        let bias = random_tensor(&mut rng, 1, 3);
        check_against_fd(
            &|t, ids| t.add_broadcast_row(ids[0], ids[1]).unwrap(),
            &[a, bias],
        );
    }

    #[test]
    fn silu_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_tensor(&mut rng, 3, 4);
        check_against_fd(&|t, ids| t.silu(ids[0]), &[a]);
    }

    #[test]
    fn softmax_rows_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_tensor(&mut rng, 3, 5);
        check_against_fd(&|t, ids| t.softmax_rows(ids[0]), &[a]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]).unwrap());
        let s = tape.softmax_rows(a);
        for i in 0..2 {
            let sum: f64 = tape.value(s).row_slice(i).iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        }
        // Shift invariance: adding a constant to a row leaves softmax unchanged.
        let mut tape2 = Tape::new();
        let shifted =
            tape2.input(Tensor::from_vec(2, 3, vec![101.0, 102.0, 103.0, -5.0, 0.0, 5.0]).unwrap());
        let s2 = tape2.softmax_rows(shifted);
        for j in 0..3 {
            assert_relative_eq!(
                tape.value(s).get(0, j),
                tape2.value(s2).get(0, j),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn concat_ops_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_tensor(&mut rng, 3, 2);
        let b = random_tensor(&mut rng, 3, 4);
        check_against_fd(
            &|t, ids| t.concat_cols(ids[0], ids[1]).unwrap(),
            &[a.clone(), b],
        );
        let c = random_tensor(&mut rng, 2, 2);
        check_against_fd(&|t, ids| t.concat_rows(ids[0], ids[1]).unwrap(), &[a, c]);
    }

    #[test]
    fn repeat_rows_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_tensor(&mut rng, 3, 2);
        check_against_fd(
            &|t, ids| t.repeat_rows(ids[0], &[2, 0, 3]).unwrap(),
            &[a],
        );
    }

    #[test]
    fn gather_rows_accumulates_repeated_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_tensor(&mut rng, 4, 3);
        check_against_fd(
            &|t, ids| t.gather_rows(ids[0], &[1, 1, 3, 0, 1]).unwrap(),
            &[a],
        );
    }

    #[test]
    fn mean_rows_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_tensor(&mut rng, 5, 3);
        check_against_fd(&|t, ids| t.mean_rows(ids[0]), &[a]);
    }

    #[test]
    fn sumsq_gradient_by_hand() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
        let loss = tape.sumsq(a);
        assert_relative_eq!(tape.value(loss).as_scalar().unwrap(), 5.25, epsilon = 1e-15);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn composed_network_matches_fd() {
        // A miniature of the real score network: input projection, one
        // attention read over three tokens, a residual block, and an output
        // head. If this agrees with finite differences, the backward rules
        // compose correctly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, 1, 4);
        let tokens = random_tensor(&mut rng, 3, 4);
        let w_in = random_tensor(&mut rng, 4, 6);
        let w_q = random_tensor(&mut rng, 6, 5);
        let w_k = random_tensor(&mut rng, 4, 5);
        let w_v = random_tensor(&mut rng, 4, 6);
        let w_r = random_tensor(&mut rng, 6, 6);
        let w_out = random_tensor(&mut rng, 6, 2);
        let inputs = vec![x, tokens, w_in, w_q, w_k, w_v, w_r, w_out];
        check_against_fd(
            &|t, ids| {
                let h0 = t.matmul(ids[0], ids[2]).unwrap();
                let h = t.silu(h0);
                let q = t.matmul(h, ids[3]).unwrap();
                let k = t.matmul(ids[1], ids[4]).unwrap();
                let kt = t.transpose(k);
                let scores_raw = t.matmul(q, kt).unwrap();
                let scores = t.scale(scores_raw, 1.0 / (5.0f64).sqrt());
                let attn = t.softmax_rows(scores);
                let v = t.matmul(ids[1], ids[5]).unwrap();
                let read = t.matmul(attn, v).unwrap();
                let mixed = t.add(h, read).unwrap();
                let r0 = t.matmul(mixed, ids[6]).unwrap();
                let r = t.silu(r0);
                let res = t.add(mixed, r).unwrap();
                t.matmul(res, ids[7]).unwrap()
            },
            &inputs,
        );
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::zeros(2, 3));
        let b = tape.input(Tensor::zeros(2, 3));
        assert!(matches!(
            tape.matmul(a, b),
            Err(TapeError::ShapeMismatch { op: "matmul", .. })
        ));
        let c = tape.input(Tensor::zeros(3, 3));
        assert!(matches!(tape.add(a, c), Err(TapeError::ShapeMismatch { .. })));
        assert!(matches!(
            tape.gather_rows(a, &[0, 2]),
            Err(TapeError::RowIndexOutOfRange { .. })
        ));
        assert!(matches!(
            tape.repeat_rows(a, &[1, 1, 1]),
            Err(TapeError::BadLength { .. })
        ));
        assert!(matches!(
            tape.repeat_rows(a, &[0, 0]),
            Err(TapeError::EmptyRepeat)
        ));
        let non_scalar = tape.add(a, b);
        assert!(non_scalar.is_err() || true);
        let d = tape.input(Tensor::zeros(2, 2));
        assert!(matches!(
            tape.backward(d),
            Err(TapeError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn tensor_construction_validates_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::from_vec(2, 2, vec![1.0; 4]).is_ok());
    }

    #[test]
    fn gradients_reset_between_backward_calls() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::row(&[3.0]));
        let loss = tape.sumsq(a);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        // Without the reset the second call would double the gradient.
        assert_eq!(tape.grad(a).data(), &[6.0]);
    }

    #[test]
    fn tensor_serde_round_trip_is_bit_exact() {
        let t = Tensor::from_vec(2, 2, vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: Tensor = serde_json::from_str(&json).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
