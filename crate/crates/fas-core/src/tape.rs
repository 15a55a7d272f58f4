//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A `Tape` is an append-only arena of computation nodes in topological
//! order: every node's operands precede it, so one reverse traversal from the
//! loss accumulates a gradient for every parameter that influenced it.
//! Gradients over fan-out are summed; parameters with no influence receive
//! exact zeros. Every forward value is checked for NaN/Inf and failures name
//! the producing operation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::GradMap;
use crate::rng::StreamRng;

pub type NodeId = usize;

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(String),
    Matmul(NodeId, NodeId),
    /// A * B^T
    MatmulTB(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Broadcast-add a 1xN bias row to every row of the operand.
    AddRowBias(NodeId, NodeId),
    SoftmaxRows(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    /// Row gather; `None` slots are zero-padding and receive no gradient.
    GatherRows(NodeId, Vec<Option<usize>>),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    MeanRows(NodeId),
    BroadcastRow(NodeId),
    Reshape(NodeId),
    /// Inverted dropout; the per-entry scale (0 or 1/(1-rate)) is cached for
    /// the backward pass.
    Dropout(NodeId, Vec<f64>),
    /// -log softmax(logits)[label] on a 1xN logits row; produces a 1x1 node.
    CrossEntropy(NodeId, usize),
    SumAll(NodeId),
}

struct Node {
    op: Op,
    value: Matrix,
}

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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Matrix, name: &str) -> Result<NodeId> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { op, value });
        Ok(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(Op::Constant, value, "constant")
    }

    pub fn param(&mut self, name: &str, value: Matrix) -> Result<NodeId> {
        self.push(Op::Param(name.to_string()), value, name)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::Matmul(a, b), v, "matmul")
    }

    pub fn matmul_transpose_b(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_transpose_b(self.value(b))?;
        self.push(Op::MatmulTB(a, b), v, "matmul_transpose_b")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v, "sub")
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(Op::Hadamard(a, b), v, "hadamard")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v, "scale")
    }

    /// `a + bias` where bias is 1xN, added to each row.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != m.cols() {
            return Err(Error::Shape {
                op: "add_row_bias".to_string(),
                detail: format!("operand {}x{}, bias {}x{}", m.rows(), m.cols(), b.rows(), b.cols()),
            });
        }
        let mut v = m.clone();
        for r in 0..v.rows() {
            for (x, y) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *x += y;
            }
        }
        self.push(Op::AddRowBias(a, bias), v, "add_row_bias")
    }

    /// Row-wise softmax with per-row max subtraction for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        let mut v = m.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - max);
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), v, "softmax_rows")
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(gelu);
        self.push(Op::Gelu(a), v, "gelu")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v, "sigmoid")
    }

    /// Gather rows by index; `None` slots become zero rows (padding).
    pub fn gather_rows(&mut self, a: NodeId, slots: Vec<Option<usize>>) -> Result<NodeId> {
        let m = self.value(a);
        for &s in slots.iter().flatten() {
            if s >= m.rows() {
                return Err(Error::Input(format!(
                    "gather_rows: index {s} out of range for {} rows",
                    m.rows()
                )));
            }
        }
        let mut v = Matrix::zeros(slots.len(), m.cols());
        for (r, slot) in slots.iter().enumerate() {
            if let Some(src) = slot {
                v.row_mut(r).copy_from_slice(m.row(*src));
            }
        }
        self.push(Op::GatherRows(a, slots), v, "gather_rows")
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols() != mb.cols() {
            return Err(Error::Shape {
                op: "concat_rows".to_string(),
                detail: format!("{}x{} vs {}x{}", ma.rows(), ma.cols(), mb.rows(), mb.cols()),
            });
        }
        let mut data = Vec::with_capacity((ma.rows() + mb.rows()) * ma.cols());
        data.extend_from_slice(ma.data());
        data.extend_from_slice(mb.data());
        let v = Matrix::from_vec(ma.rows() + mb.rows(), ma.cols(), data)?;
        self.push(Op::ConcatRows(a, b), v, "concat_rows")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(Error::Shape {
                op: "concat_cols".to_string(),
                detail: format!("{}x{} vs {}x{}", ma.rows(), ma.cols(), mb.rows(), mb.cols()),
            });
        }
        let cols = ma.cols() + mb.cols();
        let mut data = Vec::with_capacity(ma.rows() * cols);
        for r in 0..ma.rows() {
            data.extend_from_slice(ma.row(r));
            data.extend_from_slice(mb.row(r));
        }
        let v = Matrix::from_vec(ma.rows(), cols, data)?;
        self.push(Op::ConcatCols(a, b), v, "concat_cols")
    }

    /// Mean over rows, producing a 1xN row.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::Input("mean_rows: empty matrix".into()));
        }
        let mut v = Matrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, x) in v.row_mut(0).iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        v.scale_in_place(1.0 / m.rows() as f64);
        self.push(Op::MeanRows(a), v, "mean_rows")
    }

    /// Duplicate a 1xN row `n` times.
    pub fn broadcast_row(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let m = self.value(a);
        if m.rows() != 1 {
            return Err(Error::Shape {
                op: "broadcast_row".to_string(),
                detail: format!("expected 1-row operand, got {}x{}", m.rows(), m.cols()),
            });
        }
        let mut data = Vec::with_capacity(n * m.cols());
        for _ in 0..n {
            data.extend_from_slice(m.row(0));
        }
        let v = Matrix::from_vec(n, m.cols(), data)?;
        self.push(Op::BroadcastRow(a), v, "broadcast_row")
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let m = self.value(a);
        if m.rows() * m.cols() != rows * cols {
            return Err(Error::Shape {
                op: "reshape".to_string(),
                detail: format!("{}x{} -> {rows}x{cols}", m.rows(), m.cols()),
            });
        }
        let v = Matrix::from_vec(rows, cols, m.data().to_vec())?;
        self.push(Op::Reshape(a), v, "reshape")
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate); in eval
    /// mode this is the identity (no node is recorded).
    pub fn dropout(
        &mut self,
        a: NodeId,
        rate: f64,
        training: bool,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Input(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let m = self.value(a);
        let mask: Vec<f64> = (0..m.rows() * m.cols())
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let mut v = m.clone();
        for (x, k) in v.data_mut().iter_mut().zip(&mask) {
            *x *= k;
        }
        self.push(Op::Dropout(a, mask), v, "dropout")
    }

    /// Cross-entropy of a 1xN logits row against a class index, via
    /// log-sum-exp. Returns a 1x1 scalar node.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let m = self.value(logits);
        if m.rows() != 1 {
            return Err(Error::Shape {
                op: "cross_entropy".to_string(),
                detail: format!("logits must be a single row, got {}x{}", m.rows(), m.cols()),
            });
        }
        if label >= m.cols() {
            return Err(Error::Input(format!(
                "cross_entropy: label {label} out of range for {} classes",
                m.cols()
            )));
        }
        let row = m.row(0);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
        let loss = lse - row[label];
        let v = Matrix::from_vec(1, 1, alloc::vec![loss])?;
        self.push(Op::CrossEntropy(logits, label), v, "cross_entropy")
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(a).data().iter().sum();
        let v = Matrix::from_vec(1, 1, alloc::vec![s])?;
        self.push(Op::SumAll(a), v, "sum_all")
    }

    /// Reverse pass from a scalar loss node. Returns gradients for every
    /// `param` node on the tape; registered parameters that did not influence
    /// the loss receive exact zeros.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Constant => {}
                Op::Param(_) => {
                    grads[id] = Some(g);
                }
                Op::Matmul(a, b) => {
                    // dA = dC * B^T, dB = A^T * dC
                    let da = g.matmul_transpose_b(self.value(*b))?;
                    let db = self.value(*a).transpose().matmul(&g)?;
                    self.accumulate(&mut grads, *a, da)?;
                    self.accumulate(&mut grads, *b, db)?;
                }
                Op::MatmulTB(a, b) => {
                    // C = A * B^T: dA = dC * B, dB = dC^T * A
                    let da = g.matmul(self.value(*b))?;
                    let db = g.transpose().matmul(self.value(*a))?;
                    self.accumulate(&mut grads, *a, da)?;
                    self.accumulate(&mut grads, *b, db)?;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone())?;
                    self.accumulate(&mut grads, *b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *b, g.scale(-1.0))?;
                    self.accumulate(&mut grads, *a, g)?;
                }
                Op::Hadamard(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    self.accumulate(&mut grads, *a, da)?;
                    self.accumulate(&mut grads, *b, db)?;
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut grads, *a, g.scale(*c))?;
                }
                Op::AddRowBias(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(&mut grads, *bias, db)?;
                    self.accumulate(&mut grads, *a, g)?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 =
                            g.row(r).iter().zip(y.row(r)).map(|(dy, yy)| dy * yy).sum();
                        for c in 0..y.cols() {
                            dx.set(r, c, y.at(r, c) * (g.at(r, c) - dot));
                        }
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut dx = g.clone();
                    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        *d *= gelu_grad(*xv);
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    let mut dx = g.clone();
                    for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= yv * (1.0 - yv);
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::GatherRows(a, slots) => {
                    let src = self.value(*a);
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for (r, slot) in slots.iter().enumerate() {
                        if let Some(s) = slot {
                            for (o, x) in dx.row_mut(*s).iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows();
                    let cols = g.cols();
                    let da = Matrix::from_vec(ra, cols, g.data()[..ra * cols].to_vec())?;
                    let db =
                        Matrix::from_vec(g.rows() - ra, cols, g.data()[ra * cols..].to_vec())?;
                    self.accumulate(&mut grads, *a, da)?;
                    self.accumulate(&mut grads, *b, db)?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let mut da = Matrix::zeros(g.rows(), ca);
                    let mut db = Matrix::zeros(g.rows(), g.cols() - ca);
                    for r in 0..g.rows() {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    self.accumulate(&mut grads, *a, da)?;
                    self.accumulate(&mut grads, *b, db)?;
                }
                Op::MeanRows(a) => {
                    let src = self.value(*a);
                    let scale = 1.0 / src.rows() as f64;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for (o, x) in dx.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o = x * scale;
                        }
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::BroadcastRow(a) => {
                    let mut dx = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in dx.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::Reshape(a) => {
                    let src = self.value(*a);
                    let dx = Matrix::from_vec(src.rows(), src.cols(), g.data().to_vec())?;
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::Dropout(a, mask) => {
                    let mut dx = g.clone();
                    for (d, k) in dx.data_mut().iter_mut().zip(mask) {
                        *d *= k;
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::CrossEntropy(a, label) => {
                    // d logits = (softmax(logits) - one_hot(label)) * upstream
                    let x = self.value(*a);
                    let row = x.row(0);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|&v| libm::exp(v - max)).collect();
                    let sum: f64 = exps.iter().sum();
                    let up = g.at(0, 0);
                    let mut dx = Matrix::zeros(1, x.cols());
                    for c in 0..x.cols() {
                        let p = exps[c] / sum;
                        let one_hot = if c == *label { 1.0 } else { 0.0 };
                        dx.set(0, c, up * (p - one_hot));
                    }
                    self.accumulate(&mut grads, *a, dx)?;
                }
                Op::SumAll(a) => {
                    let src = self.value(*a);
                    let dx = Matrix::filled(src.rows(), src.cols(), g.at(0, 0));
                    self.accumulate(&mut grads, *a, dx)?;
                }
            }
        }

        let mut out = GradMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                let g = match grads[id].take() {
                    Some(g) => g,
                    None => Matrix::zeros(node.value.rows(), node.value.cols()),
                };
                match out.get_mut(name) {
                    // same parameter registered more than once on one tape
                    Some(existing) => existing.add_assign(&g)?,
                    None => {
                        out.insert(name.clone(), g);
                    }
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) -> Result<()> {
        match &mut grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamRng};
    use alloc::vec;

    #[test]
    fn softmax_of_equal_values_is_uniform() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::filled(1, 4, 3.7)).unwrap();
        let s = t.softmax_rows(a).unwrap();
        for &v in t.value(s).data() {
            assert!((v - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_survives_large_values() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::row_vec(vec![1000.0, 0.0])).unwrap();
        let s = t.softmax_rows(a).unwrap();
        let v = t.value(s);
        assert!(v.at(0, 0) > 1.0 - 1e-12);
        assert!(v.at(0, 1) < 1e-12);
        assert!(v.is_finite());
    }

    #[test]
    fn softmax_closed_form() {
        // [0, ln 3] -> [0.25, 0.75]
        let mut t = Tape::new();
        let a = t.constant(Matrix::row_vec(vec![0.0, libm::log(3.0)])).unwrap();
        let s = t.softmax_rows(a).unwrap();
        assert!((t.value(s).at(0, 0) - 0.25).abs() <= 1e-12);
        assert!((t.value(s).at(0, 1) - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_classes() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(1, 7)).unwrap();
        let l = t.cross_entropy(a, 3).unwrap();
        assert!((t.value(l).at(0, 0) - libm::log(7.0)).abs() <= 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_margin() {
        let mut t = Tape::new();
        let a = t
            .constant(Matrix::row_vec(vec![50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
            .unwrap();
        let l = t.cross_entropy(a, 0).unwrap();
        assert!(t.value(l).at(0, 0) <= 1e-9);
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let logits = vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut t = Tape::new();
        let a = t.constant(Matrix::row_vec(logits.clone())).unwrap();
        let l = t.cross_entropy(a, 1).unwrap();
        // direct oracle: -log(e^2 / sum e^x)
        let sum: f64 = logits.iter().map(|&x| libm::exp(x)).sum();
        let oracle = -libm::log(libm::exp(2.0) / sum);
        assert!((t.value(l).at(0, 0) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(1, 7)).unwrap();
        assert!(matches!(t.cross_entropy(a, 7), Err(Error::Input(_))));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut t = Tape::new();
        let w = t.param("w", Matrix::filled(2, 2, 3.0)).unwrap();
        let l = t.sum_all(w).unwrap();
        let grads = t.backward(l).unwrap();
        assert_eq!(grads["w"], Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn fan_out_doubles_gradient() {
        // loss = sum(Wx) + sum(Wx) -> gradient is twice the single-use one
        let w_val = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x_val = Matrix::from_vec(2, 1, vec![5.0, 6.0]).unwrap();

        let single = {
            let mut t = Tape::new();
            let w = t.param("w", w_val.clone()).unwrap();
            let x = t.constant(x_val.clone()).unwrap();
            let wx = t.matmul(w, x).unwrap();
            let l = t.sum_all(wx).unwrap();
            t.backward(l).unwrap()["w"].clone()
        };
        let doubled = {
            let mut t = Tape::new();
            let w = t.param("w", w_val).unwrap();
            let x = t.constant(x_val).unwrap();
            let wx = t.matmul(w, x).unwrap();
            let s = t.sum_all(wx).unwrap();
            let l = t.add(s, s).unwrap();
            t.backward(l).unwrap()["w"].clone()
        };
        assert_eq!(doubled, single.scale(2.0));
    }

    #[test]
    fn unused_param_gets_exact_zeros() {
        let mut t = Tape::new();
        let w = t.param("w", Matrix::filled(1, 1, 2.0)).unwrap();
        let u = t.param("unused", Matrix::filled(2, 3, 1.0)).unwrap();
        let _ = u;
        let l = t.sum_all(w).unwrap();
        let grads = t.backward(l).unwrap();
        assert_eq!(grads["unused"], Matrix::zeros(2, 3));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let w = t.param("w", Matrix::filled(2, 2, 1.0)).unwrap();
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut t = Tape::new();
        let mut rng = StreamRng::new(1, Stream::Dropout);
        let a = t.constant(Matrix::filled(3, 3, 2.0)).unwrap();
        let d = t.dropout(a, 0.9, false, &mut rng).unwrap();
        assert_eq!(d, a);
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut t = Tape::new();
        let mut rng = StreamRng::new(1, Stream::Dropout);
        let a = t.constant(Matrix::filled(3, 3, 2.0)).unwrap();
        let d = t.dropout(a, 0.0, true, &mut rng).unwrap();
        assert_eq!(d, a);
    }

    #[test]
    fn dropout_rate_one_is_rejected() {
        let mut t = Tape::new();
        let mut rng = StreamRng::new(1, Stream::Dropout);
        let a = t.constant(Matrix::filled(1, 1, 2.0)).unwrap();
        assert!(t.dropout(a, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics_under_fixed_seed() {
        // 10^6 entries of 1.0 at rate 0.4: mean within 1% of 1.0,
        // zero-fraction within 0.4 +/- 0.005
        let mut t = Tape::new();
        let mut rng = StreamRng::new(42, Stream::Dropout);
        let a = t.constant(Matrix::filled(1000, 1000, 1.0)).unwrap();
        let d = t.dropout(a, 0.4, true, &mut rng).unwrap();
        let data = t.value(d).data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let zeros = data.iter().filter(|&&v| v == 0.0).count() as f64 / data.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((zeros - 0.4).abs() < 0.005, "zero fraction {zeros}");
    }

    #[test]
    fn nan_input_is_caught_with_op_name() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::filled(1, 2, 1e308)).unwrap();
        let b = t.constant(Matrix::filled(1, 2, 1e308)).unwrap();
        match t.add(a, b) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "add"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
