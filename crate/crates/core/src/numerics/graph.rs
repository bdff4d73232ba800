//! Computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the graph is acyclic by construction. Forward values
//! are computed eagerly when an operation is recorded; [`Graph::backward`]
//! replays the list in reverse and accumulates gradients into each node's
//! tensor. Multiple uses of a node sum their contributions.

use super::tensor::{matmul, transpose, NumericsError, Tensor};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// matrix + row vector, broadcast over rows
    AddRow { a: NodeId, row: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: f32 },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    Relu { a: NodeId },
    Exp { a: NodeId },
    Log { a: NodeId },
    /// row-wise softmax (1-D tensors are one row)
    Softmax { a: NodeId },
    /// row-wise layer normalization with learnable gain/bias
    LayerNorm { a: NodeId, gamma: NodeId, beta: NodeId, eps: f32 },
    /// concatenate along axis 0 (rows) or 1 (cols)
    Concat { parts: Vec<NodeId>, axis: usize },
    /// half-open [start, end) slice along axis 0 or 1
    Slice { a: NodeId, axis: usize, start: usize, end: usize },
    Sum { a: NodeId },
    Mean { a: NodeId },
    Transpose { a: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id].value.grad()
    }

    /// Insert a leaf that does not receive a gradient.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t, false)
    }

    /// Insert a differentiable leaf.
    pub fn input_grad(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, ka) = self.value(a).rows_cols();
        let (kb, n) = self.value(b).rows_cols();
        assert_eq!(ka, kb, "matmul inner dims {ka} vs {kb}");
        let out = matmul(self.value(a).data(), self.value(b).data(), m, ka, n);
        self.push_op(Op::MatMul { a, b }, Tensor::matrix(m, n, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let out: Vec<f32> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::Add { a, b }, t)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (m, n) = self.value(a).rows_cols();
        assert_eq!(self.value(row).numel(), n, "add_row width");
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += r[j];
            }
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::AddRow { a, row }, t)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let out: Vec<f32> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::Mul { a, b }, t)
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        let out: Vec<f32> = self.value(a).data().iter().map(|x| c * x).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::Scale { a, c }, t)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.tanh(), |a| Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), |a| Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), |a| Op::Relu { a })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.exp(), |a| Op::Exp { a })
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.ln(), |a| Op::Log { a })
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).rows_cols();
        let mut out = vec![0.0f32; m * n];
        softmax_rows(self.value(a).data(), &mut out, m, n);
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::Softmax { a }, t)
    }

    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId, eps: f32) -> NodeId {
        let (m, n) = self.value(a).rows_cols();
        assert_eq!(self.value(gamma).numel(), n, "layer_norm gamma width");
        assert_eq!(self.value(beta).numel(), n, "layer_norm beta width");
        let x = self.value(a).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[i * n + j] = g[j] * (row[j] - mean) * inv + b[j];
            }
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(Op::LayerNorm { a, gamma, beta, eps }, t)
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId {
        assert!(!parts.is_empty());
        assert!(axis < 2);
        let shapes: Vec<(usize, usize)> = parts.iter().map(|&p| self.value(p).rows_cols()).collect();
        let t = if axis == 0 {
            let cols = shapes[0].1;
            assert!(shapes.iter().all(|s| s.1 == cols), "concat rows: col mismatch");
            let rows: usize = shapes.iter().map(|s| s.0).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for &p in parts {
                out.extend_from_slice(self.value(p).data());
            }
            Tensor::matrix(rows, cols, out)
        } else {
            let rows = shapes[0].0;
            assert!(shapes.iter().all(|s| s.0 == rows), "concat cols: row mismatch");
            let cols: usize = shapes.iter().map(|s| s.1).sum();
            let mut out = vec![0.0f32; rows * cols];
            let mut off = 0;
            for (pi, &p) in parts.iter().enumerate() {
                let (_, w) = shapes[pi];
                let d = self.value(p).data();
                for i in 0..rows {
                    out[i * cols + off..i * cols + off + w].copy_from_slice(&d[i * w..(i + 1) * w]);
                }
                off += w;
            }
            Tensor::matrix(rows, cols, out)
        };
        self.push_op(Op::Concat { parts: parts.to_vec(), axis }, t)
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, end: usize) -> NodeId {
        assert!(axis < 2 && start < end);
        let (m, n) = self.value(a).rows_cols();
        let d = self.value(a).data();
        let t = if axis == 0 {
            assert!(end <= m, "row slice {start}..{end} of {m}");
            Tensor::matrix(end - start, n, d[start * n..end * n].to_vec())
        } else {
            assert!(end <= n, "col slice {start}..{end} of {n}");
            let w = end - start;
            let mut out = Vec::with_capacity(m * w);
            for i in 0..m {
                out.extend_from_slice(&d[i * n + start..i * n + end]);
            }
            Tensor::matrix(m, w, out)
        };
        self.push_op(Op::Slice { a, axis, start, end }, t)
    }

    /// Row `i` as a [1, n] matrix.
    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        self.slice(a, 0, i, i + 1)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f32 = self.value(a).data().iter().sum();
        self.push_op(Op::Sum { a }, Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel();
        let s: f32 = self.value(a).data().iter().sum();
        self.push_op(Op::Mean { a }, Tensor::scalar(s / n as f32))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).rows_cols();
        let out = transpose(self.value(a).data(), m, n);
        self.push_op(Op::Transpose { a }, Tensor::matrix(n, m, out))
    }

    fn unary(
        &mut self,
        a: NodeId,
        f: impl Fn(f32) -> f32,
        op: impl Fn(NodeId) -> Op,
    ) -> NodeId {
        let out: Vec<f32> = self.value(a).data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), out).unwrap();
        self.push_op(op(a), t)
    }

    fn push_op(&mut self, op: Op, value: Tensor) -> NodeId {
        let needs = op_parents(&op).iter().any(|&p| self.nodes[p].needs_grad);
        self.push(op, value, needs)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    /// Reverse pass from a scalar output. Gradients from any previous backward
    /// are cleared first, so repeated calls on the same graph are identical.
    pub fn backward(&mut self, out: NodeId) -> Result<(), NumericsError> {
        if !self.nodes[out].value.is_scalar() {
            return Err(NumericsError::NonScalarOutput(
                self.nodes[out].value.shape().to_vec(),
            ));
        }
        for n in &mut self.nodes {
            n.value.clear_grad();
        }
        *self.nodes[out].value.grad_mut_or_zeros() = vec![1.0];
        for id in (0..=out).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            if self.nodes[id].value.grad().is_none() {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let d_out = self.nodes[id].value.grad().unwrap().to_vec();
            self.backward_op(&op, id, &d_out);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f32]) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let g = self.nodes[id].value.grad_mut_or_zeros();
        debug_assert_eq!(g.len(), delta.len());
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    fn backward_op(&mut self, op: &Op, id: NodeId, d_out: &[f32]) {
        match op {
            Op::Input => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.value(*a).rows_cols();
                let (_, n) = self.value(*b).rows_cols();
                // dA = dOut @ B^T
                let bt = transpose(self.value(*b).data(), k, n);
                let da = matmul(d_out, &bt, m, n, k);
                self.accumulate(*a, &da);
                // dB = A^T @ dOut
                let at = transpose(self.value(*a).data(), m, k);
                let db = matmul(&at, d_out, k, m, n);
                self.accumulate(*b, &db);
            }
            Op::Add { a, b } => {
                self.accumulate(*a, d_out);
                self.accumulate(*b, d_out);
            }
            Op::AddRow { a, row } => {
                self.accumulate(*a, d_out);
                let (m, n) = self.value(*a).rows_cols();
                let mut dr = vec![0.0f32; n];
                for i in 0..m {
                    for j in 0..n {
                        dr[j] += d_out[i * n + j];
                    }
                }
                self.accumulate(*row, &dr);
            }
            Op::Mul { a, b } => {
                let da: Vec<f32> = d_out
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(d, y)| d * y)
                    .collect();
                let db: Vec<f32> = d_out
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(d, x)| d * x)
                    .collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::Scale { a, c } => {
                let da: Vec<f32> = d_out.iter().map(|d| c * d).collect();
                self.accumulate(*a, &da);
            }
            Op::Tanh { a } => {
                let y = self.nodes[id].value.data();
                let da: Vec<f32> = d_out.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect();
                self.accumulate(*a, &da);
            }
            Op::Sigmoid { a } => {
                let y = self.nodes[id].value.data();
                let da: Vec<f32> = d_out.iter().zip(y).map(|(d, y)| d * y * (1.0 - y)).collect();
                self.accumulate(*a, &da);
            }
            Op::Relu { a } => {
                let x = self.value(*a).data();
                let da: Vec<f32> = d_out
                    .iter()
                    .zip(x)
                    .map(|(d, x)| if *x > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::Exp { a } => {
                let y = self.nodes[id].value.data();
                let da: Vec<f32> = d_out.iter().zip(y).map(|(d, y)| d * y).collect();
                self.accumulate(*a, &da);
            }
            Op::Log { a } => {
                let x = self.value(*a).data();
                let da: Vec<f32> = d_out.iter().zip(x).map(|(d, x)| d / x).collect();
                self.accumulate(*a, &da);
            }
            Op::Softmax { a } => {
                let (m, n) = self.value(*a).rows_cols();
                let y = self.nodes[id].value.data();
                let mut da = vec![0.0f32; m * n];
                for i in 0..m {
                    let base = i * n;
                    let dot: f32 = (0..n).map(|j| d_out[base + j] * y[base + j]).sum();
                    for j in 0..n {
                        da[base + j] = y[base + j] * (d_out[base + j] - dot);
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::LayerNorm { a, gamma, beta, eps } => {
                let (m, n) = self.value(*a).rows_cols();
                let x = self.value(*a).data().to_vec();
                let g = self.value(*gamma).data().to_vec();
                let mut da = vec![0.0f32; m * n];
                let mut dg = vec![0.0f32; n];
                let mut db = vec![0.0f32; n];
                for i in 0..m {
                    let row = &x[i * n..(i + 1) * n];
                    let mean = row.iter().sum::<f32>() / n as f32;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f32> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dout_row = &d_out[i * n..(i + 1) * n];
                    for j in 0..n {
                        dg[j] += dout_row[j] * xhat[j];
                        db[j] += dout_row[j];
                    }
                    let dxhat: Vec<f32> = (0..n).map(|j| dout_row[j] * g[j]).collect();
                    let mean_dxhat = dxhat.iter().sum::<f32>() / n as f32;
                    let mean_dxhat_xhat =
                        (0..n).map(|j| dxhat[j] * xhat[j]).sum::<f32>() / n as f32;
                    for j in 0..n {
                        da[i * n + j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                self.accumulate(*a, &da);
                self.accumulate(*gamma, &dg);
                self.accumulate(*beta, &db);
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).numel();
                        let dp = d_out[off..off + len].to_vec();
                        self.accumulate(p, &dp);
                        off += len;
                    }
                } else {
                    let rows = self.value(parts[0]).rows_cols().0;
                    let total: usize = parts.iter().map(|&p| self.value(p).rows_cols().1).sum();
                    let mut off = 0;
                    for &p in parts {
                        let (_, w) = self.value(p).rows_cols();
                        let mut dp = vec![0.0f32; rows * w];
                        for i in 0..rows {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&d_out[i * total + off..i * total + off + w]);
                        }
                        self.accumulate(p, &dp);
                        off += w;
                    }
                }
            }
            Op::Slice { a, axis, start, end } => {
                let (m, n) = self.value(*a).rows_cols();
                let mut da = vec![0.0f32; m * n];
                if *axis == 0 {
                    da[start * n..end * n].copy_from_slice(d_out);
                } else {
                    let w = end - start;
                    for i in 0..m {
                        da[i * n + start..i * n + end]
                            .copy_from_slice(&d_out[i * w..(i + 1) * w]);
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Sum { a } => {
                let da = vec![d_out[0]; self.value(*a).numel()];
                self.accumulate(*a, &da);
            }
            Op::Mean { a } => {
                let n = self.value(*a).numel();
                let da = vec![d_out[0] / n as f32; n];
                self.accumulate(*a, &da);
            }
            Op::Transpose { a } => {
                let (m, n) = self.value(*a).rows_cols();
                let da = transpose(d_out, n, m);
                self.accumulate(*a, &da);
            }
        }
    }

    /// Replay the recorded operations in f64 with one input's data replaced,
    /// returning the scalar value at `out`. Inputs are upcast exactly from
    /// their f32 values. Used by finite-difference oracles, where evaluating
    /// the same operation semantics at higher precision keeps the 1/eps noise
    /// amplification of central differences below the check tolerance.
    pub fn eval_scalar_f64(&self, out: NodeId, replaced: NodeId, values: &[f64]) -> f64 {
        assert!(self.nodes[out].value.is_scalar());
        assert_eq!(values.len(), self.nodes[replaced].value.numel());
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(out + 1);
        for id in 0..=out {
            let node = &self.nodes[id];
            let v = match &node.op {
                Op::Input => {
                    if id == replaced {
                        values.to_vec()
                    } else {
                        node.value.data().iter().map(|&v| v as f64).collect()
                    }
                }
                Op::MatMul { a, b } => {
                    let (m, k) = self.value(*a).rows_cols();
                    let (_, n) = self.value(*b).rows_cols();
                    let mut o = vec![0.0f64; m * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = vals[*a][i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                o[i * n + j] += aik * vals[*b][kk * n + j];
                            }
                        }
                    }
                    o
                }
                Op::Add { a, b } => vals[*a].iter().zip(&vals[*b]).map(|(x, y)| x + y).collect(),
                Op::AddRow { a, row } => {
                    let (m, n) = self.value(*a).rows_cols();
                    let mut o = vals[*a].clone();
                    for i in 0..m {
                        for j in 0..n {
                            o[i * n + j] += vals[*row][j];
                        }
                    }
                    o
                }
                Op::Mul { a, b } => vals[*a].iter().zip(&vals[*b]).map(|(x, y)| x * y).collect(),
                Op::Scale { a, c } => vals[*a].iter().map(|x| *c as f64 * x).collect(),
                Op::Tanh { a } => vals[*a].iter().map(|x| x.tanh()).collect(),
                Op::Sigmoid { a } => vals[*a].iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect(),
                Op::Relu { a } => vals[*a].iter().map(|x| x.max(0.0)).collect(),
                Op::Exp { a } => vals[*a].iter().map(|x| x.exp()).collect(),
                Op::Log { a } => vals[*a].iter().map(|x| x.ln()).collect(),
                Op::Softmax { a } => {
                    let (m, n) = self.value(*a).rows_cols();
                    let mut o = vec![0.0f64; m * n];
                    for i in 0..m {
                        let row = &vals[*a][i * n..(i + 1) * n];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                        let s: f64 = exps.iter().sum();
                        for j in 0..n {
                            o[i * n + j] = exps[j] / s;
                        }
                    }
                    o
                }
                Op::LayerNorm { a, gamma, beta, eps } => {
                    let (m, n) = self.value(*a).rows_cols();
                    let mut o = vec![0.0f64; m * n];
                    for i in 0..m {
                        let row = &vals[*a][i * n..(i + 1) * n];
                        let mean = row.iter().sum::<f64>() / n as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + *eps as f64).sqrt();
                        for j in 0..n {
                            o[i * n + j] =
                                vals[*gamma][j] * (row[j] - mean) * inv + vals[*beta][j];
                        }
                    }
                    o
                }
                Op::Concat { parts, axis } => {
                    if *axis == 0 {
                        let mut o = Vec::new();
                        for &p in parts {
                            o.extend_from_slice(&vals[p]);
                        }
                        o
                    } else {
                        let rows = self.value(parts[0]).rows_cols().0;
                        let total: usize =
                            parts.iter().map(|&p| self.value(p).rows_cols().1).sum();
                        let mut o = vec![0.0f64; rows * total];
                        let mut off = 0;
                        for &p in parts {
                            let (_, w) = self.value(p).rows_cols();
                            for i in 0..rows {
                                o[i * total + off..i * total + off + w]
                                    .copy_from_slice(&vals[p][i * w..(i + 1) * w]);
                            }
                            off += w;
                        }
                        o
                    }
                }
                Op::Slice { a, axis, start, end } => {
                    let (_, n) = self.value(*a).rows_cols();
                    if *axis == 0 {
                        vals[*a][start * n..end * n].to_vec()
                    } else {
                        let (m, _) = self.value(*a).rows_cols();
                        let w = end - start;
                        let mut o = Vec::with_capacity(m * w);
                        for i in 0..m {
                            o.extend_from_slice(&vals[*a][i * n + start..i * n + end]);
                        }
                        o
                    }
                }
                Op::Sum { a } => vec![vals[*a].iter().sum::<f64>()],
                Op::Mean { a } => {
                    vec![vals[*a].iter().sum::<f64>() / vals[*a].len() as f64]
                }
                Op::Transpose { a } => {
                    let (m, n) = self.value(*a).rows_cols();
                    let mut o = vec![0.0f64; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            o[j * m + i] = vals[*a][i * n + j];
                        }
                    }
                    o
                }
            };
            vals.push(v);
        }
        vals[out][0]
    }
}

fn op_parents(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Input => vec![],
        Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
        Op::AddRow { a, row } => vec![*a, *row],
        Op::Scale { a, .. }
        | Op::Tanh { a }
        | Op::Sigmoid { a }
        | Op::Relu { a }
        | Op::Exp { a }
        | Op::Log { a }
        | Op::Softmax { a }
        | Op::Slice { a, .. }
        | Op::Sum { a }
        | Op::Mean { a }
        | Op::Transpose { a } => vec![*a],
        Op::LayerNorm { a, gamma, beta, .. } => vec![*a, *gamma, *beta],
        Op::Concat { parts, .. } => parts.clone(),
    }
}

pub(crate) fn softmax_rows(x: &[f32], out: &mut [f32], m: usize, n: usize) {
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut s = 0.0f32;
        for j in 0..n {
            let e = (row[j] - max).exp();
            out[i * n + j] = e;
            s += e;
        }
        for j in 0..n {
            out[i * n + j] /= s;
        }
    }
}
