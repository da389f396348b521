//! Tape-style computation graph.
//!
//! Forward ops append nodes in topological order; [`Graph::backward`] walks
//! the tape in reverse and accumulates gradients into every leaf that was
//! registered with `requires_grad`. Gradient contributions are added in tape
//! order, so replays are bitwise identical.

use super::{
    gelu_grad_scalar, gelu_scalar, matmul_nn, matmul_nt, matmul_tn, softmax_rows_raw, Tensor,
    TensorError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    AddBias { a: NodeId, bias: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: f32 },
    Gelu { a: NodeId },
    Relu { a: NodeId },
    Transpose { a: NodeId },
    Reshape { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    SliceCols { a: NodeId, start: usize, len: usize },
    SoftmaxRows { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f32 },
    CrossEntropy { logits: NodeId, targets: Vec<usize> },
    Gather { table: NodeId, ids: Vec<usize> },
    SumAll { a: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Records a forward computation and differentiates it.
pub struct Graph {
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            leaves: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Gradient flows into it iff the tensor was
    /// marked `requires_grad`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        let needs = value.requires_grad();
        let id = self.push(Op::Leaf, value, needs);
        self.leaves.push(id);
        id
    }

    /// Registers a non-differentiable constant (masks, raw inputs).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let value = value.with_requires_grad(false);
        self.push(Op::Leaf, value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        id
    }

    fn push_checked(
        &mut self,
        op_name: &'static str,
        op: Op,
        value: Tensor,
        needs_grad: bool,
    ) -> Result<NodeId, TensorError> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        Ok(self.push(op, value, needs_grad))
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    fn dims2(&self, id: NodeId) -> (usize, usize) {
        let t = &self.nodes[id.0].value;
        (t.rows(), t.cols())
    }

    // ── Forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("[{m}x{k}] . [{k2}x{n}]"),
            });
        }
        let data = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(&[a, b]);
        self.push_checked("matmul", Op::Matmul { a, b }, Tensor::from_op_output(vec![m, n], data), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            });
        }
        let data: Vec<f32> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(&[a, b]);
        self.push_checked("add", Op::Add { a, b }, Tensor::from_op_output(shape, data), needs)
    }

    /// `[m x n] + [n]` — the bias row is added to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a);
        if self.value(bias).shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                detail: format!("[{m}x{n}] + {:?}", self.value(bias).shape()),
            });
        }
        let mut data = self.value(a).data().to_vec();
        let b = self.value(bias).data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (x, &bv) in row.iter_mut().zip(&b) {
                *x += bv;
            }
        }
        let needs = self.needs(&[a, bias]);
        self.push_checked(
            "add_bias",
            Op::AddBias { a, bias },
            Tensor::from_op_output(vec![m, n], data),
            needs,
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            });
        }
        let data: Vec<f32> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(&[a, b]);
        self.push_checked("mul", Op::Mul { a, b }, Tensor::from_op_output(shape, data), needs)
    }

    pub fn scale(&mut self, a: NodeId, factor: f32) -> Result<NodeId, TensorError> {
        let data: Vec<f32> = self.value(a).data().iter().map(|x| x * factor).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(&[a]);
        self.push_checked(
            "scale",
            Op::Scale { a, factor },
            Tensor::from_op_output(shape, data),
            needs,
        )
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let data: Vec<f32> = self.value(a).data().iter().map(|&x| gelu_scalar(x)).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(&[a]);
        self.push_checked("gelu", Op::Gelu { a }, Tensor::from_op_output(shape, data), needs)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let data: Vec<f32> = self.value(a).data().iter().map(|&x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(&[a]);
        self.push_checked("relu", Op::Relu { a }, Tensor::from_op_output(shape, data), needs)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a);
        let src = self.value(a).data();
        let mut data = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let needs = self.needs(&[a]);
        self.push_checked(
            "transpose",
            Op::Transpose { a },
            Tensor::from_op_output(vec![n, m], data),
            needs,
        )
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.value(a).shape(), shape),
            });
        }
        let data = self.value(a).data().to_vec();
        let needs = self.needs(&[a]);
        self.push_checked("reshape", Op::Reshape { a }, Tensor::from_op_output(shape, data), needs)
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                detail: "no parts".into(),
            });
        }
        let (m, _) = self.dims2(parts[0]);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (mp, np) = self.dims2(p);
            if mp != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("row counts {m} vs {mp}"),
                });
            }
            widths.push(np);
        }
        let n: usize = widths.iter().sum();
        let mut data = vec![0.0f32; m * n];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                data[i * n + offset..i * n + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let needs = self.needs(parts);
        self.push_checked(
            "concat_cols",
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            Tensor::from_op_output(vec![m, n], data),
            needs,
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a);
        if start + len > n {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: n,
            });
        }
        let src = self.value(a).data();
        let mut data = vec![0.0f32; m * len];
        for i in 0..m {
            data[i * len..(i + 1) * len].copy_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let needs = self.needs(&[a]);
        self.push_checked(
            "slice_cols",
            Op::SliceCols { a, start, len },
            Tensor::from_op_output(vec![m, len], data),
            needs,
        )
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a);
        let data = softmax_rows_raw(self.value(a).data(), m, n);
        let needs = self.needs(&[a]);
        self.push_checked(
            "softmax_rows",
            Op::SoftmaxRows { a },
            Tensor::from_op_output(vec![m, n], data),
            needs,
        )
    }

    /// Normalizes each row of `x` to zero mean / unit variance, then applies
    /// the affine `gain`/`bias` (both `[d]`).
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f32,
    ) -> Result<NodeId, TensorError> {
        if eps <= 0.0 {
            return Err(TensorError::InvalidShape {
                detail: format!("layer_norm eps must be positive, got {eps}"),
            });
        }
        let (m, d) = self.dims2(x);
        if self.value(gain).shape() != [d] || self.value(bias).shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                detail: format!(
                    "x [{m}x{d}], gain {:?}, bias {:?}",
                    self.value(gain).shape(),
                    self.value(bias).shape()
                ),
            });
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut data = vec![0.0f32; m * d];
        for i in 0..m {
            let row = &src[i * d..(i + 1) * d];
            let (mean, inv_std) = row_stats(row, eps);
            let out = &mut data[i * d..(i + 1) * d];
            for j in 0..d {
                let xhat = ((row[j] as f64 - mean) * inv_std) as f32;
                out[j] = xhat * g[j] + b[j];
            }
        }
        let needs = self.needs(&[x, gain, bias]);
        self.push_checked(
            "layer_norm",
            Op::LayerNorm { x, gain, bias, eps },
            Tensor::from_op_output(vec![m, d], data),
            needs,
        )
    }

    /// Mean negative log-softmax probability of `targets` under `logits`.
    pub fn cross_entropy_logits(
        &mut self,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId, TensorError> {
        let (m, k) = self.dims2(logits);
        if targets.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy_logits",
                detail: format!("{m} logit rows, {} targets", targets.len()),
            });
        }
        for &t in targets {
            if t >= k {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy_logits",
                    index: t,
                    bound: k,
                });
            }
        }
        let src = self.value(logits).data();
        let mut total = 0.0f64;
        for (i, &t) in targets.iter().enumerate() {
            let row = &src[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut denom = 0.0f64;
            for &v in row {
                denom += ((v as f64) - max).exp();
            }
            total += -((row[t] as f64) - max - denom.ln());
        }
        let loss = (total / m as f64) as f32;
        let needs = self.needs(&[logits]);
        self.push_checked(
            "cross_entropy_logits",
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            Tensor::scalar(loss),
            needs,
        )
    }

    /// Gathers rows of `table` at `ids`; the gradient scatters back into the
    /// selected rows.
    pub fn embedding_gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        let (v, d) = self.dims2(table);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding_gather",
                    index: id,
                    bound: v,
                });
            }
        }
        if ids.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "embedding_gather",
                detail: "empty id sequence".into(),
            });
        }
        let src = self.value(table).data();
        let mut data = vec![0.0f32; ids.len() * d];
        for (i, &id) in ids.iter().enumerate() {
            data[i * d..(i + 1) * d].copy_from_slice(&src[id * d..(id + 1) * d]);
        }
        let needs = self.needs(&[table]);
        self.push_checked(
            "embedding_gather",
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Tensor::from_op_output(vec![ids.len(), d], data),
            needs,
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let mut s = 0.0f64;
        for &v in self.value(a).data() {
            s += v as f64;
        }
        let needs = self.needs(&[a]);
        self.push_checked("sum_all", Op::SumAll { a }, Tensor::scalar(s as f32), needs)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse accumulation from a scalar loss. Leaves that do not influence
    /// the loss get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let loss_t = self.value(loss);
        if !loss_t.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_t.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate(idx, &g, &mut grads);
            // Leaves keep their gradient; interior node grads are dropped
            // once propagated.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, idx: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let mut add_into = |target: NodeId, f: &mut dyn FnMut(&mut Vec<f32>)| {
            if !self.nodes[target.0].needs_grad {
                return;
            }
            let slot = &mut grads[target.0];
            if slot.is_none() {
                *slot = Some(vec![0.0f32; self.nodes[target.0].value.numel()]);
            }
            f(slot.as_mut().expect("just initialized"));
        };

        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = self.dims2(*a);
                let (_, n) = self.dims2(*b);
                let a_data = self.value(*a).data();
                let b_data = self.value(*b).data();
                if self.nodes[a.0].needs_grad {
                    let da = matmul_nt(g, b_data, m, n, k);
                    add_into(*a, &mut |acc| axpy(acc, &da));
                }
                if self.nodes[b.0].needs_grad {
                    let db = matmul_tn(a_data, g, m, k, n);
                    add_into(*b, &mut |acc| axpy(acc, &db));
                }
            }
            Op::Add { a, b } => {
                add_into(*a, &mut |acc| axpy(acc, g));
                add_into(*b, &mut |acc| axpy(acc, g));
            }
            Op::AddBias { a, bias } => {
                add_into(*a, &mut |acc| axpy(acc, g));
                let n = self.value(*bias).numel();
                add_into(*bias, &mut |acc| {
                    for row in g.chunks_exact(n) {
                        for (av, &gv) in acc.iter_mut().zip(row) {
                            *av += gv;
                        }
                    }
                });
            }
            Op::Mul { a, b } => {
                let a_data = self.value(*a).data();
                let b_data = self.value(*b).data();
                add_into(*a, &mut |acc| {
                    for ((av, &gv), &bv) in acc.iter_mut().zip(g).zip(b_data) {
                        *av += gv * bv;
                    }
                });
                add_into(*b, &mut |acc| {
                    for ((bv, &gv), &av) in acc.iter_mut().zip(g).zip(a_data) {
                        *bv += gv * av;
                    }
                });
            }
            Op::Scale { a, factor } => {
                let f = *factor;
                add_into(*a, &mut |acc| {
                    for (av, &gv) in acc.iter_mut().zip(g) {
                        *av += gv * f;
                    }
                });
            }
            Op::Gelu { a } => {
                let x = self.value(*a).data();
                add_into(*a, &mut |acc| {
                    for ((av, &gv), &xv) in acc.iter_mut().zip(g).zip(x) {
                        *av += gv * gelu_grad_scalar(xv);
                    }
                });
            }
            Op::Relu { a } => {
                let x = self.value(*a).data();
                add_into(*a, &mut |acc| {
                    for ((av, &gv), &xv) in acc.iter_mut().zip(g).zip(x) {
                        if xv > 0.0 {
                            *av += gv;
                        }
                    }
                });
            }
            Op::Transpose { a } => {
                let (m, n) = self.dims2(*a);
                // g has shape [n x m]
                add_into(*a, &mut |acc| {
                    for i in 0..m {
                        for j in 0..n {
                            acc[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape { a } => {
                add_into(*a, &mut |acc| axpy(acc, g));
            }
            Op::ConcatCols { parts } => {
                let m = self.value(parts[0]).rows();
                let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    add_into(p, &mut |acc| {
                        for i in 0..m {
                            for j in 0..w {
                                acc[i * w + j] += g[i * n + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols { a, start, len } => {
                let (m, n) = self.dims2(*a);
                let (start, len) = (*start, *len);
                add_into(*a, &mut |acc| {
                    for i in 0..m {
                        for j in 0..len {
                            acc[i * n + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::SoftmaxRows { a } => {
                let (m, n) = self.dims2(*a);
                let y = self.nodes[idx].value.data();
                add_into(*a, &mut |acc| {
                    for i in 0..m {
                        let y_row = &y[i * n..(i + 1) * n];
                        let g_row = &g[i * n..(i + 1) * n];
                        let mut dot = 0.0f64;
                        for (&yv, &gv) in y_row.iter().zip(g_row) {
                            dot += (yv * gv) as f64;
                        }
                        let acc_row = &mut acc[i * n..(i + 1) * n];
                        for ((av, &yv), &gv) in acc_row.iter_mut().zip(y_row).zip(g_row) {
                            *av += yv * (gv - dot as f32);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let (m, d) = self.dims2(*x);
                let src = self.value(*x).data();
                let gdata = self.value(*gain).data();
                // d(bias) = column sums of g
                add_into(*bias, &mut |acc| {
                    for row in g.chunks_exact(d) {
                        for (av, &gv) in acc.iter_mut().zip(row) {
                            *av += gv;
                        }
                    }
                });
                // d(gain) = sum over rows of g * xhat
                add_into(*gain, &mut |acc| {
                    for i in 0..m {
                        let row = &src[i * d..(i + 1) * d];
                        let (mean, inv_std) = row_stats(row, *eps);
                        let g_row = &g[i * d..(i + 1) * d];
                        for j in 0..d {
                            let xhat = ((row[j] as f64 - mean) * inv_std) as f32;
                            acc[j] += g_row[j] * xhat;
                        }
                    }
                });
                add_into(*x, &mut |acc| {
                    for i in 0..m {
                        let row = &src[i * d..(i + 1) * d];
                        let (mean, inv_std) = row_stats(row, *eps);
                        let g_row = &g[i * d..(i + 1) * d];
                        // h_j = g_j * gain_j ; dx = inv_std*(h - mean(h) - xhat*mean(h*xhat))
                        let mut h_mean = 0.0f64;
                        let mut hx_mean = 0.0f64;
                        for j in 0..d {
                            let h = (g_row[j] * gdata[j]) as f64;
                            let xhat = (row[j] as f64 - mean) * inv_std;
                            h_mean += h;
                            hx_mean += h * xhat;
                        }
                        h_mean /= d as f64;
                        hx_mean /= d as f64;
                        let acc_row = &mut acc[i * d..(i + 1) * d];
                        for j in 0..d {
                            let h = (g_row[j] * gdata[j]) as f64;
                            let xhat = (row[j] as f64 - mean) * inv_std;
                            acc_row[j] += (inv_std * (h - h_mean - xhat * hx_mean)) as f32;
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, targets } => {
                let (m, k) = self.dims2(*logits);
                let src = self.value(*logits).data();
                let g_scalar = g[0];
                add_into(*logits, &mut |acc| {
                    let probs = softmax_rows_raw(src, m, k);
                    for (i, &t) in targets.iter().enumerate() {
                        let p_row = &probs[i * k..(i + 1) * k];
                        let acc_row = &mut acc[i * k..(i + 1) * k];
                        for (j, (av, &pv)) in acc_row.iter_mut().zip(p_row).enumerate() {
                            let indicator = if j == t { 1.0 } else { 0.0 };
                            *av += g_scalar * (pv - indicator) / m as f32;
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let d = self.value(*table).cols();
                add_into(*table, &mut |acc| {
                    for (i, &id) in ids.iter().enumerate() {
                        let g_row = &g[i * d..(i + 1) * d];
                        let acc_row = &mut acc[id * d..(id + 1) * d];
                        for (av, &gv) in acc_row.iter_mut().zip(g_row) {
                            *av += gv;
                        }
                    }
                });
            }
            Op::SumAll { a } => {
                let gv = g[0];
                add_into(*a, &mut |acc| {
                    for av in acc.iter_mut() {
                        *av += gv;
                    }
                });
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn axpy(acc: &mut [f32], g: &[f32]) {
    for (av, &gv) in acc.iter_mut().zip(g) {
        *av += gv;
    }
}

fn row_stats(row: &[f32], eps: f32) -> (f64, f64) {
    let d = row.len() as f64;
    let mut mean = 0.0f64;
    for &v in row {
        mean += v as f64;
    }
    mean /= d;
    let mut var = 0.0f64;
    for &v in row {
        let c = v as f64 - mean;
        var += c * c;
    }
    var /= d;
    (mean, 1.0 / (var + eps as f64).sqrt())
}

/// Gradients produced by [`Graph::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node, or `None` if nothing flowed there.
    pub fn get(&self, id: NodeId) -> Option<&[f32]> {
        self.grads[id.index()].as_deref()
    }

    /// Gradient for a leaf, materializing zeros for unused leaves.
    pub fn for_leaf(&self, graph: &Graph, id: NodeId) -> Vec<f32> {
        match &self.grads[id.index()] {
            Some(g) => g.clone(),
            None => vec![0.0; graph.value(id).numel()],
        }
    }
}
