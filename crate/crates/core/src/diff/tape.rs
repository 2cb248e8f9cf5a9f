use super::Tensor;
use crate::error::{invalid, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Affine { x: Var, scale: f64 },
    MaxReduce { x: Var, argmax: Vec<usize> },
    Concat(Vec<Var>),
    ScaleAdd { x: Var, a: f64, y: Var, b: f64 },
    Gather { x: Var, index: Vec<usize> },
    WeightedGather { x: Var, index: Vec<usize>, weight: Vec<f64>, k: usize },
    Mul(Var, Var),
    Square(Var),
    Abs(Var),
    RowNorm(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
///
/// Nodes are appended in execution order, so the record is topologically
/// sorted by construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires one.
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
    /// Number of recorded nodes whose backward rule ran.
    pub visited: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.leaves.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> Error {
    Error::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" vs "),
    }
}

/// `c += a * b` for an `m x k` by `k x n` product with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], a_rs: usize, a_cs: usize, b: &[f64], b_rs: usize, b_cs: usize, c: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe views that stay inside `a`, `b` and `c`,
    // whose lengths are checked by every caller against the matrix shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn slot<'g>(tape: &Tape, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    if !tape.rg(v) {
        return None;
    }
    let n = tape.value(v).numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record an input. Gradients are tracked iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t.with_grad(), Op::Leaf, true)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if !t.is_matrix() {
            return Err(mismatch(op, &[t.shape()]));
        }
        Ok((t.rows(), t.cols()))
    }

    /// `a @ b`, or `a @ b^T` when `trans_b`.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (br, bc) = self.matrix_dims(b, "matmul")?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(mismatch("matmul", &[self.value(a).shape(), self.value(b).shape()]));
        }
        let mut out = vec![0.0; m * n];
        let (b_rs, b_cs) = if trans_b { (1, k) } else { (n, 1) };
        gemm_acc(m, k, n, self.value(a).data(), k, 1, self.value(b).data(), b_rs, b_cs, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul { a, b, trans_b }, rg))
    }

    /// Shared per-point linear map: `x @ w + b` with `w: cin x cout`, `b: cout`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin) = self.matrix_dims(x, "linear")?;
        let (wi, cout) = self.matrix_dims(w, "linear")?;
        if wi != cin || self.value(b).numel() != cout {
            return Err(mismatch(
                "linear",
                &[self.value(x).shape(), self.value(w).shape(), self.value(b).shape()],
            ));
        }
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(n * cout);
        for _ in 0..n {
            out.extend_from_slice(bias);
        }
        gemm_acc(n, cin, cout, self.value(x).data(), cin, 1, self.value(w).data(), cout, 1, &mut out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(n, cout, out), Op::Linear { x, w, b }, rg))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out = Tensor::raw(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect());
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    /// Hash of every branch taken by piecewise operations: relu and abs
    /// input signs and max-pool winners. Two evaluations with equal
    /// signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) | Op::Abs(x) => {
                    for &v in self.value(*x).data() {
                        (v > 0.0, v < 0.0).hash(&mut h);
                    }
                }
                Op::MaxReduce { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.map(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, f64::abs, Op::Abs(x))
    }

    /// Column-wise max over consecutive groups of `group` rows:
    /// `(m * group) x c -> m x c`. Ties keep the first maximal row.
    pub fn max_reduce(&mut self, x: Var, group: usize) -> Result<Var> {
        let (rows, c) = self.matrix_dims(x, "max_reduce")?;
        if group == 0 || rows % group != 0 {
            return Err(invalid(format!("max_reduce: {rows} rows not divisible into groups of {group}")));
        }
        let m = rows / group;
        let d = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; m * c];
        let mut argmax = vec![0usize; m * c];
        for g in 0..m {
            for r in g * group..(g + 1) * group {
                let row = &d[r * c..(r + 1) * c];
                for ch in 0..c {
                    if row[ch] > out[g * c + ch] {
                        out[g * c + ch] = row[ch];
                        argmax[g * c + ch] = r;
                    }
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(m, c, out), Op::MaxReduce { x, argmax }, rg))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.matrix_dims(parts[0], "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat")?;
            if r != rows {
                let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.value(p).shape()).collect();
                return Err(mismatch("concat", &shapes));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, total, out), Op::Concat(parts.to_vec()), rg))
    }

    /// `a * x + b * y` for equally shaped operands.
    pub fn scale_add(&mut self, a: f64, x: Var, b: f64, y: Var) -> Result<Var> {
        let (tx, ty) = (self.value(x), self.value(y));
        if tx.shape() != ty.shape() {
            return Err(mismatch("scale_add", &[tx.shape(), ty.shape()]));
        }
        let data = tx.data().iter().zip(ty.data()).map(|(u, v)| a * u + b * v).collect();
        let out = Tensor::raw(tx.shape().to_vec(), data);
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(out, Op::ScaleAdd { x, a, y, b }, rg))
    }

    /// Elementwise product of equally shaped operands.
    pub fn mul(&mut self, x: Var, y: Var) -> Result<Var> {
        let (tx, ty) = (self.value(x), self.value(y));
        if tx.shape() != ty.shape() {
            return Err(mismatch("mul", &[tx.shape(), ty.shape()]));
        }
        let data = tx.data().iter().zip(ty.data()).map(|(u, v)| u * v).collect();
        let out = Tensor::raw(tx.shape().to_vec(), data);
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(out, Op::Mul(x, y), rg))
    }

    /// Rows of `x` picked by `index` (repeats allowed).
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, c) = self.matrix_dims(x, "gather")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(invalid(format!("gather index {bad} out of range for {rows} rows")));
        }
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            out.extend_from_slice(&d[i * c..(i + 1) * c]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(index.len(), c, out),
            Op::Gather {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Output row `i` is `sum_t weight[i*k+t] * x[index[i*k+t]]`.
    pub fn weighted_gather(&mut self, x: Var, index: &[usize], weight: &[f64], k: usize) -> Result<Var> {
        let (rows, c) = self.matrix_dims(x, "weighted_gather")?;
        if k == 0 || index.len() != weight.len() || !index.len().is_multiple_of(k) {
            return Err(invalid("weighted_gather: index/weight lengths must match and divide by k"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(invalid(format!("weighted_gather index {bad} out of range for {rows} rows")));
        }
        let m = index.len() / k;
        let d = self.value(x).data();
        let mut out = vec![0.0; m * c];
        for i in 0..m {
            let o = &mut out[i * c..(i + 1) * c];
            for t in 0..k {
                let (j, w) = (index[i * k + t], weight[i * k + t]);
                for (oo, v) in o.iter_mut().zip(&d[j * c..(j + 1) * c]) {
                    *oo += w * v;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(m, c, out),
            Op::WeightedGather {
                x,
                index: index.to_vec(),
                weight: weight.to_vec(),
                k,
            },
            rg,
        ))
    }

    /// Euclidean norm of every row: `n x c -> n x 1`.
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.matrix_dims(x, "row_norm")?;
        let d = self.value(x).data();
        let out = (0..n)
            .map(|r| d[r * c..(r + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(n, 1, out), Op::RowNorm(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean of all elements.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum(x);
        self.affine(s, 1.0 / n, 0.0)
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut leaves: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut visited = 0;
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            visited += 1;
            self.step_back(node, &g, &mut grads);
            if let Op::Leaf = node.op {
                leaves[id] = Some(Tensor::raw(node.value.shape().to_vec(), g));
            }
        }
        Ok(Gradients { leaves, visited })
    }

    fn step_back(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = node.value.cols();
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(self, grads, *a) {
                    // dA = dC @ B^T
                    let (rs, cs) = if *trans_b { (k, 1) } else { (1, n) };
                    gemm_acc(m, n, k, g, n, 1, bd, rs, cs, ga);
                }
                if let Some(gb) = slot(self, grads, *b) {
                    if *trans_b {
                        // dB = dC^T @ A
                        gemm_acc(n, m, k, g, 1, n, ad, k, 1, gb);
                    } else {
                        // dB = A^T @ dC
                        gemm_acc(k, m, n, ad, 1, k, g, n, 1, gb);
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let (n, cin) = (self.value(*x).rows(), self.value(*x).cols());
                let cout = node.value.cols();
                if let Some(gx) = slot(self, grads, *x) {
                    gemm_acc(n, cout, cin, g, cout, 1, self.value(*w).data(), 1, cout, gx);
                }
                if let Some(gw) = slot(self, grads, *w) {
                    gemm_acc(cin, n, cout, self.value(*x).data(), 1, cin, g, cout, 1, gw);
                }
                if let Some(gb) = slot(self, grads, *b) {
                    for row in g.chunks(cout) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += scale * g[i];
                    }
                }
            }
            Op::Mul(x, y) => {
                let (xd, yd) = (self.value(*x).data(), self.value(*y).data());
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * yd[i];
                    }
                }
                if let Some(gy) = slot(self, grads, *y) {
                    for i in 0..g.len() {
                        gy[i] += g[i] * xd[i];
                    }
                }
            }
            Op::Square(x) => {
                let xd = self.value(*x).data();
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += 2.0 * xd[i] * g[i];
                    }
                }
            }
            Op::Abs(x) => {
                let xd = self.value(*x).data();
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        let s = if xd[i] > 0.0 {
                            1.0
                        } else if xd[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        gx[i] += s * g[i];
                    }
                }
            }
            Op::MaxReduce { x, argmax } => {
                let c = node.value.cols();
                if let Some(gx) = slot(self, grads, *x) {
                    for (i, &r) in argmax.iter().enumerate() {
                        gx[r * c + i % c] += g[i];
                    }
                }
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if let Some(gp) = slot(self, grads, p) {
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + off + c];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::ScaleAdd { x, a, y, b } => {
                if let Some(gx) = slot(self, grads, *x) {
                    for i in 0..g.len() {
                        gx[i] += a * g[i];
                    }
                }
                if let Some(gy) = slot(self, grads, *y) {
                    for i in 0..g.len() {
                        gy[i] += b * g[i];
                    }
                }
            }
            Op::Gather { x, index } => {
                let c = node.value.cols();
                if let Some(gx) = slot(self, grads, *x) {
                    for (r, &i) in index.iter().enumerate() {
                        for ch in 0..c {
                            gx[i * c + ch] += g[r * c + ch];
                        }
                    }
                }
            }
            Op::WeightedGather { x, index, weight, k } => {
                let c = node.value.cols();
                if let Some(gx) = slot(self, grads, *x) {
                    for (e, (&j, &w)) in index.iter().zip(weight).enumerate() {
                        let i = e / k;
                        for ch in 0..c {
                            gx[j * c + ch] += w * g[i * c + ch];
                        }
                    }
                }
            }
            Op::RowNorm(x) => {
                let xd = self.value(*x).data();
                let c = self.value(*x).cols();
                let norms = node.value.data();
                if let Some(gx) = slot(self, grads, *x) {
                    for (r, &nr) in norms.iter().enumerate() {
                        if nr > 0.0 {
                            for ch in 0..c {
                                gx[r * c + ch] += g[r] * xd[r * c + ch] / nr;
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(self, grads, *x) {
                    for v in gx.iter_mut() {
                        *v += g[0];
                    }
                }
            }
        }
    }
}
