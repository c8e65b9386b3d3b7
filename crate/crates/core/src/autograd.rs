//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! the tape through [`Tape::param`], which hands out one node per parameter
//! so that every use of a shared weight accumulates into the same gradient.

use std::collections::HashMap;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Self { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
fn gemm(alpha: f64, a: &Matrix, ta: bool, b: &Matrix, tb: bool, beta: f64, c: &mut Matrix) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the strides describe exactly the row-major buffers of `a`, `b`
    // and `c`, whose shapes were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(1.0, a, false, b, false, 0.0, &mut out);
    out
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Index of a parameter in a [`crate::model::ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    CrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        label: usize,
    },
    MaskedSquaredError {
        pred: Var,
        target: Matrix,
        rows: Vec<usize>,
        norm: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    grads: HashMap<ParamId, Matrix>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_map(self) -> HashMap<ParamId, Matrix> {
        self.grads
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Node for parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId, value: &Matrix) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Matrix::zeros(av.rows, bv.rows);
        gemm(1.0, av, false, bv, true, 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds the `1 x cols` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b).data.clone();
        let mut out = self.value(x).clone();
        assert_eq!(bias.len(), out.cols, "bias width mismatch");
        for r in 0..out.rows {
            for (o, bb) in out.row_mut(r).iter_mut().zip(&bias) {
                *o += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        self.push(out, Op::AddRow(x, b), ng)
    }

    /// Element-wise product of equally shaped nodes.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "element-wise shapes differ");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(av.rows, av.cols, data);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale(s);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`1 x cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(inv);
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat.data[r * cols + c] = h;
                out.data[r * cols + c] = h * g[c] + b[c];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv
            .data
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let out = Matrix::from_vec(xv.rows, xv.cols, data);
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let ng = self.ng(x);
        self.push(out, Op::SoftmaxRows(x), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols, "column slice out of range");
        let mut out = Matrix::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.ng(x);
        self.push(out, Op::SliceCols(x, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + pv.cols].copy_from_slice(pv.row(r));
            }
            offset += pv.cols;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&pv.data);
            rows += pv.rows;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    /// `out[i] = x[index[i]]`; rows may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(index.len(), xv.cols);
        for (i, &src) in index.iter().enumerate() {
            out.row_mut(i).copy_from_slice(xv.row(src));
        }
        let ng = self.ng(x);
        self.push(out, Op::GatherRows(x, index.to_vec()), ng)
    }

    /// Mean over rows, giving `1 x cols`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert!(xv.rows > 0, "mean over zero rows");
        let mut out = Matrix::zeros(1, xv.cols);
        for r in 0..xv.rows {
            for (o, v) in out.data.iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        out.scale(1.0 / xv.rows as f64);
        let ng = self.ng(x);
        self.push(out, Op::MeanRows(x), ng)
    }

    /// `-log softmax(logits)[label]` for a `1 x K` logit row.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows, 1, "cross_entropy takes one logit row");
        let max = lv.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = lv.data.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let loss = lse - lv.data[label];
        let probs = lv.data.iter().map(|v| (v - lse).exp()).collect();
        let ng = self.ng(logits);
        self.push(
            Matrix::filled(1, 1, loss),
            Op::CrossEntropy {
                logits,
                probs,
                label,
            },
            ng,
        )
    }

    /// `sum_{r in rows} ||pred[r] - target[r]||^2 / norm`.
    pub fn masked_squared_error(
        &mut self,
        pred: Var,
        target: Matrix,
        rows: &[usize],
        norm: f64,
    ) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "prediction/target shape mismatch");
        let mut acc = 0.0;
        for &r in rows {
            for (p, t) in pv.row(r).iter().zip(target.row(r)) {
                acc += (p - t) * (p - t);
            }
        }
        let ng = self.ng(pred);
        self.push(
            Matrix::filled(1, 1, acc / norm),
            Op::MaskedSquaredError {
                pred,
                target,
                rows: rows.to_vec(),
                norm,
            },
            ng,
        )
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> ParamGrads {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = ParamGrads::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&delta),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    out.grads.insert(*id, g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        let mut ga = Matrix::zeros(av.rows, av.cols);
                        gemm(1.0, &g, false, bv, true, 0.0, &mut ga);
                        send(*a, ga, &mut grads);
                    }
                    if self.ng(*b) {
                        let mut gb = Matrix::zeros(bv.rows, bv.cols);
                        gemm(1.0, av, true, &g, false, 0.0, &mut gb);
                        send(*b, gb, &mut grads);
                    }
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        let mut ga = Matrix::zeros(av.rows, av.cols);
                        gemm(1.0, &g, false, bv, false, 0.0, &mut ga);
                        send(*a, ga, &mut grads);
                    }
                    if self.ng(*b) {
                        let mut gb = Matrix::zeros(bv.rows, bv.cols);
                        gemm(1.0, &g, true, av, false, 0.0, &mut gb);
                        send(*b, gb, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        send(*b, g.clone(), &mut grads);
                    }
                    send(*a, g, &mut grads);
                }
                Op::AddRow(x, b) => {
                    if self.ng(*b) {
                        let mut gb = Matrix::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        send(*b, gb, &mut grads);
                    }
                    send(*x, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        let d = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                        send(*a, Matrix::from_vec(g.rows, g.cols, d), &mut grads);
                    }
                    if self.ng(*b) {
                        let d = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                        send(*b, Matrix::from_vec(g.rows, g.cols, d), &mut grads);
                    }
                }
                Op::Scale(x, s) => {
                    let mut gx = g;
                    gx.scale(*s);
                    send(*x, gx, &mut grads);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gam = &self.value(*gamma).data;
                    let (rows, cols) = g.shape();
                    if self.ng(*gamma) || self.ng(*beta) {
                        let mut gg = Matrix::zeros(1, cols);
                        let mut gb = Matrix::zeros(1, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                let gv = g.data[r * cols + c];
                                gg.data[c] += gv * xhat.data[r * cols + c];
                                gb.data[c] += gv;
                            }
                        }
                        send(*gamma, gg, &mut grads);
                        send(*beta, gb, &mut grads);
                    }
                    if self.ng(*x) {
                        let mut gx = Matrix::zeros(rows, cols);
                        let n = cols as f64;
                        for r in 0..rows {
                            let mut mean_g = 0.0;
                            let mut mean_gx = 0.0;
                            for c in 0..cols {
                                let gh = g.data[r * cols + c] * gam[c];
                                mean_g += gh;
                                mean_gx += gh * xhat.data[r * cols + c];
                            }
                            mean_g /= n;
                            mean_gx /= n;
                            for c in 0..cols {
                                let gh = g.data[r * cols + c] * gam[c];
                                gx.data[r * cols + c] =
                                    rstd[r] * (gh - mean_g - xhat.data[r * cols + c] * mean_gx);
                            }
                        }
                        send(*x, gx, &mut grads);
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let d = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(gv, &v)| {
                            let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                            let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                            gv * (0.5 * (1.0 + t) + 0.5 * v * dt)
                        })
                        .collect();
                    send(*x, Matrix::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yy, gg)) in gx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yy * (gg - dot);
                        }
                    }
                    send(*x, gx, &mut grads);
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(*x, gx, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        if self.ng(p) {
                            let mut gp = Matrix::zeros(g.rows, pc);
                            for r in 0..g.rows {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + pc]);
                            }
                            send(p, gp, &mut grads);
                        }
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pr = self.value(p).rows;
                        if self.ng(p) {
                            let d = g.data[offset * g.cols..(offset + pr) * g.cols].to_vec();
                            send(p, Matrix::from_vec(pr, g.cols, d), &mut grads);
                        }
                        offset += pr;
                    }
                }
                Op::GatherRows(x, index) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows, xv.cols);
                    for (i, &src) in index.iter().enumerate() {
                        for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    send(*x, gx, &mut grads);
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let inv = 1.0 / xv.rows as f64;
                    let mut gx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(&g.data) {
                            *o = v * inv;
                        }
                    }
                    send(*x, gx, &mut grads);
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    label,
                } => {
                    let s = g.data[0];
                    let d = probs
                        .iter()
                        .enumerate()
                        .map(|(k, p)| s * (p - if k == *label { 1.0 } else { 0.0 }))
                        .collect();
                    send(*logits, Matrix::from_vec(1, probs.len(), d), &mut grads);
                }
                Op::MaskedSquaredError {
                    pred,
                    target,
                    rows,
                    norm,
                } => {
                    let s = 2.0 * g.data[0] / norm;
                    let pv = self.value(*pred);
                    let mut gp = Matrix::zeros(pv.rows, pv.cols);
                    for &r in rows {
                        for ((o, p), t) in gp.row_mut(r).iter_mut().zip(pv.row(r)).zip(target.row(r)) {
                            *o += s * (p - t);
                        }
                    }
                    send(*pred, gp, &mut grads);
                }
            }
        }
        out
    }
}
