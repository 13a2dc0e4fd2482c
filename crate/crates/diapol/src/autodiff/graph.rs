//! Reverse-mode differentiation over an append-only op tape.
//!
//! A [`Graph`] records every op in insertion order together with its computed
//! value. [`Graph::backward`] walks the tape in exact reverse insertion order
//! and accumulates gradients by addition, so a given graph always produces
//! bit-identical gradients. One graph per training step; tensors are plain
//! values and graphs are cheap to drop.

use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in one specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// B x n plus a 1 x n row broadcast over rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols { input: Var, start: usize },
    Reshape(Var),
    /// Row lookup into a table; gradient scatter-adds into the table.
    Embed { table: Var, ids: Vec<usize> },
    /// out[b] = input[b, ids[b]]; gradient scatters back.
    Pick { input: Var, ids: Vec<usize> },
    /// Forward: per-row one-hot argmax. Backward: identity.
    StraightThroughRows(Var),
    /// Mean binary cross-entropy between logits and constant 0/1 targets.
    BceWithLogits { logits: Var, targets: Tensor },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients from a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, zeros if the backward pass never
    /// reached it.
    pub fn get(&self, graph: &Graph, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(graph.nodes[v.0].value.shape()),
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        let t = self.value(v);
        if t.is_scalar() {
            Ok(t.data()[0])
        } else {
            Err(Error::ShapeMismatch {
                op: "scalar_value",
                detail: format!("expected scalar, got shape {:?}", t.shape()),
            })
        }
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        value.check_finite(name)?;
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Insert a tensor that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Constant, value });
        Var(self.nodes.len() - 1)
    }

    /// Insert a trainable parameter leaf from a store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node { op: Op::Param(id), value: store.get(id).clone() });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        let da = ta.data();
        let db = tb.data();
        for i in 0..m {
            for kk in 0..k {
                let aik = da[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &db[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        self.push(Op::Matmul(a, b), Tensor::new(vec![m, n], out)?, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.at(i, j);
            }
        }
        self.push(Op::Transpose(a), Tensor::new(vec![n, m], out)?, "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push(Op::Add(a, b), out, "add")
    }

    /// `a` is B x n, `bias` is 1 x n; the row is added to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rows() != 1 || ta.cols() != tb.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let n = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % n])
            .collect();
        self.push(Op::AddRow(a, bias), Tensor::new(ta.shape().to_vec(), data)?, "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("sub", self.value(a), self.value(b), |x, y| x - y)?;
        self.push(Op::Sub(a, b), out, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("div", self.value(a), self.value(b), |x, y| x / y)?;
        self.push(Op::Div(a, b), out, "div")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        self.push(Op::Scale(a, c), out, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + c);
        self.push(Op::AddScalar(a), out, "add_scalar")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out, "log")
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), out, "sqrt")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out, "tanh")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = softmax_rows(self.value(a));
        self.push(Op::SoftmaxRows(a), out, "softmax_rows")
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.cols();
        let mut data = Vec::with_capacity(t.numel());
        for r in 0..t.rows() {
            let row = &t.data()[r * n..(r + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            data.extend(row.iter().map(|v| v - lse));
        }
        self.push(Op::LogSoftmaxRows(a), Tensor::new(t.shape().to_vec(), data)?, "log_softmax_rows")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s), "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Op::MeanAll(a), Tensor::scalar(s), "mean_all")
    }

    /// Row-wise sum: B x n -> B x 1.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.cols();
        let data = (0..t.rows())
            .map(|r| t.data()[r * n..(r + 1) * n].iter().sum())
            .collect();
        self.push(Op::SumCols(a), Tensor::new(vec![t.rows(), 1], data)?, "sum_cols")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let (na, nb) = (ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(ta.numel() + tb.numel());
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.data()[r * na..(r + 1) * na]);
            data.extend_from_slice(&tb.data()[r * nb..(r + 1) * nb]);
        }
        self.push(Op::ConcatCols(a, b), Tensor::new(vec![ta.rows(), na + nb], data)?, "concat_cols")
    }

    /// Columns [start, end) of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let n = t.cols();
        if start >= end || end > n {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                detail: format!("range {start}..{end} out of 0..{n}"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(t.rows() * w);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.data()[r * n + start..r * n + end]);
        }
        self.push(
            Op::SliceCols { input: a, start },
            Tensor::new(vec![t.rows(), w], data)?,
            "slice_cols",
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!("cannot view {:?} as {:?}", t.shape(), shape),
            });
        }
        let out = Tensor::new(shape.to_vec(), t.data().to_vec())?;
        self.push(Op::Reshape(a), out, "reshape")
    }

    /// Look up one table row per id: table is V x E, result is len(ids) x E.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, e) = (t.rows(), t.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::ShapeMismatch {
                op: "embed",
                detail: format!("id {bad} out of table rows {v}"),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(&t.data()[i * e..(i + 1) * e]);
        }
        self.push(
            Op::Embed { table, ids: ids.to_vec() },
            Tensor::new(vec![ids.len(), e], data)?,
            "embed",
        )
    }

    /// One element per row: out[b, 0] = a[b, ids[b]].
    pub fn pick(&mut self, a: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if ids.len() != t.rows() {
            return Err(Error::ShapeMismatch {
                op: "pick",
                detail: format!("{} ids for {} rows", ids.len(), t.rows()),
            });
        }
        let n = t.cols();
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeMismatch {
                op: "pick",
                detail: format!("column {bad} out of {n}"),
            });
        }
        let data = ids.iter().enumerate().map(|(r, &c)| t.at(r, c)).collect();
        self.push(Op::Pick { input: a, ids: ids.to_vec() }, Tensor::new(vec![t.rows(), 1], data)?, "pick")
    }

    /// Forward: one-hot of the per-row argmax (ties broken toward the lowest
    /// index). Backward: gradient passes through unchanged, as if the output
    /// were the input.
    pub fn straight_through_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.cols();
        let mut data = vec![0.0; t.numel()];
        for r in 0..t.rows() {
            let row = &t.data()[r * n..(r + 1) * n];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            data[r * n + best] = 1.0;
        }
        self.push(Op::StraightThroughRows(a), Tensor::new(t.shape().to_vec(), data)?, "straight_through")
    }

    /// Mean element-wise binary cross-entropy between `logits` and constant
    /// 0/1 `targets`, computed in the numerically stable logits form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Tensor) -> Result<Var> {
        let t = self.value(logits);
        if !t.same_shape(&targets) {
            return Err(shape_err("bce_with_logits", t, &targets));
        }
        let n = t.numel() as f64;
        let mut total = 0.0;
        for (&x, &y) in t.data().iter().zip(targets.data()) {
            // max(x,0) - x*y + ln(1 + e^-|x|)
            total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        }
        self.push(Op::BceWithLogits { logits, targets }, Tensor::scalar(total / n), "bce_with_logits")
    }

    /// Gumbel-Softmax relaxation: softmax((log_p + noise) / tau) per row.
    /// Differentiable w.r.t. `log_p`; `noise` is a constant tensor so tests
    /// can inject fixed values.
    pub fn gumbel_softmax(&mut self, log_p: Var, tau: f64, noise: Var) -> Result<Var> {
        if tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("gumbel_softmax needs tau > 0, got {tau}")));
        }
        let perturbed = self.add(log_p, noise)?;
        let scaled = self.scale(perturbed, 1.0 / tau)?;
        self.softmax_rows(scaled)
    }

    /// Gradient of a scalar `loss` w.r.t. every node, by reverse traversal of
    /// the tape. Leaves the backward pass never reaches report zeros via
    /// [`Gradients::get`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_t = self.value(loss);
        if !loss_t.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", loss_t.shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(loss_t.shape().to_vec(), vec![1.0])?);

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate_inputs(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients for every `Param` leaf, summed per parameter id.
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> =
            store.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = &grads.grads[idx] {
                    let acc = out[id.index()].data_mut();
                    for (a, b) in acc.iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
            }
        }
        out
    }

    fn accumulate_inputs(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Matmul(a, b) => {
                // dA = g . B^T ; dB = A^T . g
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g.at(i, j);
                        if gij == 0.0 {
                            continue;
                        }
                        for kk in 0..k {
                            da[i * k + kk] += gij * tb.at(kk, j);
                        }
                    }
                }
                let mut db = vec![0.0; k * n];
                for kk in 0..k {
                    for i in 0..m {
                        let aik = ta.at(i, kk);
                        if aik == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[kk * n + j] += aik * g.at(i, j);
                        }
                    }
                }
                add_grad(grads, *a, Tensor::new(vec![m, k], da)?);
                add_grad(grads, *b, Tensor::new(vec![k, n], db)?);
            }
            Op::Transpose(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g.at(j, i);
                    }
                }
                add_grad(grads, *a, Tensor::new(vec![m, n], da)?);
            }
            Op::Add(a, b) => {
                add_grad(grads, *a, g.clone());
                add_grad(grads, *b, g.clone());
            }
            Op::AddRow(a, bias) => {
                add_grad(grads, *a, g.clone());
                let n = val(*bias).cols();
                let mut db = vec![0.0; n];
                for (i, &v) in g.data().iter().enumerate() {
                    db[i % n] += v;
                }
                add_grad(grads, *bias, Tensor::new(vec![1, n], db)?);
            }
            Op::Sub(a, b) => {
                add_grad(grads, *a, g.clone());
                add_grad(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                add_grad(grads, *a, zip_map(g, val(*b), |x, y| x * y));
                add_grad(grads, *b, zip_map(g, val(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                add_grad(grads, *a, zip_map(g, tb, |x, y| x / y));
                let db = Tensor::new(
                    tb.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(&gv, (&av, &bv))| -gv * av / (bv * bv))
                        .collect(),
                )?;
                add_grad(grads, *b, db);
            }
            Op::Scale(a, c) => add_grad(grads, *a, g.map(|v| v * c)),
            Op::AddScalar(a) => add_grad(grads, *a, g.clone()),
            Op::Exp(a) => add_grad(grads, *a, zip_map(g, &node.value, |x, y| x * y)),
            Op::Log(a) => add_grad(grads, *a, zip_map(g, val(*a), |x, y| x / y)),
            Op::Sqrt(a) => add_grad(grads, *a, zip_map(g, &node.value, |x, y| 0.5 * x / y)),
            Op::Sigmoid(a) => {
                add_grad(grads, *a, zip_map(g, &node.value, |x, y| x * y * (1.0 - y)));
            }
            Op::Tanh(a) => add_grad(grads, *a, zip_map(g, &node.value, |x, y| x * (1.0 - y * y))),
            Op::SoftmaxRows(a) => {
                // dx = y * (g - <g, y>) per row
                let y = &node.value;
                let n = y.cols();
                let mut da = vec![0.0; y.numel()];
                for r in 0..y.rows() {
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        da[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_grad(grads, *a, Tensor::new(y.shape().to_vec(), da)?);
            }
            Op::LogSoftmaxRows(a) => {
                // dx = g - softmax(x) * rowsum(g)
                let y = &node.value; // log probs
                let n = y.cols();
                let mut da = vec![0.0; y.numel()];
                for r in 0..y.rows() {
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..n {
                        da[r * n + j] = gr[j] - yr[j].exp() * gsum;
                    }
                }
                add_grad(grads, *a, Tensor::new(y.shape().to_vec(), da)?);
            }
            Op::SumAll(a) => {
                let s = g.data()[0];
                add_grad(grads, *a, Tensor::full(val(*a).shape(), s));
            }
            Op::MeanAll(a) => {
                let t = val(*a);
                let s = g.data()[0] / t.numel() as f64;
                add_grad(grads, *a, Tensor::full(t.shape(), s));
            }
            Op::SumCols(a) => {
                let t = val(*a);
                let n = t.cols();
                let mut da = vec![0.0; t.numel()];
                for r in 0..t.rows() {
                    for j in 0..n {
                        da[r * n + j] = g.at(r, 0);
                    }
                }
                add_grad(grads, *a, Tensor::new(t.shape().to_vec(), da)?);
            }
            Op::ConcatCols(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (na, nb) = (ta.cols(), tb.cols());
                let mut da = vec![0.0; ta.numel()];
                let mut db = vec![0.0; tb.numel()];
                for r in 0..ta.rows() {
                    let grow = &g.data()[r * (na + nb)..(r + 1) * (na + nb)];
                    da[r * na..(r + 1) * na].copy_from_slice(&grow[..na]);
                    db[r * nb..(r + 1) * nb].copy_from_slice(&grow[na..]);
                }
                add_grad(grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                add_grad(grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
            }
            Op::SliceCols { input, start } => {
                let t = val(*input);
                let n = t.cols();
                let w = g.cols();
                let mut da = vec![0.0; t.numel()];
                for r in 0..t.rows() {
                    for j in 0..w {
                        da[r * n + start + j] = g.at(r, j);
                    }
                }
                add_grad(grads, *input, Tensor::new(t.shape().to_vec(), da)?);
            }
            Op::Reshape(a) => {
                let t = val(*a);
                add_grad(grads, *a, Tensor::new(t.shape().to_vec(), g.data().to_vec())?);
            }
            Op::Embed { table, ids } => {
                let t = val(*table);
                let e = t.cols();
                let mut dt = vec![0.0; t.numel()];
                for (b, &i) in ids.iter().enumerate() {
                    for j in 0..e {
                        dt[i * e + j] += g.at(b, j);
                    }
                }
                add_grad(grads, *table, Tensor::new(t.shape().to_vec(), dt)?);
            }
            Op::Pick { input, ids } => {
                let t = val(*input);
                let n = t.cols();
                let mut da = vec![0.0; t.numel()];
                for (r, &c) in ids.iter().enumerate() {
                    da[r * n + c] += g.at(r, 0);
                }
                add_grad(grads, *input, Tensor::new(t.shape().to_vec(), da)?);
            }
            Op::StraightThroughRows(a) => add_grad(grads, *a, g.clone()),
            Op::BceWithLogits { logits, targets } => {
                let x = val(*logits);
                let n = x.numel() as f64;
                let s = g.data()[0] / n;
                let dx = Tensor::new(
                    x.shape().to_vec(),
                    x.data()
                        .iter()
                        .zip(targets.data())
                        .map(|(&xv, &tv)| s * (sigmoid(xv) - tv))
                        .collect(),
                )?;
                add_grad(grads, *logits, dx);
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(t: &Tensor) -> Tensor {
    let n = t.cols();
    let mut data = Vec::with_capacity(t.numel());
    for r in 0..t.rows() {
        let row = &t.data()[r * n..(r + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        data.extend(exps.iter().map(|v| v / sum));
    }
    Tensor::new(t.shape().to_vec(), data).expect("softmax preserves shape")
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) }
}

fn elementwise(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(shape_err(op, a, b));
    }
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("zip_map preserves shape")
}

fn add_grad(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}
