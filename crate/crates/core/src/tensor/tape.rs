//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and `backward` walks it in reverse. Gradients of nodes
//! with several consumers accumulate additively.

use super::{Real, Tensor};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Arc<Tensor<T>>),
    /// `[m, n] * [m, 1]` with the column constant.
    MulRowsConst(usize, Arc<Tensor<T>>),
    Scale(usize, T),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    LogSoftmax(usize, usize),
    Softmax(usize, usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    ConcatRows(Vec<usize>),
    Reshape(usize),
    SumAll(usize),
    SumRows(usize),
    SumCols(usize),
    Mix(usize, usize),
    Gather(usize, Vec<usize>),
    Unfold1d { x: usize, len: usize, channels: usize, width: usize },
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records one forward pass.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, usize)>,
    /// Values produced by `stop_gradient`, in call order.
    stopped: Vec<Arc<Tensor<T>>>,
    /// When set, `stop_gradient` returns these instead of the live values.
    frozen: Option<Vec<Arc<Tensor<T>>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients by parameter name.
pub type Gradients<T> = BTreeMap<String, Tensor<T>>;

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(1024), params: Vec::new(), stopped: Vec::new(), frozen: None }
    }

    /// A tape whose `stop_gradient` calls replay `frozen` in order. Used to
    /// evaluate the surrogate objective at perturbed parameters.
    pub fn with_frozen(frozen: Vec<Arc<Tensor<T>>>) -> Self {
        Tape { frozen: Some(frozen), ..Self::new() }
    }

    /// Values returned by `stop_gradient` so far.
    pub fn stopped_values(&self) -> &[Arc<Tensor<T>>] {
        &self.stopped
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[usize]) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node { value: Arc::new(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value: Arc::new(value), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn constant_shared(&mut self, value: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Named trainable leaf. Registering the same name twice returns the
    /// first node.
    pub fn param(&mut self, name: &str, value: Arc<Tensor<T>>) -> Var {
        if let Some((_, i)) = self.params.iter().find(|(n, _)| n == name) {
            return Var(*i);
        }
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        let i = self.nodes.len() - 1;
        self.params.push((name.to_string(), i));
        Var(i)
    }

    /// Same value as `v`, cut off from the gradient path.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let live = self.nodes[v.0].value.clone();
        let value = match &self.frozen {
            Some(f) => f.get(self.stopped.len()).cloned().unwrap_or(live),
            None => live,
        };
        self.stopped.push(value.clone());
        self.constant_shared(value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    /// Adds a `1 x n` bias to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Shape(format!("bias {:?} for input {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        let n = out.cols();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += *b;
            }
        }
        Ok(self.push(out, Op::AddBias(x.0, bias.0), &[x.0, bias.0]))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.check_same(a, b, "elementwise")?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, op, &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        if self.shape(a) != c.shape() {
            return Err(Error::Shape(format!("mul_const {:?} vs {:?}", self.shape(a), c.shape())));
        }
        let data = self.value(a).data().iter().zip(c.data()).map(|(&x, &y)| x * y).collect();
        let [r, k] = self.shape(a);
        let out = Tensor::from_vec(r, k, data)?;
        Ok(self.push(out, Op::MulConst(a.0, Arc::new(c)), &[a.0]))
    }

    /// Scales row `i` of `a` by the constant `c[i]` (`c` is `rows x 1`).
    pub fn mul_rows_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        let [r, k] = self.shape(a);
        if c.shape() != [r, 1] {
            return Err(Error::Shape(format!("mul_rows_const {:?} vs {:?}", [r, k], c.shape())));
        }
        let mut out = self.value(a).clone();
        for (i, row) in out.data_mut().chunks_mut(k.max(1)).enumerate() {
            let s = c.data()[i];
            row.iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::MulRowsConst(a.0, Arc::new(c)), &[a.0]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a.0, s), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v + s);
        self.push(out, Op::AddScalar(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > T::ZERO { v } else { T::ZERO });
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        self.push(out, Op::Tanh(a.0), &[a.0])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::exp);
        self.push(out, Op::Exp(a.0), &[a.0])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::ln);
        self.push(out, Op::Log(a.0), &[a.0])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a.0), &[a.0])
    }

    /// Log-softmax over consecutive groups of `group` columns in each row.
    pub fn log_softmax(&mut self, a: Var, group: usize) -> Result<Var> {
        let out = group_apply(self.value(a), group, log_softmax_slice)?;
        Ok(self.push(out, Op::LogSoftmax(a.0, group), &[a.0]))
    }

    /// Softmax over consecutive groups of `group` columns in each row.
    pub fn softmax(&mut self, a: Var, group: usize) -> Result<Var> {
        let out = group_apply(self.value(a), group, softmax_slice)?;
        Ok(self.push(out, Op::Softmax(a.0, group), &[a.0]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::Shape(format!("slice {start}..{} of {} columns", start + len, av.cols())));
        }
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let out = Tensor::from_vec(av.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a.0, start), &[a.0]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        if parts.iter().any(|p| self.shape(*p)[0] != rows) {
            return Err(Error::Shape("concat_cols with mismatched row counts".into()));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(out, Op::ConcatCols(idx.clone()), &idx))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.rows() {
            return Err(Error::Shape(format!("slice rows {start}..{} of {}", start + len, av.rows())));
        }
        let c = av.cols();
        let out = Tensor::from_vec(len, c, av.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a.0, start), &[a.0]))
    }

    /// Stacks parts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0])[1];
        if parts.iter().any(|p| self.shape(*p)[1] != cols) {
            return Err(Error::Shape("concat_rows with mismatched column counts".into()));
        }
        let rows: usize = parts.iter().map(|p| self.shape(*p)[0]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(self.value(*p).data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(out, Op::ConcatRows(idx.clone()), &idx))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshaped(rows, cols)?;
        Ok(self.push(out, Op::Reshape(a.0), &[a.0]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::ZERO, |acc, &v| acc + v);
        self.push(Tensor::scalar(s), Op::SumAll(a.0), &[a.0])
    }

    /// Row sums: `[m, n] -> [m, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().fold(T::ZERO, |acc, &v| acc + v)).collect();
        let out = Tensor::from_vec(av.rows(), 1, data).expect("row count");
        self.push(out, Op::SumRows(a.0), &[a.0])
    }

    /// Column sums: `[m, n] -> [1, n]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(1, av.cols());
        for r in 0..av.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(av.row(r)) {
                *o += *v;
            }
        }
        self.push(out, Op::SumCols(a.0), &[a.0])
    }

    /// Mixture `out[b, a] = sum_z w[b, z] * comps[b, z * A + a]` with
    /// `w: [m, K]` and `comps: [m, K * A]`.
    pub fn mix(&mut self, weights: Var, comps: Var) -> Result<Var> {
        let (wv, cv) = (self.value(weights), self.value(comps));
        let (m, k) = (wv.rows(), wv.cols());
        if cv.rows() != m || k == 0 || cv.cols() % k != 0 {
            return Err(Error::Shape(format!("mix weights {:?} comps {:?}", wv.shape(), cv.shape())));
        }
        let a = cv.cols() / k;
        let mut out = Tensor::zeros(m, a);
        for b in 0..m {
            let (w, c) = (wv.row(b), cv.row(b));
            let o = &mut out.data_mut()[b * a..(b + 1) * a];
            for z in 0..k {
                for j in 0..a {
                    o[j] += w[z] * c[z * a + j];
                }
            }
        }
        Ok(self.push(out, Op::Mix(weights.0, comps.0), &[weights.0, comps.0]))
    }

    /// Picks column `idx[r]` from each row: `[m, n] -> [m, 1]`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows() || idx.iter().any(|&i| i >= av.cols()) {
            return Err(Error::Shape("gather index out of range".into()));
        }
        let data = idx.iter().enumerate().map(|(r, &c)| av.at(r, c)).collect();
        let out = Tensor::from_vec(av.rows(), 1, data)?;
        Ok(self.push(out, Op::Gather(a.0, idx), &[a.0]))
    }

    /// Sliding windows over a sequence stored position-major in each row:
    /// `[m, len * channels] -> [m * (len - width + 1), width * channels]`.
    pub fn unfold1d(&mut self, x: Var, len: usize, channels: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() != len * channels || width == 0 || width > len {
            return Err(Error::Shape(format!(
                "unfold1d of {:?} as length {len} x {channels} channels with width {width}",
                xv.shape()
            )));
        }
        let out_len = len - width + 1;
        let span = width * channels;
        let mut data = Vec::with_capacity(xv.rows() * out_len * span);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            for p in 0..out_len {
                data.extend_from_slice(&row[p * channels..p * channels + span]);
            }
        }
        let out = Tensor::from_vec(xv.rows() * out_len, span, data)?;
        Ok(self.push(out, Op::Unfold1d { x: x.0, len, channels, width }, &[x.0]))
    }

    /// Reverse pass from a scalar `loss`. Every registered parameter gets an
    /// entry; parameters off the loss path get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Usage(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::ONE));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        let mut out = Gradients::new();
        for (name, i) in &self.params {
            let g = match grads.get(*i).and_then(|g| g.clone()) {
                Some(g) => g,
                None => {
                    let v = &self.nodes[*i].value;
                    Tensor::zeros(v.rows(), v.cols())
                }
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |j: usize| -> &Tensor<T> { &self.nodes[j].value };
        let wants = |j: usize| self.nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if wants(*a) {
                    // dA = G B^T
                    let mut da = Tensor::zeros(m, k);
                    T::gemm(m, n, k, T::ONE, g.data(), n as isize, 1, bv.data(), 1, n as isize, T::ZERO, da.data_mut());
                    accumulate(grads, *a, da);
                }
                if wants(*b) {
                    // dB = A^T G
                    let mut db = Tensor::zeros(k, n);
                    T::gemm(k, m, n, T::ONE, av.data(), 1, k as isize, g.data(), n as isize, 1, T::ZERO, db.data_mut());
                    accumulate(grads, *b, db);
                }
            }
            Op::AddBias(x, b) => {
                if wants(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if wants(*b) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += *v;
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, zip(g, val(*b), |gv, bv| gv * bv));
                }
                if wants(*b) {
                    accumulate(grads, *b, zip(g, val(*a), |gv, av| gv * av));
                }
            }
            Op::MulConst(a, c) => accumulate(grads, *a, zip(g, c, |gv, cv| gv * cv)),
            Op::MulRowsConst(a, c) => {
                let mut d = g.clone();
                let k = d.cols().max(1);
                for (r, row) in d.data_mut().chunks_mut(k).enumerate() {
                    let s = c.data()[r];
                    row.iter_mut().for_each(|v| *v *= s);
                }
                accumulate(grads, *a, d);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|v| v * *s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Relu(a) => accumulate(grads, *a, zip(g, val(*a), |gv, x| if x > T::ZERO { gv } else { T::ZERO })),
            Op::Sigmoid(a) => accumulate(grads, *a, zip(g, y, |gv, s| gv * s * (T::ONE - s))),
            Op::Tanh(a) => accumulate(grads, *a, zip(g, y, |gv, t| gv * (T::ONE - t * t))),
            Op::Exp(a) => accumulate(grads, *a, zip(g, y, |gv, e| gv * e)),
            Op::Log(a) => accumulate(grads, *a, zip(g, val(*a), |gv, x| gv / x)),
            Op::Square(a) => accumulate(grads, *a, zip(g, val(*a), |gv, x| gv * (x + x))),
            Op::LogSoftmax(a, group) => {
                // dx = g - softmax * sum(g) per group
                let mut d = g.clone();
                for (dg, yg) in d.data_mut().chunks_mut(*group).zip(y.data().chunks(*group)) {
                    let s = dg.iter().fold(T::ZERO, |acc, &v| acc + v);
                    for (dv, lv) in dg.iter_mut().zip(yg) {
                        *dv -= lv.exp() * s;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Softmax(a, group) => {
                // dx = y * (g - sum(g * y)) per group
                let mut d = g.clone();
                for (dg, yg) in d.data_mut().chunks_mut(*group).zip(y.data().chunks(*group)) {
                    let s = dg.iter().zip(yg).fold(T::ZERO, |acc, (&gv, &yv)| acc + gv * yv);
                    for (dv, &yv) in dg.iter_mut().zip(yg) {
                        *dv = yv * (*dv - s);
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut d = Tensor::zeros(av.rows(), av.cols());
                let len = g.cols();
                let cols = av.cols();
                for r in 0..g.rows() {
                    d.data_mut()[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        let mut d = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.data_mut()[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, d);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    if wants(p) {
                        let [r, c] = val(p).shape();
                        let d = Tensor::from_vec(r, c, g.data()[offset..offset + n].to_vec()).expect("same size");
                        accumulate(grads, p, d);
                    }
                    offset += n;
                }
            }
            Op::Reshape(a) => {
                let [r, c] = val(*a).shape();
                accumulate(grads, *a, g.clone().reshaped(r, c).expect("same size"));
            }
            Op::SumAll(a) => {
                let [r, c] = val(*a).shape();
                accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::SumRows(a) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (i, row) in d.data_mut().chunks_mut(c.max(1)).enumerate() {
                    let gv = g.data()[i];
                    row.iter_mut().for_each(|v| *v = gv);
                }
                accumulate(grads, *a, d);
            }
            Op::SumCols(a) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for row in d.data_mut().chunks_mut(c.max(1)) {
                    row.copy_from_slice(g.data());
                }
                accumulate(grads, *a, d);
            }
            Op::Mix(w, comps) => {
                let (wv, cv) = (val(*w), val(*comps));
                let (m, k) = (wv.rows(), wv.cols());
                let a = cv.cols() / k;
                if wants(*w) {
                    let mut dw = Tensor::zeros(m, k);
                    for b in 0..m {
                        let (gr, cr) = (g.row(b), cv.row(b));
                        for z in 0..k {
                            let mut s = T::ZERO;
                            for j in 0..a {
                                s += gr[j] * cr[z * a + j];
                            }
                            dw.data_mut()[b * k + z] = s;
                        }
                    }
                    accumulate(grads, *w, dw);
                }
                if wants(*comps) {
                    let mut dc = Tensor::zeros(m, k * a);
                    for b in 0..m {
                        let (gr, wr) = (g.row(b), wv.row(b));
                        let out = &mut dc.data_mut()[b * k * a..(b + 1) * k * a];
                        for z in 0..k {
                            for j in 0..a {
                                out[z * a + j] = wr[z] * gr[j];
                            }
                        }
                    }
                    accumulate(grads, *comps, dc);
                }
            }
            Op::Gather(a, idx) => {
                let [r, c] = val(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (row, &col) in idx.iter().enumerate() {
                    d.data_mut()[row * c + col] = g.data()[row];
                }
                accumulate(grads, *a, d);
            }
            Op::Unfold1d { x, len, channels, width } => {
                let [r, c] = val(*x).shape();
                let mut d = Tensor::zeros(r, c);
                let out_len = len - width + 1;
                let span = width * channels;
                for row in 0..r {
                    let dst = &mut d.data_mut()[row * c..(row + 1) * c];
                    for p in 0..out_len {
                        let src = g.row(row * out_len + p);
                        for (o, v) in dst[p * channels..p * channels + span].iter_mut().zip(src) {
                            *o += *v;
                        }
                    }
                }
                accumulate(grads, *x, d);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

fn group_apply<T: Real>(a: &Tensor<T>, group: usize, f: fn(&mut [T])) -> Result<Tensor<T>> {
    if group == 0 || !a.cols().is_multiple_of(group) {
        return Err(Error::Shape(format!("{} columns are not a multiple of group {group}", a.cols())));
    }
    let mut out = a.clone();
    out.data_mut().chunks_mut(group).for_each(f);
    Ok(out)
}

pub(crate) fn log_softmax_slice<T: Real>(xs: &mut [T]) {
    let m = xs.iter().copied().fold(xs[0], T::max);
    let s = xs.iter().fold(T::ZERO, |acc, &v| acc + (v - m).exp());
    let lse = m + s.ln();
    xs.iter_mut().for_each(|v| *v -= lse);
}

pub(crate) fn softmax_slice<T: Real>(xs: &mut [T]) {
    let m = xs.iter().copied().fold(xs[0], T::max);
    let mut s = T::ZERO;
    for v in xs.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    xs.iter_mut().for_each(|v| *v = *v / s);
}
