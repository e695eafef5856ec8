use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smoothing term inside the square root of standard-deviation pooling.
pub const STD_EPS: f64 = 1e-5;
/// Probabilities below this are clamped before taking the log in cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Reduction applied by [`Graph::global_pool_time`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
    Std,
}

impl PoolMode {
    /// Canonical concatenation order.
    pub const ALL: [PoolMode; 3] = [PoolMode::Max, PoolMode::Avg, PoolMode::Std];

    pub fn name(self) -> &'static str {
        match self {
            PoolMode::Max => "max",
            PoolMode::Avg => "avg",
            PoolMode::Std => "std",
        }
    }
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(PoolMode::Max),
            "avg" | "mean" => Ok(PoolMode::Avg),
            "std" => Ok(PoolMode::Std),
            other => Err(Error::invalid(
                "PoolMode::from_str",
                format!("unknown pooling mode `{other}` (expected max, avg or std)"),
            )),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        kernels: Var,
        bias: Var,
        rows: usize,
    },
    Relu(Var),
    Concat(Vec<Var>),
    ConcatChannels(Vec<Var>),
    Pool {
        x: Var,
        mode: PoolMode,
        valid_len: usize,
        argmax: Vec<usize>,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    MatVec {
        a: Var,
        v: Var,
    },
    WeightedRows {
        weights: Var,
        a: Var,
    },
    Softmax {
        x: Var,
        valid_len: usize,
    },
    CrossEntropy {
        probs: Var,
        class: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Mean(Vec<Var>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Tape of executed operations. Nodes are appended in execution order, so
/// the node list is already topologically sorted.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
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

    /// Records a leaf. Its gradient is accumulated by [`Graph::backward`]
    /// when `tensor.requires_grad()` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        if cfg!(debug_assertions) && inputs.iter().all(|v| self.nodes[v.0].value.all_finite()) {
            debug_assert!(value.all_finite(), "non-finite output from {op:?}");
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Same-length convolution along the sequence axis with kernels that span
    /// the whole feature axis: `x` is `L×D`, `kernels` is `F×s×D`, `bias` is
    /// `F`; the result is `L×F`.
    ///
    /// Output row `i` for filter `f` is
    /// `bias[f] + Σ_m Σ_d kernels[f, m + ⌊s/2⌋, d] · x[i − m, d]` for
    /// `m ∈ [−⌊s/2⌋, ⌊(s−1)/2⌋]`, rows outside `[0, L)` reading as zero.
    pub fn conv_full_width(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let rows = self.shape(x).first().copied().unwrap_or(0);
        self.conv_full_width_masked(x, kernels, bias, rows)
    }

    /// [`Graph::conv_full_width`] where only the first `valid_len` output rows
    /// are computed; the remaining rows are exactly zero and pass no gradient.
    pub fn conv_full_width_masked(
        &mut self,
        x: Var,
        kernels: Var,
        bias: Var,
        valid_len: usize,
    ) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(kernels), self.shape(bias));
        if xs.len() != 2 || ks.len() != 3 || bs.len() != 1 {
            return Err(Error::shape(
                "conv_full_width",
                format!("expected x L×D, kernels F×s×D, bias F; got {xs:?}, {ks:?}, {bs:?}"),
            ));
        }
        let (len, dim) = (xs[0], xs[1]);
        let (filters, taps, kdim) = (ks[0], ks[1], ks[2]);
        if kdim != dim {
            return Err(Error::shape(
                "conv_full_width",
                format!("kernel width {kdim} does not match feature dimension {dim}"),
            ));
        }
        if bs[0] != filters {
            return Err(Error::shape(
                "conv_full_width",
                format!("bias has {} entries for {filters} filters", bs[0]),
            ));
        }
        if taps == 0 {
            return Err(Error::invalid("conv_full_width", "kernel size must be >= 1"));
        }
        if valid_len > len {
            return Err(Error::invalid(
                "conv_full_width",
                format!("valid_len {valid_len} exceeds sequence length {len}"),
            ));
        }

        let xv = self.value(x).data();
        let kv = self.value(kernels).data();
        let bv = self.value(bias).data();
        let half = taps / 2;
        let mut out = vec![0.0; len * filters];
        for i in 0..valid_len {
            let orow = &mut out[i * filters..(i + 1) * filters];
            orow.copy_from_slice(bv);
            for t in 0..taps {
                let Some(r) = (i + half).checked_sub(t).filter(|&r| r < len) else {
                    continue;
                };
                let xrow = &xv[r * dim..(r + 1) * dim];
                for (f, o) in orow.iter_mut().enumerate() {
                    let krow = &kv[(f * taps + t) * dim..(f * taps + t + 1) * dim];
                    *o += dot(krow, xrow);
                }
            }
        }
        let value = Tensor::new(vec![len, filters], out)?;
        Ok(self.push(
            value,
            Op::Conv {
                x,
                kernels,
                bias,
                rows: valid_len,
            },
            &[x, kernels, bias],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let data = value.data().iter().map(|&v| v.max(0.0)).collect();
        let out = Tensor::new(value.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Relu(x), &[x])
    }

    /// Concatenates 1-D tensors end to end.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::invalid("concat", "no inputs"));
        }
        let mut data = Vec::new();
        for &v in inputs {
            let t = self.value(v);
            if t.ndim() != 1 {
                return Err(Error::shape(
                    "concat",
                    format!("expected 1-D inputs, got {:?}", t.shape()),
                ));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::from_vec(data), Op::Concat(inputs.to_vec()), inputs))
    }

    /// Concatenates `L×F_i` maps along the channel axis into `L×ΣF_i`.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::invalid("concat_channels", "no inputs"));
        };
        let len = self.shape(first)[0];
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != 2 || s[0] != len {
                return Err(Error::shape(
                    "concat_channels",
                    format!("expected {len}×F maps, got {s:?}"),
                ));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; len * total];
        let mut offset = 0;
        for (&v, &w) in inputs.iter().zip(&widths) {
            let src = self.value(v).data();
            for i in 0..len {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![len, total], data)?;
        Ok(self.push(value, Op::ConcatChannels(inputs.to_vec()), inputs))
    }

    /// Pools an `L×F` map over its first `valid_len` rows into an `F` vector.
    pub fn global_pool_time(&mut self, x: Var, mode: PoolMode, valid_len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("global_pool_time", format!("expected L×F, got {s:?}")));
        }
        let (len, ch) = (s[0], s[1]);
        if valid_len == 0 || valid_len > len {
            return Err(Error::invalid(
                "global_pool_time",
                format!("valid_len must be in 1..={len}, got {valid_len}"),
            ));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; ch];
        let mut argmax = Vec::new();
        match mode {
            PoolMode::Max => {
                argmax = vec![0; ch];
                for (c, o) in out.iter_mut().enumerate() {
                    let mut best = xv[c];
                    let mut at = 0;
                    for i in 1..valid_len {
                        let v = xv[i * ch + c];
                        if v > best {
                            best = v;
                            at = i;
                        }
                    }
                    *o = best;
                    argmax[c] = at;
                }
            }
            PoolMode::Avg | PoolMode::Std => {
                let n = valid_len as f64;
                for (c, o) in out.iter_mut().enumerate() {
                    let mean = (0..valid_len).map(|i| xv[i * ch + c]).sum::<f64>() / n;
                    *o = if mode == PoolMode::Avg {
                        mean
                    } else {
                        let var = (0..valid_len)
                            .map(|i| (xv[i * ch + c] - mean).powi(2))
                            .sum::<f64>()
                            / n;
                        (var + STD_EPS).sqrt()
                    };
                }
            }
        }
        Ok(self.push(
            Tensor::from_vec(out),
            Op::Pool {
                x,
                mode,
                valid_len,
                argmax,
            },
            &[x],
        ))
    }

    /// `w · x + b` for `x: D_in`, `w: D_out×D_in`, `b: D_out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 1 || ws.len() != 2 || bs.len() != 1 || ws[1] != xs[0] || ws[0] != bs[0] {
            return Err(Error::shape(
                "affine",
                format!("x {xs:?}, W {ws:?}, b {bs:?} do not conform"),
            ));
        }
        let (rows, cols) = (ws[0], ws[1]);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let out: Vec<f64> = self
            .value(b)
            .data()
            .iter()
            .enumerate()
            .map(|(r, &bias)| bias + dot(&wv[r * cols..(r + 1) * cols], xv))
            .collect();
        debug_assert_eq!(out.len(), rows);
        Ok(self.push(Tensor::from_vec(out), Op::Affine { x, w, b }, &[x, w, b]))
    }

    /// `a · v` for `a: M×C`, `v: C`.
    pub fn matvec(&mut self, a: Var, v: Var) -> Result<Var> {
        let (as_, vs) = (self.shape(a), self.shape(v));
        if as_.len() != 2 || vs.len() != 1 || as_[1] != vs[0] {
            return Err(Error::shape("matvec", format!("a {as_:?} and v {vs:?} do not conform")));
        }
        let cols = as_[1];
        let av = self.value(a).data();
        let vv = self.value(v).data();
        let out = av.chunks_exact(cols).map(|row| dot(row, vv)).collect();
        Ok(self.push(Tensor::from_vec(out), Op::MatVec { a, v }, &[a, v]))
    }

    /// `Σ_k weights[k] · a[k, :]` for `weights: M`, `a: M×C`.
    pub fn weighted_rows(&mut self, weights: Var, a: Var) -> Result<Var> {
        let (ws, as_) = (self.shape(weights), self.shape(a));
        if ws.len() != 1 || as_.len() != 2 || as_[0] != ws[0] {
            return Err(Error::shape(
                "weighted_rows",
                format!("weights {ws:?} and a {as_:?} do not conform"),
            ));
        }
        let cols = as_[1];
        let wv = self.value(weights).data();
        let av = self.value(a).data();
        let mut out = vec![0.0; cols];
        for (row, &w) in av.chunks_exact(cols).zip(wv) {
            if w != 0.0 {
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += w * x;
                }
            }
        }
        Ok(self.push(Tensor::from_vec(out), Op::WeightedRows { weights, a }, &[weights, a]))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.shape(x).first().copied().unwrap_or(0);
        self.masked_softmax(x, n)
    }

    /// Softmax over the first `valid_len` entries; the rest are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, valid_len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 1 || s[0] == 0 {
            return Err(Error::shape("softmax", format!("expected non-empty 1-D input, got {s:?}")));
        }
        if valid_len == 0 || valid_len > s[0] {
            return Err(Error::invalid(
                "softmax",
                format!("valid_len must be in 1..={}, got {valid_len}", s[0]),
            ));
        }
        let xv = &self.value(x).data()[..valid_len];
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = vec![0.0; s[0]];
        let mut total = 0.0;
        for (o, &v) in out.iter_mut().zip(xv) {
            *o = (v - max).exp();
            total += *o;
        }
        for o in &mut out[..valid_len] {
            *o /= total;
        }
        Ok(self.push(Tensor::from_vec(out), Op::Softmax { x, valid_len }, &[x]))
    }

    /// `−Σ y_i log(max(p_i, 1e-12))` against a one-hot target vector.
    pub fn cross_entropy(&mut self, probs: Var, target: &[f64]) -> Result<Var> {
        let hot: Vec<usize> = target
            .iter()
            .enumerate()
            .filter(|(_, &y)| y != 0.0)
            .map(|(i, _)| i)
            .collect();
        if hot.len() != 1 || target[hot[0]] != 1.0 {
            return Err(Error::invalid("cross_entropy", "target is not one-hot"));
        }
        if target.len() != self.shape(probs).iter().product::<usize>() {
            return Err(Error::shape(
                "cross_entropy",
                format!("target has {} classes, probs {:?}", target.len(), self.shape(probs)),
            ));
        }
        self.cross_entropy_class(probs, hot[0])
    }

    /// Cross-entropy against class index `class`.
    pub fn cross_entropy_class(&mut self, probs: Var, class: usize) -> Result<Var> {
        let pv = self.value(probs);
        if pv.ndim() != 1 || class >= pv.len() {
            return Err(Error::invalid(
                "cross_entropy",
                format!("class {class} out of range for probs {:?}", pv.shape()),
            ));
        }
        let loss = -pv.data()[class].max(LOG_FLOOR).ln();
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { probs, class }, &[probs]))
    }

    /// Inverted dropout: surviving entries are scaled by `1/(1−rate)`.
    /// Identity when `training` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid("dropout", format!("rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let value = self.value(x);
        let mask: Vec<f64> = (0..value.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = value.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(value.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// Looks up rows of a `V×D` table. The result has `out_rows` rows; rows at
    /// and beyond `ids.len()` are zero padding that carries no gradient.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], out_rows: usize) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", format!("expected V×D table, got {s:?}")));
        }
        let (vocab, dim) = (s[0], s[1]);
        if ids.len() > out_rows {
            return Err(Error::invalid(
                "gather_rows",
                format!("{} ids do not fit in {out_rows} rows", ids.len()),
            ));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::invalid(
                "gather_rows",
                format!("id {bad} out of range for table of {vocab} rows"),
            ));
        }
        let tv = self.value(table).data();
        let mut data = vec![0.0; out_rows * dim];
        for (i, &id) in ids.iter().enumerate() {
            data[i * dim..(i + 1) * dim].copy_from_slice(&tv[id * dim..(id + 1) * dim]);
        }
        let value = Tensor::new(vec![out_rows, dim], data)?;
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Mean of scalar values.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::invalid("mean", "no inputs"));
        }
        if let Some(v) = inputs.iter().find(|v| self.value(**v).len() != 1) {
            return Err(Error::shape(
                "mean",
                format!("expected scalars, got {:?}", self.shape(*v)),
            ));
        }
        let total: f64 = inputs.iter().map(|&v| self.value(v).item()).sum();
        let value = Tensor::scalar(total / inputs.len() as f64);
        Ok(self.push(value, Op::Mean(inputs.to_vec()), inputs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Clears every accumulated gradient so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.set_grad(None);
        }
        self.backward_done = false;
    }

    /// Reverse-mode sweep from a scalar `loss`, accumulating gradients into
    /// every node that depends on a `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got {:?}", self.shape(loss)),
            ));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].needs_grad {
            return Ok(());
        }
        self.nodes[loss.0].value.set_grad(Some(vec![1.0]));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].value.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            self.apply_rule(idx, &g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        for (g, d) in node.value.grad_mut_or_init().iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn accumulate_at(&mut self, v: Var, offset: usize, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        let grad = node.value.grad_mut_or_init();
        for (g, d) in grad[offset..offset + delta.len()].iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn apply_rule(&mut self, idx: usize, g: &[f64]) {
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::Conv {
                x,
                kernels,
                bias,
                rows,
            } => self.conv_backward(x, kernels, bias, rows, g),
            &Op::Relu(x) => {
                let d: Vec<f64> = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > 0.0 { gi } else { 0.0 })
                    .collect();
                self.accumulate(x, &d);
            }
            Op::Concat(inputs) => {
                let mut offset = 0;
                for &v in inputs {
                    let n = self.value(v).len();
                    self.accumulate(v, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::ConcatChannels(inputs) => {
                let len = self.value(inputs[0]).rows();
                let total = g.len() / len.max(1);
                let mut offset = 0;
                for &v in inputs {
                    let w = self.value(v).cols();
                    if self.wants(v) {
                        let mut d = vec![0.0; len * w];
                        for i in 0..len {
                            d[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(v, &d);
                    }
                    offset += w;
                }
            }
            &Op::Pool {
                x,
                mode,
                valid_len,
                ref argmax,
            } => {
                let xt = self.value(x);
                let ch = xt.cols();
                let mut d = vec![0.0; xt.len()];
                match mode {
                    PoolMode::Max => {
                        for (c, &at) in argmax.iter().enumerate() {
                            d[at * ch + c] = g[c];
                        }
                    }
                    PoolMode::Avg => {
                        let n = valid_len as f64;
                        for i in 0..valid_len {
                            for c in 0..ch {
                                d[i * ch + c] = g[c] / n;
                            }
                        }
                    }
                    PoolMode::Std => {
                        let n = valid_len as f64;
                        let xv = xt.data();
                        let sigma = self.value(Var(idx)).data();
                        for c in 0..ch {
                            let mean = (0..valid_len).map(|i| xv[i * ch + c]).sum::<f64>() / n;
                            let scale = g[c] / (n * sigma[c]);
                            for i in 0..valid_len {
                                d[i * ch + c] = scale * (xv[i * ch + c] - mean);
                            }
                        }
                    }
                }
                self.accumulate(x, &d);
            }
            &Op::Affine { x, w, b } => {
                let cols = self.value(x).len();
                if self.wants(x) {
                    let wv = self.value(w).data();
                    let mut dx = vec![0.0; cols];
                    for (row, &gr) in wv.chunks_exact(cols).zip(g) {
                        axpy(gr, row, &mut dx);
                    }
                    self.accumulate(x, &dx);
                }
                if self.wants(w) {
                    let xv = self.value(x).data();
                    let mut dw = vec![0.0; g.len() * cols];
                    for (row, &gr) in dw.chunks_exact_mut(cols).zip(g) {
                        axpy(gr, xv, row);
                    }
                    self.accumulate(w, &dw);
                }
                self.accumulate(b, g);
            }
            &Op::MatVec { a, v } => {
                let cols = self.value(v).len();
                if self.wants(a) {
                    let vv = self.value(v).data();
                    let mut da = vec![0.0; g.len() * cols];
                    for (row, &gr) in da.chunks_exact_mut(cols).zip(g) {
                        axpy(gr, vv, row);
                    }
                    self.accumulate(a, &da);
                }
                if self.wants(v) {
                    let av = self.value(a).data();
                    let mut dv = vec![0.0; cols];
                    for (row, &gr) in av.chunks_exact(cols).zip(g) {
                        axpy(gr, row, &mut dv);
                    }
                    self.accumulate(v, &dv);
                }
            }
            &Op::WeightedRows { weights, a } => {
                let cols = g.len();
                if self.wants(weights) {
                    let av = self.value(a).data();
                    let dw: Vec<f64> = av.chunks_exact(cols).map(|row| dot(row, g)).collect();
                    self.accumulate(weights, &dw);
                }
                if self.wants(a) {
                    let wv = self.value(weights).data();
                    let mut da = vec![0.0; wv.len() * cols];
                    for (row, &w) in da.chunks_exact_mut(cols).zip(wv) {
                        axpy(w, g, row);
                    }
                    self.accumulate(a, &da);
                }
            }
            &Op::Softmax { x, valid_len } => {
                let p = self.value(Var(idx)).data();
                let gp = dot(&g[..valid_len], &p[..valid_len]);
                let mut d = vec![0.0; p.len()];
                for k in 0..valid_len {
                    d[k] = p[k] * (g[k] - gp);
                }
                self.accumulate(x, &d);
            }
            &Op::CrossEntropy { probs, class } => {
                let p = self.value(probs).data()[class];
                if p > LOG_FLOOR {
                    self.accumulate_at(probs, class, &[-g[0] / p]);
                }
            }
            Op::Dropout { x, mask } => {
                let d: Vec<f64> = g.iter().zip(mask).map(|(a, b)| a * b).collect();
                self.accumulate(*x, &d);
            }
            &Op::Gather { table, ref ids } => {
                if self.wants(table) {
                    let dim = self.value(table).cols();
                    for (i, &id) in ids.iter().enumerate() {
                        self.accumulate_at(table, id * dim, &g[i * dim..(i + 1) * dim]);
                    }
                }
            }
            Op::Mean(inputs) => {
                let share = [g[0] / inputs.len() as f64];
                for &v in inputs {
                    self.accumulate(v, &share);
                }
            }
            &Op::Sum(x) => {
                let d = vec![g[0]; self.value(x).len()];
                self.accumulate(x, &d);
            }
        }
        self.nodes[idx].op = op;
    }

    fn conv_backward(&mut self, x: Var, kernels: Var, bias: Var, rows: usize, g: &[f64]) {
        let (len, dim) = (self.value(x).rows(), self.value(x).cols());
        let ks = self.value(kernels).shape();
        let (filters, taps) = (ks[0], ks[1]);
        let half = taps / 2;
        let xv = self.value(x).data();
        let kv = self.value(kernels).data();
        let want_x = self.wants(x);
        let want_k = self.wants(kernels);
        let mut dx = if want_x { vec![0.0; len * dim] } else { Vec::new() };
        let mut dk = if want_k { vec![0.0; kv.len()] } else { Vec::new() };
        let mut db = vec![0.0; filters];
        for i in 0..rows {
            let grow = &g[i * filters..(i + 1) * filters];
            for (d, &gv) in db.iter_mut().zip(grow) {
                *d += gv;
            }
            for t in 0..taps {
                let Some(r) = (i + half).checked_sub(t).filter(|&r| r < len) else {
                    continue;
                };
                let xrow = &xv[r * dim..(r + 1) * dim];
                for (f, &gv) in grow.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let koff = (f * taps + t) * dim;
                    if want_k {
                        axpy(gv, xrow, &mut dk[koff..koff + dim]);
                    }
                    if want_x {
                        axpy(gv, &kv[koff..koff + dim], &mut dx[r * dim..(r + 1) * dim]);
                    }
                }
            }
        }
        if want_x {
            self.accumulate(x, &dx);
        }
        if want_k {
            self.accumulate(kernels, &dk);
        }
        self.accumulate(bias, &db);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
