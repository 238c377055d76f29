//! Reverse-mode differentiation tape over dense 2-D tensors.
//!
//! Every primitive evaluates its forward value immediately and appends a
//! node to the tape. Nodes whose inputs do not require gradients are plain
//! values and carry no backward rule. [`Tape::backward`] walks the nodes in
//! reverse insertion order, which is a valid topological order because a
//! node can only reference nodes created before it.
//!
//! Gradients are accumulated into leaf nodes and are never cleared
//! implicitly, so two backward passes over one tape double every leaf
//! gradient.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;
use super::tensor::{gemm_nt, gemm_tn, Tensor};
use crate::dynamics::{Activation, ConvTarget};
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arithmetic precision of forward values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    /// Every forward value is rounded to the nearest `f32`.
    F32,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulCol(Var, Var),
    ConcatCols(Var, Var),
    SliceRows(Var, usize),
    RowGather(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    RowSum(Var),
    SumAll(Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Dropout(Var, Vec<f64>),
    EdgeAggregate {
        weights: Var,
        x: Var,
        offsets: Arc<[usize]>,
        targets: Arc<[usize]>,
    },
    EdgeDot {
        a: Var,
        b: Var,
        sources: Arc<[usize]>,
        targets: Arc<[usize]>,
    },
    EdgeConvection {
        proj: Var,
        x: Var,
        offsets: Arc<[usize]>,
        targets: Arc<[usize]>,
        activation: Activation,
        target: ConvTarget,
    },
    CrossEntropy {
        logits: Var,
        targets: Arc<[usize]>,
        mask: Arc<[usize]>,
        probs: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    precision: Precision,
    grad_disabled: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self {
            precision,
            ..Self::default()
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// While disabled, new nodes never require gradients.
    pub fn set_grad_enabled(&mut self, enabled: bool) {
        self.grad_disabled = !enabled;
    }

    pub fn grad_enabled(&self) -> bool {
        !self.grad_disabled
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let value = self.round(value);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: requires_grad && !self.grad_disabled,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Registers a named trainable leaf.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let v = self.leaf(value, true);
        self.params.push((name.into(), v));
        v
    }

    /// Registers every tensor of a parameter set, in name order.
    pub fn bind_params(&mut self, params: &ParamSet) -> Vec<(String, Var)> {
        params
            .iter()
            .map(|(name, t)| (name.to_string(), self.param(name, t.clone())))
            .collect()
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Accumulated gradients of all registered parameters; parameters the
    /// loss does not depend on get zeros.
    pub fn param_grads(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, v) in &self.params {
            let node = &self.nodes[v.0];
            let g = node
                .grad
                .clone()
                .unwrap_or_else(|| Tensor::zeros(node.value.rows(), node.value.cols()));
            out.insert(name.clone(), g);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn round(&self, mut t: Tensor) -> Tensor {
        if self.precision == Precision::F32 {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        t
    }

    fn push(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let requires_grad =
            !self.grad_disabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = self.round(value);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("shape checked")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, &[a, b], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, &[a, b], Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, &[a, b], Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, &[a, b], Op::Mul(a, b)))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let out = self.zip_with(a, b, |x, y| x / y);
        Ok(self.push(out, &[a, b], Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, &[a], Op::Scale(a, s))
    }

    /// `a + 1 * row`, broadcasting a `1 x c` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(Error::dim("add_row", format!("{:?} + row {:?}", ta.shape(), tr.shape())));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, &[a, row], Op::AddRow(a, row)))
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(Error::dim("mul_col", format!("{:?} * col {:?}", ta.shape(), tc.shape())));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            let s = tc.data()[r];
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, &[a, col], Op::MulCol(a, col)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::dim("concat_cols", format!("{:?} | {:?}", ta.shape(), tb.shape())));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::new(ta.rows(), ta.cols() + tb.cols(), data)?;
        Ok(self.push(out, &[a, b], Op::ConcatCols(a, b)))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if start > end || end > ta.rows() {
            return Err(Error::dim("slice_rows", format!("{start}..{end} of {} rows", ta.rows())));
        }
        let c = ta.cols();
        let out = Tensor::new(end - start, c, ta.data()[start * c..end * c].to_vec())?;
        Ok(self.push(out, &[a], Op::SliceRows(a, start)))
    }

    /// Output row `k` is row `idx[k]` of `a`.
    pub fn row_gather(&mut self, a: Var, idx: &Arc<[usize]>) -> Result<Var> {
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(Error::dim("row_gather", format!("index {bad} >= {} rows", ta.rows())));
        }
        let c = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::new(idx.len(), c, data)?;
        Ok(self.push(out, &[a], Op::RowGather(a, idx.clone())))
    }

    fn check_segments(&self, op: &'static str, a: Var, offsets: &[usize]) -> Result<()> {
        let rows = self.value(a).rows();
        if offsets.is_empty() || offsets[0] != 0 || *offsets.last().unwrap() != rows {
            return Err(Error::dim(op, format!("offsets do not span {rows} rows")));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Contract(format!("{op}: segment offsets must be non-decreasing")));
        }
        Ok(())
    }

    /// Softmax over the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, a: Var, offsets: &Arc<[usize]>) -> Result<Var> {
        self.check_segments("segment_softmax", a, offsets)?;
        if let Some(s) = offsets.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Contract(format!(
                "segment_softmax: segment {s} is empty (missing self-loop?)"
            )));
        }
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = ta.clone();
        for w in offsets.windows(2) {
            for col in 0..c {
                let mut max = f64::NEG_INFINITY;
                for r in w[0]..w[1] {
                    max = max.max(ta.get(r, col));
                }
                let mut sum = 0.0;
                for r in w[0]..w[1] {
                    let e = (ta.get(r, col) - max).exp();
                    out.set(r, col, e);
                    sum += e;
                }
                for r in w[0]..w[1] {
                    out.set(r, col, out.get(r, col) / sum);
                }
            }
        }
        Ok(self.push(out, &[a], Op::SegmentSoftmax(a, offsets.clone())))
    }

    /// Output row `s` is the sum of rows `offsets[s]..offsets[s + 1]`.
    pub fn segment_sum(&mut self, a: Var, offsets: &Arc<[usize]>, target_rows: usize) -> Result<Var> {
        self.check_segments("segment_sum", a, offsets)?;
        if offsets.len() != target_rows + 1 {
            return Err(Error::dim(
                "segment_sum",
                format!("{} segments for {target_rows} target rows", offsets.len() - 1),
            ));
        }
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = Tensor::zeros(target_rows, c);
        for (s, w) in offsets.windows(2).enumerate() {
            let orow = out.row_mut(s);
            for r in w[0]..w[1] {
                for (o, v) in orow.iter_mut().zip(ta.row(r)) {
                    *o += v;
                }
            }
        }
        Ok(self.push(out, &[a], Op::SegmentSum(a, offsets.clone())))
    }

    /// Sum across columns, giving a column vector.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = Tensor::column((0..ta.rows()).map(|r| ta.row(r).iter().sum()).collect());
        self.push(out, &[a], Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(out, &[a], Op::SumAll(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, &[a], Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|z| Activation::Sigmoid.eval(z));
        self.push(out, &[a], Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, &[a], Op::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, &[a], Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, &[a], Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::sqrt);
        self.push(out, &[a], Op::Sqrt(a))
    }

    /// Inverted dropout: kept entries are divided by `1 - rate`. Identity
    /// when `training` is false or `rate` is zero.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let ta = self.value(a);
        let mask: Vec<f64> = (0..ta.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        Ok(self.push(out, &[a], Op::Dropout(a, mask)))
    }

    fn check_csr(&self, op: &'static str, rows: usize, offsets: &[usize], targets: &[usize]) -> Result<()> {
        if offsets.len() != rows + 1 || offsets[0] != 0 || *offsets.last().unwrap() != targets.len() {
            return Err(Error::dim(op, format!("offsets do not describe {rows} segments over {} edges", targets.len())));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Contract(format!("{op}: segment offsets must be non-decreasing")));
        }
        if let Some(&bad) = targets.iter().find(|&&j| j >= rows) {
            return Err(Error::dim(op, format!("edge target {bad} >= {rows} rows")));
        }
        Ok(())
    }

    /// Sparse weighted aggregation: row `i` of the output is
    /// `sum_{e in segment i} weights[e] * x[targets[e]]`.
    ///
    /// Same result as `segment_sum(mul_col(row_gather(x, targets), weights))`
    /// without materializing per-edge rows.
    pub fn edge_aggregate(
        &mut self,
        weights: Var,
        x: Var,
        offsets: &Arc<[usize]>,
        targets: &Arc<[usize]>,
    ) -> Result<Var> {
        let n = self.value(x).rows();
        self.check_csr("edge_aggregate", n, offsets, targets)?;
        if self.value(weights).shape() != (targets.len(), 1) {
            return Err(Error::dim(
                "edge_aggregate",
                format!("weights {:?} for {} edges", self.value(weights).shape(), targets.len()),
            ));
        }
        let (tw, tx) = (self.value(weights), self.value(x));
        let mut out = Tensor::zeros(n, tx.cols());
        for i in 0..n {
            let orow = out.row_mut(i);
            for e in offsets[i]..offsets[i + 1] {
                let w = tw.data()[e];
                for (o, v) in orow.iter_mut().zip(tx.row(targets[e])) {
                    *o += w * v;
                }
            }
        }
        let op = Op::EdgeAggregate {
            weights,
            x,
            offsets: offsets.clone(),
            targets: targets.clone(),
        };
        Ok(self.push(out, &[weights, x], op))
    }

    /// Per-edge dot products `a[sources[e]] . b[targets[e]]` as an `E x 1` column.
    pub fn edge_dot(&mut self, a: Var, b: Var, sources: &Arc<[usize]>, targets: &Arc<[usize]>) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() || sources.len() != targets.len() {
            return Err(Error::dim("edge_dot", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        if sources.iter().any(|&i| i >= ta.rows()) || targets.iter().any(|&j| j >= tb.rows()) {
            return Err(Error::dim("edge_dot", "edge endpoint out of range"));
        }
        let out = Tensor::column(
            sources
                .iter()
                .zip(targets.iter())
                .map(|(&i, &j)| ta.row(i).iter().zip(tb.row(j)).map(|(x, y)| x * y).sum())
                .collect(),
        );
        let op = Op::EdgeDot {
            a,
            b,
            sources: sources.clone(),
            targets: targets.clone(),
        };
        Ok(self.push(out, &[a, b], op))
    }

    /// Fused convection flux. With `V_e = act(proj[j] - proj[i])` for edge
    /// `e = (i, j)`, row `i` of the output is `sum_e V_e * x[j]` for
    /// [`ConvTarget::NeighborXj`] or `(sum_e V_e) * x[i]` for
    /// [`ConvTarget::SelfXi`]. Velocities are recomputed in the backward
    /// pass instead of being stored.
    pub fn edge_convection(
        &mut self,
        proj: Var,
        x: Var,
        offsets: &Arc<[usize]>,
        targets: &Arc<[usize]>,
        activation: Activation,
        target: ConvTarget,
    ) -> Result<Var> {
        self.same_shape("edge_convection", proj, x)?;
        let n = self.value(x).rows();
        self.check_csr("edge_convection", n, offsets, targets)?;
        let (tp, tx) = (self.value(proj), self.value(x));
        let c = tx.cols();
        let mut out = Tensor::zeros(n, c);
        let mut vsum = vec![0.0; c];
        for i in 0..n {
            vsum.iter_mut().for_each(|v| *v = 0.0);
            let pi = tp.row(i);
            for e in offsets[i]..offsets[i + 1] {
                let j = targets[e];
                let (pj, xj) = (tp.row(j), tx.row(j));
                let orow = out.row_mut(i);
                for k in 0..c {
                    let v = activation.eval(pj[k] - pi[k]);
                    match target {
                        ConvTarget::NeighborXj => orow[k] += v * xj[k],
                        ConvTarget::SelfXi => vsum[k] += v,
                    }
                }
            }
            if target == ConvTarget::SelfXi {
                let xi = tx.row(i);
                for (k, o) in out.row_mut(i).iter_mut().enumerate() {
                    *o = vsum[k] * xi[k];
                }
            }
        }
        let op = Op::EdgeConvection {
            proj,
            x,
            offsets: offsets.clone(),
            targets: targets.clone(),
            activation,
            target,
        };
        Ok(self.push(out, &[proj, x], op))
    }

    /// Mean softmax cross-entropy over the rows listed in `mask`.
    pub fn cross_entropy_with_logits(
        &mut self,
        logits: Var,
        targets: &Arc<[usize]>,
        mask: &Arc<[usize]>,
    ) -> Result<Var> {
        let tl = self.value(logits);
        let (n, c) = tl.shape();
        if targets.len() != n {
            return Err(Error::dim("cross_entropy", format!("{} targets for {n} rows", targets.len())));
        }
        if mask.is_empty() {
            return Err(Error::UndefinedMetric("cross_entropy over an empty mask".into()));
        }
        let mut probs = Tensor::zeros(n, c);
        let mut total = 0.0;
        for &r in mask.iter() {
            if r >= n {
                return Err(Error::dim("cross_entropy", format!("mask row {r} >= {n}")));
            }
            let y = targets[r];
            if y >= c {
                return Err(Error::dim("cross_entropy", format!("target {y} >= {c} classes")));
            }
            let row = tl.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            total += lse - row[y];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let out = Tensor::scalar(total / mask.len() as f64);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.clone(),
            mask: mask.clone(),
            probs,
        };
        Ok(self.push(out, &[logits], op))
    }

    /// Back-propagates from the scalar `loss`, accumulating into the
    /// gradients of every leaf that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let slot = &mut self.nodes[idx].grad;
                match slot {
                    Some(acc) => acc.axpy(1.0, &g),
                    None => *slot = Some(g),
                }
                continue;
            }
            self.backprop_node(idx, &g, &mut adj);
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let out = &nodes[idx].value;
        let mut send = |v: Var, t: Tensor| {
            if nodes[v.0].requires_grad {
                match &mut adj[v.0] {
                    Some(acc) => acc.axpy(1.0, &t),
                    slot @ None => *slot = Some(t),
                }
            }
        };
        let elementwise = |x: &Tensor, f: &dyn Fn(usize, f64) -> f64| {
            let data = g.data().iter().enumerate().map(|(i, &gv)| gv * f(i, x.data()[i])).collect();
            Tensor::new(g.rows(), g.cols(), data).expect("same shape")
        };

        match &nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if nodes[a.0].requires_grad {
                    send(a, gemm_nt(g, val(b)));
                }
                if nodes[b.0].requires_grad {
                    send(b, gemm_tn(val(a), g));
                }
            }
            &Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            &Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|x| -x));
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                send(a, elementwise(tb, &|_, y| y));
                send(b, elementwise(ta, &|_, x| x));
            }
            &Op::Div(a, b) => {
                let (ta, tb) = (val(a), val(b));
                send(a, elementwise(tb, &|_, y| 1.0 / y));
                send(b, elementwise(tb, &|i, y| -ta.data()[i] / (y * y)));
            }
            &Op::Scale(a, s) => send(a, g.map(|x| x * s)),
            &Op::AddRow(a, row) => {
                send(a, g.clone());
                let mut acc = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in acc.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                send(row, acc);
            }
            &Op::MulCol(a, col) => {
                let (ta, tc) = (val(a), val(col));
                let mut ga = g.clone();
                let mut gc = Tensor::zeros(tc.rows(), 1);
                for r in 0..g.rows() {
                    let s = tc.data()[r];
                    gc.data_mut()[r] = g.row(r).iter().zip(ta.row(r)).map(|(x, y)| x * y).sum();
                    ga.row_mut(r).iter_mut().for_each(|v| *v *= s);
                }
                send(a, ga);
                send(col, gc);
            }
            &Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let cb = val(b).cols();
                let mut ga = Vec::with_capacity(g.rows() * ca);
                let mut gb = Vec::with_capacity(g.rows() * cb);
                for r in 0..g.rows() {
                    ga.extend_from_slice(&g.row(r)[..ca]);
                    gb.extend_from_slice(&g.row(r)[ca..]);
                }
                send(a, Tensor::new(g.rows(), ca, ga).expect("shape"));
                send(b, Tensor::new(g.rows(), cb, gb).expect("shape"));
            }
            &Op::SliceRows(a, start) => {
                let ta = val(a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                let c = ta.cols();
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(a, ga);
            }
            Op::RowGather(a, index) => {
                let ta = val(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for (k, &i) in index.iter().enumerate() {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*a, ga);
            }
            Op::SegmentSoftmax(a, offsets) => {
                let c = out.cols();
                let mut ga = Tensor::zeros(out.rows(), c);
                for w in offsets.windows(2) {
                    for col in 0..c {
                        let dot: f64 = (w[0]..w[1]).map(|r| out.get(r, col) * g.get(r, col)).sum();
                        for r in w[0]..w[1] {
                            ga.set(r, col, out.get(r, col) * (g.get(r, col) - dot));
                        }
                    }
                }
                send(*a, ga);
            }
            Op::SegmentSum(a, offsets) => {
                let ta = val(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for (s, w) in offsets.windows(2).enumerate() {
                    for r in w[0]..w[1] {
                        ga.row_mut(r).copy_from_slice(g.row(s));
                    }
                }
                send(*a, ga);
            }
            &Op::RowSum(a) => {
                let ta = val(a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for r in 0..ta.rows() {
                    let s = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|v| *v = s);
                }
                send(a, ga);
            }
            &Op::SumAll(a) => {
                let ta = val(a);
                send(a, Tensor::filled(ta.rows(), ta.cols(), g.data()[0]));
            }
            &Op::Tanh(a) => send(a, elementwise(out, &|_, y| 1.0 - y * y)),
            &Op::Sigmoid(a) => send(a, elementwise(out, &|_, y| y * (1.0 - y))),
            &Op::LeakyRelu(a, slope) => {
                send(a, elementwise(val(a), &|_, x| if x > 0.0 { 1.0 } else { slope }))
            }
            &Op::Exp(a) => send(a, elementwise(out, &|_, y| y)),
            &Op::Log(a) => send(a, elementwise(val(a), &|_, x| 1.0 / x)),
            &Op::Sqrt(a) => send(a, elementwise(out, &|_, y| 0.5 / y)),
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                send(*a, Tensor::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::EdgeAggregate {
                weights,
                x,
                offsets,
                targets,
            } => {
                let (tw, tx) = (val(*weights), val(*x));
                let mut gw = Tensor::zeros(tw.rows(), 1);
                let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                let want_x = nodes[x.0].requires_grad;
                for i in 0..g.rows() {
                    let gi = g.row(i);
                    for e in offsets[i]..offsets[i + 1] {
                        let j = targets[e];
                        gw.data_mut()[e] = gi.iter().zip(tx.row(j)).map(|(a, b)| a * b).sum();
                        if want_x {
                            let w = tw.data()[e];
                            for (o, v) in gx.row_mut(j).iter_mut().zip(gi) {
                                *o += w * v;
                            }
                        }
                    }
                }
                send(*weights, gw);
                send(*x, gx);
            }
            Op::EdgeDot {
                a,
                b,
                sources,
                targets,
            } => {
                let (ta, tb) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                for (e, (&i, &j)) in sources.iter().zip(targets.iter()).enumerate() {
                    let ge = g.data()[e];
                    for (o, v) in ga.row_mut(i).iter_mut().zip(tb.row(j)) {
                        *o += ge * v;
                    }
                    for (o, v) in gb.row_mut(j).iter_mut().zip(ta.row(i)) {
                        *o += ge * v;
                    }
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::EdgeConvection {
                proj,
                x,
                offsets,
                targets,
                activation,
                target,
            } => {
                let (tp, tx) = (val(*proj), val(*x));
                let c = tx.cols();
                let mut gp = Tensor::zeros(tp.rows(), c);
                let mut gx = Tensor::zeros(tx.rows(), c);
                let mut dz = vec![0.0; c];
                for i in 0..g.rows() {
                    let gi = g.row(i);
                    for e in offsets[i]..offsets[i + 1] {
                        let j = targets[e];
                        for k in 0..c {
                            let z = tp.get(j, k) - tp.get(i, k);
                            let (v, dv) = activation.eval_with_derivative(z);
                            let carried = match target {
                                ConvTarget::NeighborXj => {
                                    gx.data_mut()[j * c + k] += gi[k] * v;
                                    tx.get(j, k)
                                }
                                ConvTarget::SelfXi => {
                                    gx.data_mut()[i * c + k] += gi[k] * v;
                                    tx.get(i, k)
                                }
                            };
                            dz[k] = gi[k] * carried * dv;
                        }
                        for (k, d) in dz.iter().enumerate() {
                            gp.data_mut()[j * c + k] += d;
                            gp.data_mut()[i * c + k] -= d;
                        }
                    }
                }
                send(*proj, gp);
                send(*x, gx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
            } => {
                let scale = g.data()[0] / mask.len() as f64;
                let mut gl = Tensor::zeros(probs.rows(), probs.cols());
                for &r in mask.iter() {
                    for (o, p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *o += scale * p;
                    }
                    let y = targets[r];
                    gl.set(r, y, gl.get(r, y) - scale);
                }
                send(*logits, gl);
            }
        }
    }
}
