//! Reverse-mode tape. Every op appends a node holding its output value and
//! enough saved state to push gradients back to its inputs.

use std::sync::Arc;

use crate::error::{dim_err, Result, TensorError};
use crate::kernels::{conv, loss, norm, pool, resize};
use crate::param::{ParamId, ParamStore, RunningUpdate};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Argmax positions recorded by [`Graph::max_pool2x2`], consumed by
/// [`Graph::unpool`].
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMap {
    pub batch: usize,
    pub channels: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
    indices: Arc<Vec<u32>>,
}

impl IndexMap {
    /// Builds an index map from raw in-plane positions, validating bounds.
    pub fn from_raw(batch: usize, channels: usize, in_hw: (usize, usize), out_hw: (usize, usize), indices: Vec<u32>) -> Result<Self> {
        if indices.len() != batch * channels * out_hw.0 * out_hw.1 {
            return Err(TensorError::Corruption(format!(
                "{} indices for a {batch}x{channels}x{}x{} pooled map",
                indices.len(),
                out_hw.0,
                out_hw.1
            )));
        }
        let limit = (in_hw.0 * in_hw.1) as u32;
        if let Some(bad) = indices.iter().find(|&&i| i >= limit) {
            return Err(TensorError::Corruption(format!("index {bad} outside a {}x{} plane", in_hw.0, in_hw.1)));
        }
        Ok(Self { batch, channels, in_hw, out_hw, indices: Arc::new(indices) })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Running-statistics buffers of one batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BnStats {
    pub mean: ParamId,
    pub var: ParamId,
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: conv::ConvGeom },
    Relu(Var),
    MaxPool { x: Var, map: IndexMap },
    Unpool { x: Var, map: IndexMap },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    Add(Var, Var),
    Scale(Var, f32),
    Concat(Vec<Var>),
    Resize { x: Var, from: (usize, usize), to: (usize, usize) },
    CrossEntropy { logits: Var, labels: Arc<Vec<u8>>, probs: Vec<f32>, counted: usize, ignore: u8 },
    WeightedSum { x: Var, weights: Vec<f32> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    /// Full-precision copy for scalar reductions.
    scalar: Option<f64>,
}

/// Gradients produced by [`Graph::backward`], retained for leaf nodes only.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_links: Vec<(Var, ParamId)>,
    running: Vec<RunningUpdate>,
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        self.nodes.push(Node { value, op, needs_grad, scalar: None });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar output in full precision (loss nodes), falling back to the f32 value.
    pub fn scalar(&self, v: Var) -> f64 {
        let node = &self.nodes[v.0];
        node.scalar.unwrap_or(node.value.data()[0] as f64)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "input")
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Places a parameter on the tape. Its gradient is collected by
    /// [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let p = store.get(id);
        let v = self.push(p.tensor.clone(), Op::Leaf, p.trainable, &p.name)?;
        if p.trainable {
            self.param_links.push((v, id));
        }
        Ok(v)
    }

    pub fn take_running_updates(&mut self) -> Vec<RunningUpdate> {
        std::mem::take(&mut self.running)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4()?;
        let (o, ci, kh, kw) = self.value(w).dims4()?;
        if ci != c {
            return dim_err(format!("conv2d: input has {c} channels, weight expects {ci}"));
        }
        if kh != kw || kh % 2 == 0 {
            return dim_err(format!("conv2d: kernel must be square and odd, got {kh}x{kw}"));
        }
        if stride == 0 || h + 2 * padding < kh || wd + 2 * padding < kw {
            return dim_err(format!("conv2d: invalid stride {stride} / padding {padding} for {h}x{wd} input"));
        }
        if let Some(b) = b {
            if self.value(b).numel() != o {
                return dim_err(format!("conv2d: bias has {} values for {o} outputs", self.value(b).numel()));
            }
        }
        let geom = conv::ConvGeom {
            batch: n,
            in_channels: c,
            height: h,
            width: wd,
            out_channels: o,
            kernel: kh,
            stride,
            padding,
        };
        let out = conv::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let (ho, wo) = geom.out_hw();
        let needs = self.needs(&[x, w]) || b.is_some_and(|b| self.nodes[b.0].needs_grad);
        self.push(Tensor::new(&[n, o, ho, wo], out)?, Op::Conv2d { x, w, b, geom }, needs, "conv2d")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out: Vec<f32> = t.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(t.shape(), out)?;
        let needs = self.needs(&[x]);
        self.push(value, Op::Relu(x), needs, "relu")
    }

    pub fn max_pool2x2(&mut self, x: Var) -> Result<(Var, IndexMap)> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return dim_err(format!("max_pool2x2: spatial dims {h}x{w} must be even"));
        }
        let (vals, idx) = pool::maxpool2x2_forward(self.value(x).data(), n * c, h, w);
        let map = IndexMap { batch: n, channels: c, in_hw: (h, w), out_hw: (h / 2, w / 2), indices: Arc::new(idx) };
        let needs = self.needs(&[x]);
        let v = self.push(Tensor::new(&[n, c, h / 2, w / 2], vals)?, Op::MaxPool { x, map: map.clone() }, needs, "max_pool2x2")?;
        Ok((v, map))
    }

    pub fn unpool(&mut self, x: Var, map: &IndexMap, out_hw: (usize, usize)) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if (n, c, (h, w)) != (map.batch, map.channels, map.out_hw) {
            return dim_err(format!(
                "unpool: input {n}x{c}x{h}x{w} does not match pooled map {}x{}x{}x{}",
                map.batch, map.channels, map.out_hw.0, map.out_hw.1
            ));
        }
        if out_hw != map.in_hw {
            return dim_err(format!("unpool: requested {out_hw:?}, indices address {:?}", map.in_hw));
        }
        let limit = (out_hw.0 * out_hw.1) as u32;
        if map.indices.iter().any(|&i| i >= limit) {
            return Err(TensorError::Corruption("unpool: index outside output plane".into()));
        }
        let out = pool::unpool_forward(self.value(x).data(), &map.indices, n * c, out_hw.0, out_hw.1);
        let needs = self.needs(&[x]);
        self.push(Tensor::new(&[n, c, out_hw.0, out_hw.1], out)?, Op::Unpool { x, map: map.clone() }, needs, "unpool")
    }

    /// Batch normalization. In training mode batch moments are used and a
    /// running-statistics update is queued; otherwise the stored running
    /// statistics from `store` are used.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, stats: BnStats, store: &ParamStore, train: bool) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        for (what, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).numel() != c {
                return dim_err(format!("batch_norm: {what} has {} values for {c} channels", self.value(v).numel()));
            }
        }
        let plane = h * w;
        let (mean, var) = if train {
            let (mean, var) = norm::channel_moments(self.value(x).data(), n, c, plane);
            let count = (n * plane) as f64;
            let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            self.running.push(RunningUpdate {
                mean_id: stats.mean,
                var_id: stats.var,
                batch_mean: mean.iter().map(|&m| m as f32).collect(),
                batch_var: var.iter().map(|&v| (v * unbiased) as f32).collect(),
            });
            (mean, var)
        } else {
            let m = store.get(stats.mean).tensor.data();
            let v = store.get(stats.var).tensor.data();
            if m.len() != c || v.len() != c {
                return dim_err(format!("batch_norm: running statistics sized {} for {c} channels", m.len()));
            }
            (m.iter().map(|&v| v as f64).collect(), v.iter().map(|&v| v as f64).collect::<Vec<_>>())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let out = norm::normalize(
            self.value(x).data(),
            n,
            c,
            plane,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let needs = self.needs(&[x, gamma, beta]);
        self.push(
            Tensor::new(&[n, c, h, w], out)?,
            Op::BatchNorm { x, gamma, beta, mean, inv_std, batch_stats: train },
            needs,
            "batch_norm",
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return dim_err(format!("add: shapes {:?} and {:?} differ", ta.shape(), tb.shape()));
        }
        let out: Vec<f32> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape(), out)?;
        let needs = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), needs, "add")
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape(), t.data().iter().map(|v| v * factor).collect())?;
        let needs = self.needs(&[x]);
        self.push(value, Op::Scale(x, factor), needs, "scale")
    }

    /// Concatenates `N, C_i, H, W` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| TensorError::Dimension("concat of zero tensors".into()))?;
        let (n, _, h, w) = self.value(first).dims4()?;
        let mut total = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return dim_err(format!("concat: {pn}x{pc}x{ph}x{pw} does not align with batch {n}, {h}x{w}"));
            }
            total += pc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for &p in parts {
                let t = self.value(p);
                let c = t.shape()[1];
                out.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let needs = self.needs(parts);
        self.push(Tensor::new(&[n, total, h, w], out)?, Op::Concat(parts.to_vec()), needs, "concat")
    }

    /// Bilinear resize with half-pixel centres (`align_corners = false`).
    pub fn resize_bilinear(&mut self, x: Var, out_hw: (usize, usize)) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if out_hw.0 == 0 || out_hw.1 == 0 {
            return dim_err("resize: output dims must be positive");
        }
        let out = resize::bilinear_forward(self.value(x).data(), n * c, (h, w), out_hw);
        let needs = self.needs(&[x]);
        self.push(
            Tensor::new(&[n, c, out_hw.0, out_hw.1], out)?,
            Op::Resize { x, from: (h, w), to: out_hw },
            needs,
            "resize",
        )
    }

    /// Mean softmax cross-entropy over pixels whose label is not `ignore`.
    /// `labels` is laid out `N, H, W`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u8], ignore: u8) -> Result<Var> {
        let (n, k, h, w) = self.value(logits).dims4()?;
        if labels.len() != n * h * w {
            return dim_err(format!("cross_entropy: {} labels for {n}x{h}x{w} logits", labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != ignore && l as usize >= k) {
            return Err(TensorError::Label(format!("label {bad} outside 0..{k} and not the ignore value {ignore}")));
        }
        let ce = loss::softmax_cross_entropy(self.value(logits).data(), labels, n, k, h * w, ignore);
        let needs = self.needs(&[logits]);
        let v = self.push(
            Tensor::scalar(ce.loss as f32),
            Op::CrossEntropy { logits, labels: Arc::new(labels.to_vec()), probs: ce.probs, counted: ce.counted, ignore },
            needs,
            "cross_entropy",
        )?;
        self.nodes[v.0].scalar = Some(ce.loss);
        Ok(v)
    }

    /// `sum_i x_i * weights_i`, accumulated in `f64`. Used to reduce
    /// arbitrary outputs to a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f32>) -> Result<Var> {
        let t = self.value(x);
        if weights.len() != t.numel() {
            return dim_err(format!("weighted_sum: {} weights for {} values", weights.len(), t.numel()));
        }
        let s: f64 = t.data().iter().zip(&weights).map(|(&a, &b)| a as f64 * b as f64).sum();
        let needs = self.needs(&[x]);
        let v = self.push(Tensor::scalar(s as f32), Op::WeightedSum { x, weights }, needs, "weighted_sum")?;
        self.nodes[v.0].scalar = Some(s);
        Ok(v)
    }

    /// Propagates gradients from scalar `output` to every node that needs one.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.push_back(&node.op, &node.value, &dy, &mut grads)?;
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                    return Err(TensorError::Numeric(format!("non-finite gradient at node {i}, index {pos}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn push_back(&self, op: &Op, value: &Tensor, dy: &[f32], grads: &mut [Option<Vec<f32>>]) -> Result<()> {
        let mut send = |v: Var, g: Vec<f32>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let need_x = self.nodes[x.0].needs_grad;
                let g = conv::conv2d_backward(self.value(*x).data(), self.value(*w).data(), dy, geom, need_x);
                if let Some(dx) = g.input {
                    send(*x, dx);
                }
                send(*w, g.weight);
                if let Some(b) = b {
                    send(*b, g.bias);
                }
            }
            Op::Relu(x) => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect();
                send(*x, dx);
            }
            Op::MaxPool { x, map } => {
                let (h, w) = map.in_hw;
                let dx = pool::unpool_forward(dy, &map.indices, map.batch * map.channels, h, w);
                send(*x, dx);
            }
            Op::Unpool { x, map } => {
                let (h, w) = map.in_hw;
                send(*x, pool::gather(dy, &map.indices, map.batch * map.channels, h, w));
            }
            Op::BatchNorm { x, gamma, beta, mean, inv_std, batch_stats } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let g = norm::normalize_backward(
                    self.value(*x).data(),
                    dy,
                    n,
                    c,
                    h * w,
                    mean,
                    inv_std,
                    self.value(*gamma).data(),
                    *batch_stats,
                );
                send(*x, g.input);
                send(*gamma, g.gamma);
                send(*beta, g.beta);
            }
            Op::Add(a, b) => {
                send(*a, dy.to_vec());
                send(*b, dy.to_vec());
            }
            Op::Scale(x, f) => send(*x, dy.iter().map(|d| d * f).collect()),
            Op::Concat(parts) => {
                let (n, _, h, w) = value.dims4()?;
                let plane = h * w;
                let total = value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    let mut g = Vec::with_capacity(n * c * plane);
                    for b in 0..n {
                        let start = (b * total + offset) * plane;
                        g.extend_from_slice(&dy[start..start + c * plane]);
                    }
                    offset += c;
                    send(p, g);
                }
            }
            Op::Resize { x, from, to } => {
                let (n, c, _, _) = value.dims4()?;
                send(*x, resize::bilinear_backward(dy, n * c, *from, *to));
            }
            Op::CrossEntropy { logits, labels, probs, counted, ignore } => {
                let (n, k, h, w) = self.value(*logits).dims4()?;
                let g = loss::softmax_cross_entropy_backward(probs, labels, n, k, h * w, *ignore, *counted, dy[0]);
                send(*logits, g);
            }
            Op::WeightedSum { x, weights } => send(*x, weights.iter().map(|w| w * dy[0]).collect()),
        }
        Ok(())
    }

    /// Adds tape gradients of every parameter leaf into the store's buffers.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) -> Result<()> {
        for &(v, id) in &self.param_links {
            if let Some(g) = grads.get(v) {
                store.get_mut(id).tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// Channel softmax of an `N, K, H, W` tensor.
pub fn softmax(t: &Tensor) -> Result<Tensor> {
    let (n, k, h, w) = t.dims4()?;
    Tensor::new(t.shape(), loss::softmax_channels(t.data(), n, k, h * w))
}

/// Bilinear resize outside the tape.
pub fn resize_bilinear(t: &Tensor, out_hw: (usize, usize)) -> Result<Tensor> {
    let (n, c, h, w) = t.dims4()?;
    if out_hw.0 == 0 || out_hw.1 == 0 {
        return dim_err("resize: output dims must be positive");
    }
    Tensor::new(&[n, c, out_hw.0, out_hw.1], resize::bilinear_forward(t.data(), n * c, (h, w), out_hw))
}
