use mapfuse_tensor::{msra_init, name_seed, BnStats, Graph, IndexMap, ParamId, ParamStore, Tensor, Var};

use crate::error::Result;

/// Tape, parameters and mode for one forward pass.
pub struct Ctx<'a> {
    pub graph: &'a mut Graph,
    pub store: &'a ParamStore,
    pub train: bool,
}

/// Same-padded, stride-1 convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, kernel: usize, seed: u64) -> Result<Self> {
        let wname = format!("{name}.weight");
        let weight = store.add(&wname, Tensor::zeros(&[cout, cin, kernel, kernel]), true)?;
        msra_init(store.get_mut(weight), cin * kernel * kernel, name_seed(seed, &wname))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]), true)?;
        Ok(Self { weight, bias, kernel })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.graph.param(ctx.store, self.weight)?;
        let b = ctx.graph.param(ctx.store, self.bias)?;
        Ok(ctx.graph.conv2d(x, w, Some(b), 1, self.kernel / 2)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: BnStats,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true)?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true)?;
        let mean = store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false)?;
        let var = store.add(format!("{name}.running_var"), Tensor::full(&[channels], 1.0), false)?;
        Ok(Self { gamma, beta, stats: BnStats { mean, var } })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let gamma = ctx.graph.param(ctx.store, self.gamma)?;
        let beta = ctx.graph.param(ctx.store, self.beta)?;
        Ok(ctx.graph.batch_norm(x, gamma, beta, self.stats, ctx.store, ctx.train)?)
    }
}

/// conv, optional batch norm, ReLU.
#[derive(Clone, Debug)]
pub struct ConvUnit {
    pub conv: Conv,
    pub norm: Option<BatchNorm>,
}

impl ConvUnit {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, batch_norm: bool, seed: u64) -> Result<Self> {
        let conv = Conv::new(store, name, cin, cout, 3, seed)?;
        let norm = if batch_norm { Some(BatchNorm::new(store, &format!("{name}.bn"), cout)?) } else { None };
        Ok(Self { conv, norm })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut y = self.conv.forward(ctx, x)?;
        if let Some(bn) = &self.norm {
            y = bn.forward(ctx, y)?;
        }
        Ok(ctx.graph.relu(y)?)
    }
}

/// Chain of [`ConvUnit`]s.
#[derive(Clone, Debug)]
pub struct ConvStack {
    pub units: Vec<ConvUnit>,
}

impl ConvStack {
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], batch_norm: bool, seed: u64) -> Result<Self> {
        let units = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| ConvUnit::new(store, &format!("{name}.conv{i}"), w[0], w[1], batch_norm, seed))
            .collect::<Result<_>>()?;
        Ok(Self { units })
    }

    pub fn forward(&self, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        for u in &self.units {
            x = u.forward(ctx, x)?;
        }
        Ok(x)
    }
}

/// Encoder: `B` blocks of two conv units; pooling is left to the caller so
/// that fusion can happen between the conv stack and the pool.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub blocks: Vec<ConvStack>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, name: &str, in_channels: usize, widths: &[usize], batch_norm: bool, seed: u64) -> Result<Self> {
        let mut prev = in_channels;
        let mut blocks = Vec::with_capacity(widths.len());
        for (i, &w) in widths.iter().enumerate() {
            blocks.push(ConvStack::new(store, &format!("{name}.{i}"), &[prev, w, w], batch_norm, seed)?);
            prev = w;
        }
        Ok(Self { blocks })
    }
}

/// Mirrored decoder. Level `i` unpools with the indices of encoder block `i`
/// and maps `widths[i]` channels to `widths[i - 1]` (or `widths[0]`).
/// Levels below `trunc` are omitted.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub levels: Vec<(usize, ConvStack)>,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], trunc: usize, batch_norm: bool, seed: u64) -> Result<Self> {
        let mut levels = Vec::new();
        for i in (trunc..widths.len()).rev() {
            let out = widths[i.saturating_sub(1)];
            let stack = ConvStack::new(store, &format!("{name}.{i}"), &[widths[i], widths[i], out], batch_norm, seed)?;
            levels.push((i, stack));
        }
        Ok(Self { levels })
    }

    pub fn out_channels(&self, widths: &[usize]) -> usize {
        match self.levels.last() {
            Some((i, _)) => widths[i.saturating_sub(1)],
            None => widths[widths.len() - 1],
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, mut x: Var, maps: &[IndexMap]) -> Result<Var> {
        for (level, stack) in &self.levels {
            let map = &maps[*level];
            x = ctx.graph.unpool(x, map, map.in_hw)?;
            x = stack.forward(ctx, x)?;
        }
        Ok(x)
    }
}
