//! Patch sampling, augmentation, learning-rate schedules and the training loop.

mod trainlog;
mod sampler;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mapfuse_tensor::{name_seed, Adam, Graph, Optimizer, Sgd, Tensor};

use crate::encoding::PreparedScene;
use crate::error::{Error, Result};
use crate::inference::{fit_window, plan_tiling, predict_tile};
use crate::metrics::{accumulate, ConfusionMatrix};
use crate::models::{ArchSpec, ModelInputs, ModelRegistry, SegmentationModel};
use crate::rasters::UNDEFINED;

pub use trainlog::{IterationRecord, TrainLog, TrainSummary, ValidationRecord};
pub use sampler::{apply_flip, augment, crop_patch, sample_patch, Flip, Patch, MAX_SAMPLING_ATTEMPTS};

/// Parameter-name prefixes trained at `encoder_lr_ratio` times the base rate.
pub const ENCODER_PREFIXES: [&str; 2] = ["encoder.", "aux_encoder."];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    /// Registered optimizer name: `sgd` (step decay) or `adam` (constant rate).
    pub optimizer: String,
    pub base_lr: f64,
    pub momentum: f32,
    /// SGD divides the rate by `lr_decay_factor` every `lr_decay_epochs`.
    pub lr_decay_epochs: usize,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    /// Overrides the pixel-count epoch length.
    pub iterations_per_epoch: Option<usize>,
    pub min_annotated_fraction: f64,
    pub augment: bool,
    pub seed: u64,
    pub encoder_lr_ratio: f32,
    pub bn_momentum: f32,
    /// Batches used to re-estimate BatchNorm running statistics at fixed
    /// weights before each validation and at the end of training; 0 keeps
    /// the moving averages.
    pub bn_recalibration_batches: usize,
    /// Validation interval in iterations; `None` validates at every epoch end.
    pub validate_every: Option<usize>,
    /// Window for validation tiling (no overlap); clipped to the scene.
    pub validation_window: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 128,
            batch_size: 10,
            optimizer: "sgd".into(),
            base_lr: 0.01,
            momentum: 0.9,
            lr_decay_epochs: 2,
            lr_decay_factor: 10.0,
            epochs: 4,
            iterations_per_epoch: None,
            min_annotated_fraction: 0.0,
            augment: true,
            seed: 0,
            encoder_lr_ratio: 0.5,
            bn_momentum: 0.1,
            bn_recalibration_batches: 20,
            validate_every: None,
            validation_window: 256,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    /// Settings for sparse annotations: Adam at a constant rate and the 5% patch filter.
    pub fn sparse() -> Self {
        Self { optimizer: "adam".into(), min_annotated_fraction: 0.05, ..Self::default() }
    }

    pub fn validate(&self, arch: &ArchSpec) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.patch_size % arch.input_multiple() != 0 {
            return bad(format!("patch size {} must be a multiple of {}", self.patch_size, arch.input_multiple()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.lr_decay_epochs == 0 {
            return bad("batch size, epochs and decay interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_annotated_fraction) {
            return bad(format!("min_annotated_fraction {} outside [0, 1]", self.min_annotated_fraction));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) || !(self.lr_decay_factor > 0.0) {
            return bad("learning rate settings must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.encoder_lr_ratio >= 0.0) {
            return bad("bn_momentum must lie in [0, 1] and encoder_lr_ratio be non-negative".into());
        }
        if self.iterations_per_epoch == Some(0) || self.validate_every == Some(0) {
            return bad("iteration counts must be positive".into());
        }
        Ok(())
    }

    pub fn decays(&self) -> bool {
        self.optimizer == "sgd"
    }

    /// Iterations per epoch: the override, or enough batches to cover every
    /// labeled pixel once on average.
    pub fn epoch_length(&self, labeled_pixels: usize) -> usize {
        self.iterations_per_epoch.unwrap_or_else(|| {
            let per_batch = self.patch_size * self.patch_size * self.batch_size;
            labeled_pixels.div_ceil(per_batch).max(1)
        })
    }
}

/// Learning rate in effect during `epoch`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    if config.decays() {
        config.base_lr / config.lr_decay_factor.powi((epoch / config.lr_decay_epochs) as i32)
    } else {
        config.base_lr
    }
}

type OptimizerBuilder = fn(&TrainConfig) -> Box<dyn Optimizer>;

/// Name-indexed optimizer constructors.
pub struct OptimizerRegistry {
    entries: Vec<(&'static str, OptimizerBuilder)>,
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("sgd", |c| Box::new(Sgd::new(c.momentum)));
        r.register("adam", |_| Box::new(Adam::default()));
        r
    }
}

impl OptimizerRegistry {
    pub fn register(&mut self, name: &'static str, builder: OptimizerBuilder) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, builder));
    }

    pub fn build(&self, config: &TrainConfig) -> Result<Box<dyn Optimizer>> {
        self.entries
            .iter()
            .find(|(n, _)| *n == config.optimizer)
            .map(|(_, b)| b(config))
            .ok_or_else(|| {
                let known: Vec<_> = self.entries.iter().map(|(n, _)| *n).collect();
                Error::Config(format!("unknown optimizer `{}`; known: {}", config.optimizer, known.join(", ")))
            })
    }
}

/// Stacks patches into `N, C, H, W` tensors plus flat labels.
pub fn batch_tensors(patches: &[Patch]) -> Result<(Tensor, Tensor, Vec<u8>)> {
    let n = patches.len();
    let s = patches[0].size;
    let plane = s * s;
    let oc = patches[0].optical.len() / plane;
    let lc = patches[0].layers.len() / plane;
    let optical = Tensor::new(&[n, oc, s, s], patches.iter().flat_map(|p| p.optical.iter().copied()).collect())?;
    let layers = Tensor::new(&[n, lc, s, s], patches.iter().flat_map(|p| p.layers.iter().copied()).collect())?;
    let labels = patches.iter().flat_map(|p| p.labels.iter().copied()).collect();
    Ok((optical, layers, labels))
}

fn diverged(iteration: usize, e: Error) -> Error {
    if e.is_numeric() {
        Error::Diverged(format!("iteration {iteration}: {e}"))
    } else {
        e
    }
}

/// Masked cross-entropy of one batch, scores upsampled to label resolution
/// when the model predicts coarser than its input. Returns the loss and the
/// graph holding it.
pub fn batch_loss(
    model: &dyn SegmentationModel,
    optical: Tensor,
    layers: Tensor,
    labels: &[u8],
    train: bool,
) -> Result<(Graph, mapfuse_tensor::Var)> {
    let (_, _, h, w) = optical.dims4()?;
    let mut graph = Graph::new();
    let inputs = ModelInputs { optical: graph.input(optical)?, layers: graph.input(layers)? };
    let out = model.forward(&mut graph, inputs, train)?;
    let mut scores = out.scores;
    let (_, _, sh, sw) = graph.value(scores).dims4()?;
    if (sh, sw) != (h, w) {
        scores = graph.resize_bilinear(scores, (h, w))?;
    }
    let loss = graph.softmax_cross_entropy(scores, labels, UNDEFINED)?;
    Ok((graph, loss))
}

/// Overall accuracy over non-overlapping windows of every scene.
pub fn validation_accuracy(model: &dyn SegmentationModel, scenes: &[PreparedScene], window: usize) -> Result<f64> {
    let mut cm = ConfusionMatrix::new(model.arch().num_classes);
    for s in scenes {
        let win = fit_window(window, s.dims(), model.arch().input_multiple())?;
        let plan = plan_tiling(s.dims(), win, win)?;
        let (_, labels) = predict_tile(model, &s.optical, &s.layers, &plan)?;
        accumulate(&mut cm, &labels, &s.labels)?;
    }
    Ok(cm.overall_accuracy().unwrap_or(0.0))
}

fn check_scene_channels(arch: &ArchSpec, scenes: &[PreparedScene]) -> Result<()> {
    for s in scenes {
        if s.optical.channels != arch.optical_channels || s.layers.channels != arch.layer_channels {
            return Err(Error::Dimension(format!(
                "scene {} has {}+{} channels, model expects {}+{}",
                s.id, s.optical.channels, s.layers.channels, arch.optical_channels, arch.layer_channels
            )));
        }
        s.labels.validate(arch.num_classes)?;
    }
    Ok(())
}

/// Trains a freshly built model; validation OA is measured on `validation`
/// (skipped when empty).
pub fn train(
    registry: &ModelRegistry,
    model_name: &str,
    arch: &ArchSpec,
    scenes: &[PreparedScene],
    validation: &[PreparedScene],
    config: &TrainConfig,
) -> Result<(Box<dyn SegmentationModel>, TrainLog)> {
    arch.validate()?;
    config.validate(arch)?;
    if scenes.is_empty() {
        return Err(Error::Config("no training scenes".into()));
    }
    check_scene_channels(arch, scenes)?;
    check_scene_channels(arch, validation)?;
    let mut model = registry.build(model_name, arch, config.seed)?;
    for prefix in ENCODER_PREFIXES {
        model.params_mut().set_lr_scale_by_prefix(prefix, config.encoder_lr_ratio);
    }
    let log = train_model(model.as_mut(), scenes, validation, config)?;
    Ok((model, log))
}

/// Replaces BatchNorm running statistics by their average over fresh
/// training batches, at the current weights. The moving averages lag behind
/// weights that are still changing quickly.
pub fn recalibrate_batch_norm(
    model: &mut dyn SegmentationModel,
    scenes: &[PreparedScene],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for k in 0..config.bn_recalibration_batches {
        let mut patches = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let scene = &scenes[rng.random_range(0..scenes.len())];
            patches.push(sample_patch(scene, config.patch_size, config.min_annotated_fraction, rng)?);
        }
        let (optical, layers, _) = batch_tensors(&patches)?;
        let mut graph = Graph::new();
        let inputs = ModelInputs { optical: graph.input(optical)?, layers: graph.input(layers)? };
        model.forward(&mut graph, inputs, true)?;
        let updates = graph.take_running_updates();
        if updates.is_empty() {
            return Ok(());
        }
        model.params_mut().apply_running_updates(&updates, 1.0 / (k + 1) as f32);
    }
    Ok(())
}

/// Runs the training loop on an existing model.
pub fn train_model(
    model: &mut dyn SegmentationModel,
    scenes: &[PreparedScene],
    validation: &[PreparedScene],
    config: &TrainConfig,
) -> Result<TrainLog> {
    let started = Instant::now();
    let mut optimizer = OptimizerRegistry::default().build(config)?;
    let labeled: usize = scenes.iter().map(|s| s.labels.labeled_count()).sum();
    let per_epoch = config.epoch_length(labeled);
    let total = per_epoch * config.epochs;
    let validate_every = config.validate_every.unwrap_or(per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(config.seed, "train.sampler"));
    let mut bn_rng = ChaCha8Rng::seed_from_u64(name_seed(config.seed, "train.bn"));
    let mut log = TrainLog { model: model.name().to_string(), iterations_per_epoch: per_epoch, ..TrainLog::default() };

    for it in 0..total {
        let epoch = it / per_epoch;
        let lr = lr_at(epoch, config);
        let mut patches = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let scene = &scenes[rng.random_range(0..scenes.len())];
            let mut p = sample_patch(scene, config.patch_size, config.min_annotated_fraction, &mut rng)?;
            if config.augment {
                augment(&mut p, &mut rng);
            }
            patches.push(p);
        }
        let (optical, layers, labels) = batch_tensors(&patches)?;
        let step = || -> Result<f64> {
            let (mut graph, loss) = batch_loss(&*model, optical, layers, &labels, true)?;
            let value = graph.scalar(loss);
            let grads = graph.backward(loss)?;
            let store = model.params_mut();
            store.zero_grad();
            graph.accumulate_param_grads(&grads, store)?;
            store.apply_running_updates(&graph.take_running_updates(), config.bn_momentum);
            optimizer.step(store, lr as f32)?;
            Ok(value)
        };
        let loss = step().map_err(|e| diverged(it, e))?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("iteration {it}: loss is {loss}")));
        }
        log.iterations.push(IterationRecord { iteration: it, epoch, loss, lr });
        if config.log_every > 0 && (it + 1) % config.log_every == 0 {
            ::log::info!("{} it {}/{total} loss {:.4} lr {lr}", log.model, it + 1, log.recent_loss(config.log_every).unwrap());
        }
        let last = it + 1 == total;
        let validate = !validation.is_empty() && ((it + 1) % validate_every == 0 || last);
        if validate || last {
            recalibrate_batch_norm(model, scenes, config, &mut bn_rng).map_err(|e| diverged(it, e))?;
        }
        if validate {
            let oa = validation_accuracy(&*model, validation, config.validation_window).map_err(|e| diverged(it, e))?;
            ::log::info!("{} it {} validation OA {:.2}%", log.model, it + 1, 100.0 * oa);
            log.validation.push(ValidationRecord { iteration: it + 1, epoch, overall_accuracy: oa });
        }
    }
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_schedule() {
        let c = TrainConfig::default();
        let lrs: Vec<f64> = (0..6).map(|e| lr_at(e, &c)).collect();
        let expect = [0.01, 0.01, 0.001, 0.001, 0.0001, 0.0001];
        for (a, b) in lrs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(lr_at(7, &TrainConfig::sparse()), 0.01);
    }

    #[test]
    fn epoch_length_from_pixels() {
        let c = TrainConfig::default();
        assert_eq!(c.epoch_length(20 * 256 * 256), 8);
        assert_eq!(c.epoch_length(1), 1);
        let o = TrainConfig { iterations_per_epoch: Some(50), ..c };
        assert_eq!(o.epoch_length(1), 50);
    }

    #[test]
    fn unknown_optimizer() {
        let c = TrainConfig { optimizer: "lbfgs".into(), ..TrainConfig::default() };
        assert!(matches!(OptimizerRegistry::default().build(&c), Err(Error::Config(_))));
    }
}
