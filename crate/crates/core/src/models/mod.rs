//! Segmentation architectures behind a common trait, selected by name
//! through [`ModelRegistry`].

pub mod arch;
pub mod fusenet;
pub mod fusion;
pub mod layers;
pub mod osmnet;
pub mod segnet;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use mapfuse_tensor::checkpoint::{read_checkpoint, write_checkpoint};
use mapfuse_tensor::{Graph, ParamStore, Var};

pub use arch::ArchSpec;
pub use fusenet::FuseNetMini;
pub use fusion::{fuse_average, fuse_residual, AverageModel, Corrector, ResidualCorrectionModel};
pub use osmnet::{OsmNet, OsmNetModel};
pub use segnet::{MiniSegNet, SegNetModel};

use crate::error::{Error, Result};

/// Inputs already placed on the tape. Models ignore the modality they do not use.
#[derive(Clone, Copy, Debug)]
pub struct ModelInputs {
    pub optical: Var,
    pub layers: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    /// Pre-softmax class scores, `N, K, H / d, W / d`.
    pub scores: Var,
    /// Last feature map before the classifier.
    pub features: Var,
}

pub trait SegmentationModel: Send + Sync {
    fn arch(&self) -> &ArchSpec;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Input-to-output resolution ratio.
    fn output_divisor(&self) -> usize;
    fn forward(&self, graph: &mut Graph, inputs: ModelInputs, train: bool) -> Result<ModelOutput>;

    fn name(&self) -> &str {
        &self.arch().model
    }

    /// False for models that never read the map-layer input.
    fn uses_layers(&self) -> bool {
        true
    }
}

pub type ModelBuilder = fn(&ArchSpec, u64) -> Result<Box<dyn SegmentationModel>>;

struct Entry {
    name: &'static str,
    aliases: &'static [&'static str],
    builder: ModelBuilder,
}

/// Name-indexed model constructors.
pub struct ModelRegistry {
    entries: Vec<Entry>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("segnet", &["segnet_only"], |a, s| Ok(Box::new(SegNetModel::new(a, s)?)));
        r.register("osmnet", &["osmnet_only"], |a, s| Ok(Box::new(OsmNetModel::new(a, s)?)));
        r.register("average", &[], |a, s| Ok(Box::new(AverageModel::new(a, s)?)));
        r.register("rescorr", &["residual_correction"], |a, s| Ok(Box::new(ResidualCorrectionModel::new(a, s)?)));
        r.register("fusenet", &[], |a, s| Ok(Box::new(FuseNetMini::new(a, s)?)));
        r
    }
}

impl ModelRegistry {
    pub fn register(&mut self, name: &'static str, aliases: &'static [&'static str], builder: ModelBuilder) {
        self.entries.retain(|e| e.name != name);
        self.entries.push(Entry { name, aliases, builder });
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    /// Canonical name for `name` or one of its aliases.
    pub fn resolve(&self, name: &str) -> Result<&'static str> {
        self.entries
            .iter()
            .find(|e| e.name == name || e.aliases.contains(&name))
            .map(|e| e.name)
            .ok_or_else(|| Error::Config(format!("unknown model `{name}`; known: {}", self.names().join(", "))))
    }

    pub fn uses_layers(&self, name: &str) -> Result<bool> {
        Ok(self.build(name, &ArchSpec::default(), 0)?.uses_layers())
    }

    /// Builds a freshly initialized model. `arch.model` is overwritten with
    /// the canonical name.
    pub fn build(&self, name: &str, arch: &ArchSpec, seed: u64) -> Result<Box<dyn SegmentationModel>> {
        let canonical = self.resolve(name)?;
        let entry = self.entries.iter().find(|e| e.name == canonical).expect("resolved");
        let mut arch = arch.clone();
        arch.model = canonical.to_string();
        (entry.builder)(&arch, seed)
    }
}

pub(crate) fn spatial(graph: &Graph, v: Var) -> Result<(usize, usize)> {
    let (_, _, h, w) = graph.value(v).dims4()?;
    Ok((h, w))
}

pub(crate) fn check_divisible(graph: &Graph, v: Var, multiple: usize) -> Result<()> {
    let (h, w) = spatial(graph, v)?;
    if h % multiple != 0 || w % multiple != 0 {
        return Err(Error::Dimension(format!("input {h}x{w} is not divisible by {multiple}")));
    }
    Ok(())
}

pub(crate) fn check_channels(graph: &Graph, v: Var, expected: usize, what: &str) -> Result<()> {
    let c = graph.value(v).shape()[1];
    if c != expected {
        return Err(Error::Dimension(format!("{what}: expected {expected} channels, got {c}")));
    }
    Ok(())
}

/// Writes `arch.json` and `checkpoint.mfw` into `dir`.
pub fn save_model(model: &dyn SegmentationModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let arch_path = dir.join("arch.json");
    let json = serde_json::to_string_pretty(model.arch())?;
    std::fs::write(&arch_path, json + "\n").map_err(|e| Error::io(&arch_path, e))?;
    let ckpt = dir.join("checkpoint.mfw");
    let file = File::create(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    write_checkpoint(model.params(), BufWriter::new(file))?;
    Ok(())
}

/// Rebuilds a model from a directory written by [`save_model`].
pub fn load_model(registry: &ModelRegistry, dir: &Path) -> Result<Box<dyn SegmentationModel>> {
    let arch_path = dir.join("arch.json");
    let text = std::fs::read_to_string(&arch_path).map_err(|e| Error::io(&arch_path, e))?;
    let arch: ArchSpec = serde_json::from_str(&text)?;
    let mut model = registry.build(&arch.model, &arch, 0)?;
    let ckpt = dir.join("checkpoint.mfw");
    let file = File::open(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    let entries = read_checkpoint(BufReader::new(file))?;
    model.params_mut().load_named(entries)?;
    Ok(model)
}
