//! Late fusion of an optical and a map branch: plain score averaging and
//! averaging followed by a learned residual correction.

use mapfuse_tensor::{Graph, ParamStore, Var};

use super::arch::ArchSpec;
use super::layers::{Conv, Ctx};
use super::osmnet::OsmNet;
use super::segnet::MiniSegNet;
use super::{spatial, ModelInputs, ModelOutput, SegmentationModel};
use crate::error::{Error, Result};

/// Elementwise mean of two pre-softmax score maps.
pub fn fuse_average(graph: &mut Graph, scores_opt: Var, scores_osm: Var) -> Result<Var> {
    let (a, b) = (graph.value(scores_opt).shape(), graph.value(scores_osm).shape());
    if a != b {
        return Err(Error::Dimension(format!("cannot average score maps {a:?} and {b:?}")));
    }
    let sum = graph.add(scores_opt, scores_osm)?;
    Ok(graph.scale(sum, 0.5)?)
}

/// Three-layer correction network over concatenated feature maps.
#[derive(Clone, Debug)]
pub struct Corrector {
    pub convs: [Conv; 3],
    in_channels: usize,
}

impl Corrector {
    pub fn new(store: &mut ParamStore, in_channels: usize, widths: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let convs = [
            Conv::new(store, "corrector.conv0", in_channels, widths[0], 3, seed)?,
            Conv::new(store, "corrector.conv1", widths[0], widths[1], 3, seed)?,
            Conv::new(store, "corrector.conv2", widths[1], classes, 3, seed)?,
        ];
        Ok(Self { convs, in_channels })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut y = self.convs[0].forward(ctx, x)?;
        y = ctx.graph.relu(y)?;
        y = self.convs[1].forward(ctx, y)?;
        y = ctx.graph.relu(y)?;
        self.convs[2].forward(ctx, y)
    }
}

/// `scores_avg + C(concat(z_opt, z_osm))`. `z_osm` is resized to the spatial
/// dims of `z_opt` when they differ.
pub fn fuse_residual(ctx: &mut Ctx, scores_avg: Var, z_opt: Var, z_osm: Var, corrector: &Corrector) -> Result<Var> {
    let hw = spatial(ctx.graph, z_opt)?;
    let z_osm = if spatial(ctx.graph, z_osm)? != hw { ctx.graph.resize_bilinear(z_osm, hw)? } else { z_osm };
    let channels = ctx.graph.value(z_opt).shape()[1] + ctx.graph.value(z_osm).shape()[1];
    if channels != corrector.in_channels {
        return Err(Error::Dimension(format!(
            "corrector expects {} channels, features provide {channels}",
            corrector.in_channels
        )));
    }
    let joined = ctx.graph.concat_channels(&[z_opt, z_osm])?;
    let correction = corrector.forward(ctx, joined)?;
    if ctx.graph.value(correction).shape() != ctx.graph.value(scores_avg).shape() {
        return Err(Error::Dimension("corrector output does not match the averaged prediction".into()));
    }
    Ok(ctx.graph.add(scores_avg, correction)?)
}

struct Branches {
    segnet: MiniSegNet,
    osmnet: OsmNet,
}

impl Branches {
    fn new(store: &mut ParamStore, arch: &ArchSpec, seed: u64) -> Result<Self> {
        Ok(Self { segnet: MiniSegNet::new(store, arch, seed)?, osmnet: OsmNet::new(store, arch, seed)? })
    }

    /// Runs both branches and aligns the map branch to the optical resolution.
    fn forward(&self, ctx: &mut Ctx, inputs: ModelInputs) -> Result<[Var; 4]> {
        let (z_opt, s_opt) = self.segnet.forward(ctx, inputs.optical)?;
        let (z_osm, mut s_osm) = self.osmnet.forward(ctx, inputs.layers)?;
        let hw = spatial(ctx.graph, s_opt)?;
        if spatial(ctx.graph, s_osm)? != hw {
            s_osm = ctx.graph.resize_bilinear(s_osm, hw)?;
        }
        Ok([z_opt, s_opt, z_osm, s_osm])
    }
}

/// Coarse-to-fine averaging of the optical and map predictions.
pub struct AverageModel {
    arch: ArchSpec,
    store: ParamStore,
    branches: Branches,
}

impl AverageModel {
    pub fn new(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let branches = Branches::new(&mut store, arch, seed)?;
        Ok(Self { arch: arch.clone(), store, branches })
    }
}

impl SegmentationModel for AverageModel {
    fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn output_divisor(&self) -> usize {
        self.arch.output_divisor()
    }

    fn forward(&self, graph: &mut Graph, inputs: ModelInputs, train: bool) -> Result<ModelOutput> {
        let mut ctx = Ctx { graph, store: &self.store, train };
        let [z_opt, s_opt, _, s_osm] = self.branches.forward(&mut ctx, inputs)?;
        let scores = fuse_average(ctx.graph, s_opt, s_osm)?;
        Ok(ModelOutput { scores, features: z_opt })
    }
}

/// Averaging plus a jointly trained residual corrector.
pub struct ResidualCorrectionModel {
    arch: ArchSpec,
    store: ParamStore,
    branches: Branches,
    corrector: Corrector,
}

impl ResidualCorrectionModel {
    pub fn new(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let branches = Branches::new(&mut store, arch, seed)?;
        let z_opt = branches.segnet.decoder.out_channels(&arch.widths);
        let corrector = Corrector::new(&mut store, z_opt + arch.osmnet_hidden, &arch.corrector_widths, arch.num_classes, seed)?;
        Ok(Self { arch: arch.clone(), store, branches, corrector })
    }
}

impl SegmentationModel for ResidualCorrectionModel {
    fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn output_divisor(&self) -> usize {
        self.arch.output_divisor()
    }

    fn forward(&self, graph: &mut Graph, inputs: ModelInputs, train: bool) -> Result<ModelOutput> {
        let mut ctx = Ctx { graph, store: &self.store, train };
        let [z_opt, s_opt, z_osm, s_osm] = self.branches.forward(&mut ctx, inputs)?;
        let avg = fuse_average(ctx.graph, s_opt, s_osm)?;
        let scores = fuse_residual(&mut ctx, avg, z_opt, z_osm, &self.corrector)?;
        Ok(ModelOutput { scores, features: z_opt })
    }
}
