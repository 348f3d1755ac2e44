use mapfuse_tensor::{Graph, ParamStore, Var};

use super::arch::ArchSpec;
use super::layers::{Conv, Ctx};
use super::{check_channels, ModelInputs, ModelOutput, SegmentationModel};
use crate::error::Result;

/// Two-layer FCN from map layers to class scores: conv, ReLU, conv.
#[derive(Clone, Debug)]
pub struct OsmNet {
    pub first: Conv,
    pub second: Conv,
    layer_channels: usize,
}

impl OsmNet {
    pub fn new(store: &mut ParamStore, arch: &ArchSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            first: Conv::new(store, "osmnet.conv0", arch.layer_channels, arch.osmnet_hidden, 3, seed)?,
            second: Conv::new(store, "osmnet.conv1", arch.osmnet_hidden, arch.num_classes, 3, seed)?,
            layer_channels: arch.layer_channels,
        })
    }

    /// Returns `(hidden activations, class scores)` at input resolution.
    pub fn forward(&self, ctx: &mut Ctx, layers: Var) -> Result<(Var, Var)> {
        check_channels(ctx.graph, layers, self.layer_channels, "map layers")?;
        let h = self.first.forward(ctx, layers)?;
        let z = ctx.graph.relu(h)?;
        let scores = self.second.forward(ctx, z)?;
        Ok((z, scores))
    }
}

/// Map-only model.
pub struct OsmNetModel {
    arch: ArchSpec,
    store: ParamStore,
    net: OsmNet,
}

impl OsmNetModel {
    pub fn new(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let net = OsmNet::new(&mut store, arch, seed)?;
        Ok(Self { arch: arch.clone(), store, net })
    }
}

impl SegmentationModel for OsmNetModel {
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
        1
    }

    fn forward(&self, graph: &mut Graph, inputs: ModelInputs, train: bool) -> Result<ModelOutput> {
        let mut ctx = Ctx { graph, store: &self.store, train };
        let (features, scores) = self.net.forward(&mut ctx, inputs.layers)?;
        Ok(ModelOutput { scores, features })
    }
}
