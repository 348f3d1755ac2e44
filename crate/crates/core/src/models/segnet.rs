use mapfuse_tensor::{Graph, IndexMap, ParamStore, Var};

use super::arch::ArchSpec;
use super::layers::{Conv, Ctx, Decoder, Encoder};
use super::{check_divisible, ModelInputs, ModelOutput, SegmentationModel};
use crate::error::Result;

/// Encoder-decoder with index-passing unpooling.
#[derive(Clone, Debug)]
pub struct MiniSegNet {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub classifier: Conv,
    depth: usize,
}

impl MiniSegNet {
    pub fn new(store: &mut ParamStore, arch: &ArchSpec, seed: u64) -> Result<Self> {
        let encoder = Encoder::new(store, "encoder", arch.optical_channels, &arch.widths, arch.batch_norm, seed)?;
        let decoder = Decoder::new(store, "decoder", &arch.widths, arch.decoder_trunc, arch.batch_norm, seed)?;
        let classifier = Conv::new(store, "classifier", decoder.out_channels(&arch.widths), arch.num_classes, 3, seed)?;
        Ok(Self { encoder, decoder, classifier, depth: arch.widths.len() })
    }

    /// Returns `(last decoder feature map, class scores)`.
    pub fn forward(&self, ctx: &mut Ctx, optical: Var) -> Result<(Var, Var)> {
        check_divisible(ctx.graph, optical, 1 << self.depth)?;
        let mut x = optical;
        let mut maps: Vec<IndexMap> = Vec::with_capacity(self.depth);
        for block in &self.encoder.blocks {
            let features = block.forward(ctx, x)?;
            let (pooled, map) = ctx.graph.max_pool2x2(features)?;
            maps.push(map);
            x = pooled;
        }
        let z = self.decoder.forward(ctx, x, &maps)?;
        let scores = self.classifier.forward(ctx, z)?;
        Ok((z, scores))
    }
}

/// Optical-only baseline.
pub struct SegNetModel {
    arch: ArchSpec,
    store: ParamStore,
    net: MiniSegNet,
}

impl SegNetModel {
    pub fn new(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let net = MiniSegNet::new(&mut store, arch, seed)?;
        Ok(Self { arch: arch.clone(), store, net })
    }
}

impl SegmentationModel for SegNetModel {
    fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    fn uses_layers(&self) -> bool {
        false
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
        let (features, scores) = self.net.forward(&mut ctx, inputs.optical)?;
        Ok(ModelOutput { scores, features })
    }
}
