use mapfuse_tensor::{Graph, IndexMap, ParamStore};

use super::arch::ArchSpec;
use super::layers::{Conv, Ctx, Decoder, Encoder};
use super::{check_divisible, spatial, ModelInputs, ModelOutput, SegmentationModel};
use crate::error::{Error, Result};

/// Dual-encoder network. After each block's conv stack the ancillary
/// (map) activations are added into the main (optical) activations; the sum
/// is pooled and its indices drive the single decoder.
pub struct FuseNetMini {
    arch: ArchSpec,
    store: ParamStore,
    pub encoder: Encoder,
    pub aux_encoder: Encoder,
    pub decoder: Decoder,
    pub classifier: Conv,
}

impl FuseNetMini {
    pub fn new(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, "encoder", arch.optical_channels, &arch.widths, arch.batch_norm, seed)?;
        let aux_encoder = Encoder::new(&mut store, "aux_encoder", arch.layer_channels, &arch.widths, arch.batch_norm, seed)?;
        let decoder = Decoder::new(&mut store, "decoder", &arch.widths, arch.decoder_trunc, arch.batch_norm, seed)?;
        let classifier = Conv::new(&mut store, "classifier", decoder.out_channels(&arch.widths), arch.num_classes, 3, seed)?;
        Ok(Self { arch: arch.clone(), store, encoder, aux_encoder, decoder, classifier })
    }
}

impl SegmentationModel for FuseNetMini {
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
        let (opt_hw, osm_hw) = (spatial(ctx.graph, inputs.optical)?, spatial(ctx.graph, inputs.layers)?);
        if opt_hw != osm_hw {
            return Err(Error::Dimension(format!("optical {opt_hw:?} and map layers {osm_hw:?} differ in size")));
        }
        check_divisible(ctx.graph, inputs.optical, self.arch.input_multiple())?;
        let depth = self.encoder.blocks.len();
        let (mut main, mut aux) = (inputs.optical, inputs.layers);
        let mut maps: Vec<IndexMap> = Vec::with_capacity(depth);
        for (i, (b_opt, b_osm)) in self.encoder.blocks.iter().zip(&self.aux_encoder.blocks).enumerate() {
            let f_opt = b_opt.forward(&mut ctx, main)?;
            let f_osm = b_osm.forward(&mut ctx, aux)?;
            let fused = ctx.graph.add(f_opt, f_osm)?;
            let (pooled, map) = ctx.graph.max_pool2x2(fused)?;
            maps.push(map);
            main = pooled;
            if i + 1 < depth {
                aux = ctx.graph.max_pool2x2(f_osm)?.0;
            }
        }
        let features = self.decoder.forward(&mut ctx, main, &maps)?;
        let scores = self.classifier.forward(&mut ctx, features)?;
        Ok(ModelOutput { scores, features })
    }
}
