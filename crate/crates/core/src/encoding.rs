//! Map-layer encodings behind a common trait, selected by name, and the
//! network-ready form of a scene.

use crate::dataset::SceneData;
use crate::error::{Error, Result};
use crate::rasters::{encode_binary, encode_sdt, LabelMap, MapLayerSet, MultiChannelRaster};

pub trait LayerEncoder: Send + Sync {
    fn name(&self) -> &'static str;
    fn encode(&self, layers: &MapLayerSet) -> Result<MultiChannelRaster>;
}

pub struct BinaryEncoder;

impl LayerEncoder for BinaryEncoder {
    fn name(&self) -> &'static str {
        "binary"
    }

    fn encode(&self, layers: &MapLayerSet) -> Result<MultiChannelRaster> {
        Ok(encode_binary(layers))
    }
}

pub struct SdtEncoder {
    pub truncation: f32,
}

impl LayerEncoder for SdtEncoder {
    fn name(&self) -> &'static str {
        "sdt"
    }

    fn encode(&self, layers: &MapLayerSet) -> Result<MultiChannelRaster> {
        encode_sdt(layers, self.truncation)
    }
}

type EncoderBuilder = fn(f32) -> Box<dyn LayerEncoder>;

pub struct EncoderRegistry {
    entries: Vec<(&'static str, EncoderBuilder)>,
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("binary", |_| Box::new(BinaryEncoder));
        r.register("sdt", |t| Box::new(SdtEncoder { truncation: t }));
        r
    }
}

impl EncoderRegistry {
    pub fn register(&mut self, name: &'static str, builder: EncoderBuilder) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, builder));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    /// `sdt_truncation` is ignored by encodings that have no such parameter.
    pub fn build(&self, name: &str, sdt_truncation: f32) -> Result<Box<dyn LayerEncoder>> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b(sdt_truncation))
            .ok_or_else(|| Error::Config(format!("unknown encoding `{name}`; known: {}", self.names().join(", "))))
    }
}

/// Scene with its map layers encoded as network input.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedScene {
    pub id: String,
    pub optical: MultiChannelRaster,
    pub layers: MultiChannelRaster,
    pub labels: LabelMap,
}

impl PreparedScene {
    pub fn new(scene: &SceneData, encoder: &dyn LayerEncoder) -> Result<Self> {
        let layers = encoder.encode(&scene.layers)?;
        let prepared = Self { id: scene.id.clone(), optical: scene.optical.clone(), layers, labels: scene.labels.clone() };
        prepared.check()?;
        Ok(prepared)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.optical.height, self.optical.width)
    }

    fn check(&self) -> Result<()> {
        let d = self.dims();
        if (self.layers.height, self.layers.width) != d || (self.labels.height, self.labels.width) != d {
            return Err(Error::Dimension(format!("scene {} modalities differ in size", self.id)));
        }
        Ok(())
    }
}

pub fn prepare_all(scenes: &[SceneData], encoder: &dyn LayerEncoder) -> Result<Vec<PreparedScene>> {
    scenes.iter().map(|s| PreparedScene::new(s, encoder)).collect()
}
