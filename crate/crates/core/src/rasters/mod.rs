//! Raster data model: label maps, multi-channel float rasters and binary
//! map layers with their encodings.

pub mod io;
pub mod ops;
pub mod palette;
pub mod sdt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_labels, read_mask, read_raster, write_labels, write_mask, write_raster};
pub use ops::{clip_high_percentile, erode_labels};
pub use sdt::signed_distance_transform;

/// Class id marking pixels without a reference label.
pub const UNDEFINED: u8 = 255;

/// Default SDT truncation, in pixels.
pub const DEFAULT_SDT_TRUNCATION: f32 = 32.0;

/// Per-pixel class ids; [`UNDEFINED`] marks missing annotations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Dimension(format!("{} labels for a {height}x{width} map", values.len())));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        Self { height, width, values: vec![class; height * width] }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }

    pub fn labeled_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != UNDEFINED).count()
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.labeled_count() as f64 / self.values.len() as f64
    }

    /// Checks that every defined id is below `classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self.values.iter().find(|&&v| v != UNDEFINED && v as usize >= classes) {
            Some(bad) => Err(Error::Label(format!("class id {bad} outside 0..{classes}"))),
            None => Ok(()),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> LabelMap {
        let mut values = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x0 + w]);
        }
        LabelMap { height: h, width: w, values }
    }
}

/// `C, H, W` float raster.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelRaster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl MultiChannelRaster {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 || data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {channels}x{height}x{width} raster",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("raster contains non-finite values".into()));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> MultiChannelRaster {
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            let src = self.channel(c);
            for y in y0..y0 + h {
                data.extend_from_slice(&src[y * self.width + x0..y * self.width + x0 + w]);
            }
        }
        MultiChannelRaster { channels: self.channels, height: h, width: w, data }
    }
}

/// Binary occupancy grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerEncoding {
    Binary,
    Sdt,
}

impl LayerEncoding {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "binary" => Ok(Self::Binary),
            "sdt" => Ok(Self::Sdt),
            other => Err(Error::Config(format!("unknown encoding `{other}` (expected binary or sdt)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::Sdt => "sdt",
        }
    }
}

pub fn default_layer_names() -> Vec<String> {
    ["roads", "buildings", "vegetation", "water"].iter().map(|s| s.to_string()).collect()
}

/// Named binary map layers of equal size.
#[derive(Clone, Debug, PartialEq)]
pub struct MapLayerSet {
    pub layer_names: Vec<String>,
    pub masks: Vec<BinaryMask>,
    pub encoding: LayerEncoding,
}

impl MapLayerSet {
    pub fn new(layer_names: Vec<String>, masks: Vec<BinaryMask>, encoding: LayerEncoding) -> Result<Self> {
        if layer_names.len() != masks.len() || masks.is_empty() {
            return Err(Error::Dimension(format!("{} names for {} masks", layer_names.len(), masks.len())));
        }
        let (h, w) = (masks[0].height, masks[0].width);
        if masks.iter().any(|m| (m.height, m.width) != (h, w)) {
            return Err(Error::Dimension("map layers differ in size".into()));
        }
        Ok(Self { layer_names, masks, encoding })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.masks[0].height, self.masks[0].width)
    }

    /// Encodes with `self.encoding`.
    pub fn encode(&self, sdt_truncation: f32) -> Result<MultiChannelRaster> {
        match self.encoding {
            LayerEncoding::Binary => Ok(encode_binary(self)),
            LayerEncoding::Sdt => encode_sdt(self, sdt_truncation),
        }
    }

    pub fn with_encoding(mut self, encoding: LayerEncoding) -> Self {
        self.encoding = encoding;
        self
    }
}

/// One channel per layer holding exactly 0.0 or 1.0.
pub fn encode_binary(layers: &MapLayerSet) -> MultiChannelRaster {
    let (h, w) = layers.dims();
    let data = layers
        .masks
        .iter()
        .flat_map(|m| m.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }))
        .collect();
    MultiChannelRaster { channels: layers.masks.len(), height: h, width: w, data }
}

/// One truncated, normalized signed-distance channel per layer.
pub fn encode_sdt(layers: &MapLayerSet, truncation: f32) -> Result<MultiChannelRaster> {
    let (h, w) = layers.dims();
    let mut data = Vec::with_capacity(layers.masks.len() * h * w);
    for m in &layers.masks {
        data.extend(signed_distance_transform(m, truncation)?);
    }
    Ok(MultiChannelRaster { channels: layers.masks.len(), height: h, width: w, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_set(masks: Vec<BinaryMask>) -> MapLayerSet {
        let names = (0..masks.len()).map(|i| format!("l{i}")).collect();
        MapLayerSet::new(names, masks, LayerEncoding::Binary).unwrap()
    }

    #[test]
    fn binary_encoding_matches_masks() {
        let mut masks = Vec::new();
        for l in 0..4 {
            let mut m = BinaryMask::empty(5, 5);
            for i in 0..25 {
                m.bits[i] = (i * (l + 3)) % 7 < 3;
            }
            masks.push(m);
        }
        let set = layer_set(masks.clone());
        let r = encode_binary(&set);
        assert_eq!((r.channels, r.height, r.width), (4, 5, 5));
        for (c, m) in masks.iter().enumerate() {
            for (v, &b) in r.channel(c).iter().zip(&m.bits) {
                assert_eq!(*v, if b { 1.0 } else { 0.0 });
                assert_eq!(*v > 0.5, b);
            }
        }
    }

    #[test]
    fn empty_and_full_layers() {
        let empty = BinaryMask::empty(3, 4);
        let full = BinaryMask { height: 3, width: 4, bits: vec![true; 12] };
        let r = encode_binary(&layer_set(vec![empty, full]));
        assert!(r.channel(0).iter().all(|&v| v == 0.0));
        assert!(r.channel(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let r = MapLayerSet::new(
            vec!["a".into(), "b".into()],
            vec![BinaryMask::empty(2, 2), BinaryMask::empty(3, 2)],
            LayerEncoding::Binary,
        );
        assert!(r.is_err());
    }

    #[test]
    fn label_validation() {
        let m = LabelMap::new(1, 3, vec![0, 5, UNDEFINED]).unwrap();
        assert!(m.validate(6).is_ok());
        assert!(matches!(m.validate(5), Err(Error::Label(_))));
    }
}
