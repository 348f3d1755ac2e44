use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture descriptor, stored as JSON next to each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    /// Registry name of the model.
    pub model: String,
    pub num_classes: usize,
    pub optical_channels: usize,
    pub layer_channels: usize,
    /// Encoder block widths; the decoder mirrors them.
    pub widths: Vec<usize>,
    /// Number of full-resolution decoder levels removed.
    pub decoder_trunc: usize,
    pub batch_norm: bool,
    pub osmnet_hidden: usize,
    pub corrector_widths: Vec<usize>,
    /// Map-layer encoding the model was trained on.
    pub encoding: String,
    pub sdt_truncation: f32,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            model: "segnet".into(),
            num_classes: 6,
            optical_channels: 3,
            layer_channels: 4,
            widths: vec![16, 32, 64],
            decoder_trunc: 0,
            batch_norm: true,
            osmnet_hidden: 32,
            corrector_widths: vec![32, 32],
            encoding: "binary".into(),
            sdt_truncation: 32.0,
        }
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("encoder widths {:?} must be non-empty and positive", self.widths));
        }
        if self.decoder_trunc >= self.widths.len() {
            return bad(format!(
                "decoder truncation {} must be below the encoder depth {}",
                self.decoder_trunc,
                self.widths.len()
            ));
        }
        if self.num_classes == 0 || self.num_classes > 254 {
            return bad(format!("class count {} outside 1..=254", self.num_classes));
        }
        if self.optical_channels == 0 || self.layer_channels == 0 || self.osmnet_hidden == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.corrector_widths.len() != 2 || self.corrector_widths.contains(&0) {
            return bad("the corrector takes exactly two positive hidden widths".into());
        }
        Ok(())
    }

    /// Spatial input dims must be multiples of this.
    pub fn input_multiple(&self) -> usize {
        1 << self.widths.len()
    }

    /// Ratio of input resolution to score-map resolution for encoder-decoder models.
    pub fn output_divisor(&self) -> usize {
        1 << self.decoder_trunc
    }
}
