//! Class colors and binary PPM output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{LabelMap, UNDEFINED};

/// impervious, building, low vegetation, tree, car, clutter.
pub const CLASS_COLORS: [[u8; 3]; 6] = [
    [255, 255, 255],
    [0, 0, 255],
    [0, 255, 255],
    [0, 255, 0],
    [255, 255, 0],
    [255, 0, 0],
];

const EXTRA_COLORS: [[u8; 3]; 4] = [[255, 0, 255], [128, 128, 128], [255, 128, 0], [128, 0, 255]];

pub fn class_color(class: u8) -> [u8; 3] {
    if class == UNDEFINED {
        return [0, 0, 0];
    }
    let c = class as usize;
    if c < CLASS_COLORS.len() {
        CLASS_COLORS[c]
    } else {
        EXTRA_COLORS[(c - CLASS_COLORS.len()) % EXTRA_COLORS.len()]
    }
}

/// Binary PPM (P6) bytes for an RGB buffer.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Dimension(format!("{} bytes for a {width}x{height} RGB image", rgb.len())));
    }
    fs::write(path, encode_ppm(width, height, rgb)).map_err(|e| Error::io(path, e))
}

pub fn colorize(labels: &LabelMap) -> Vec<u8> {
    labels.values.iter().flat_map(|&c| class_color(c)).collect()
}

pub fn write_label_ppm(labels: &LabelMap, path: &Path) -> Result<()> {
    write_ppm(path, labels.width, labels.height, &colorize(labels))
}
