use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::PreparedScene;
use crate::error::{Error, Result};
use crate::rasters::UNDEFINED;

pub const MAX_SAMPLING_ATTEMPTS: usize = 100;

/// Congruent crops of all three modalities, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub origin: (usize, usize),
    pub optical: Vec<f32>,
    pub layers: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Patch {
    pub fn annotated_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&v| v != UNDEFINED).count() as f64 / self.labels.len() as f64
    }
}

fn annotated_fraction_at(scene: &PreparedScene, y0: usize, x0: usize, size: usize) -> f64 {
    let w = scene.labels.width;
    let mut n = 0usize;
    for y in y0..y0 + size {
        n += scene.labels.values[y * w + x0..y * w + x0 + size].iter().filter(|&&v| v != UNDEFINED).count();
    }
    n as f64 / (size * size) as f64
}

pub fn crop_patch(scene: &PreparedScene, y0: usize, x0: usize, size: usize) -> Patch {
    Patch {
        size,
        origin: (y0, x0),
        optical: scene.optical.crop(y0, x0, size, size).data,
        layers: scene.layers.crop(y0, x0, size, size).data,
        labels: scene.labels.crop(y0, x0, size, size).values,
    }
}

/// Uniformly placed patch, redrawn until at least `min_annotated_fraction`
/// of its pixels carry a label.
pub fn sample_patch(
    scene: &PreparedScene,
    size: usize,
    min_annotated_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Patch> {
    let (h, w) = scene.dims();
    if size == 0 || size > h || size > w {
        return Err(Error::Dimension(format!("patch {size} does not fit scene {} ({h}x{w})", scene.id)));
    }
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let y0 = rng.random_range(0..=h - size);
        let x0 = rng.random_range(0..=w - size);
        let frac = annotated_fraction_at(scene, y0, x0, size);
        if frac >= min_annotated_fraction {
            return Ok(crop_patch(scene, y0, x0, size));
        }
    }
    Err(Error::Sampling(format!(
        "no {size}x{size} patch of scene {} has {:.1}% annotated pixels after {MAX_SAMPLING_ATTEMPTS} attempts",
        scene.id,
        100.0 * min_annotated_fraction
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flip {
    None,
    Horizontal,
    Vertical,
    Both,
}

impl Flip {
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        match rng.random_range(0..4u8) {
            0 => Flip::None,
            1 => Flip::Horizontal,
            2 => Flip::Vertical,
            _ => Flip::Both,
        }
    }
}

fn flip_planes<T: Copy>(data: &mut [T], size: usize, flip: Flip) {
    for plane in data.chunks_exact_mut(size * size) {
        if matches!(flip, Flip::Horizontal | Flip::Both) {
            plane.chunks_exact_mut(size).for_each(|row| row.reverse());
        }
        if matches!(flip, Flip::Vertical | Flip::Both) {
            for y in 0..size / 2 {
                let (top, bottom) = plane.split_at_mut((size - 1 - y) * size);
                top[y * size..(y + 1) * size].swap_with_slice(&mut bottom[..size]);
            }
        }
    }
}

/// Applies one flip to every modality of the patch.
pub fn apply_flip(patch: &mut Patch, flip: Flip) {
    flip_planes(&mut patch.optical, patch.size, flip);
    flip_planes(&mut patch.layers, patch.size, flip);
    flip_planes(&mut patch.labels, patch.size, flip);
}

/// Random flip (none, horizontal, vertical or both), shared by all modalities.
pub fn augment(patch: &mut Patch, rng: &mut ChaCha8Rng) -> Flip {
    let flip = Flip::draw(rng);
    apply_flip(patch, flip);
    flip
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_flip_swaps_rows() {
        let mut d = vec![1, 2, 3, 4, 5, 6, 7, 8, 9];
        flip_planes(&mut d, 3, Flip::Vertical);
        assert_eq!(d, vec![7, 8, 9, 4, 5, 6, 1, 2, 3]);
        flip_planes(&mut d, 3, Flip::Horizontal);
        assert_eq!(d, vec![9, 8, 7, 6, 5, 4, 3, 2, 1]);
    }
}
