use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::rasters::ops::disk_offsets;
use crate::rasters::{BinaryMask, MapLayerSet};

use super::Degradation;

/// 4-connected components in row-major discovery order, as flat pixel lists.
pub fn components(mask: &BinaryMask) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask.bits[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Dilation (`amount > 0`) or erosion (`amount < 0`) by a disk. Pixels
/// beyond the border count as set during erosion.
pub fn morph(mask: &BinaryMask, amount: i32) -> BinaryMask {
    if amount == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(amount.unsigned_abs() as usize);
    let (h, w) = (mask.height as isize, mask.width as isize);
    let dilate = amount > 0;
    let mut out = BinaryMask::empty(mask.height, mask.width);
    for y in 0..h {
        for x in 0..w {
            let probe = |&(dy, dx): &(isize, isize)| {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h || nx >= w {
                    !dilate
                } else {
                    mask.bits[(ny * w + nx) as usize]
                }
            };
            let v = if dilate { offsets.iter().any(probe) } else { offsets.iter().all(probe) };
            out.bits[(y * w + x) as usize] = v;
        }
    }
    out
}

/// Simulates incomplete, misregistered map data: every connected object is
/// dropped with probability `p_drop`, survivors shift by a uniform integer
/// offset in `[-jitter, jitter]^2`, then each layer is dilated or eroded.
pub fn degrade_layers(layers: &MapLayerSet, params: &Degradation, seed: u64) -> Result<MapLayerSet> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = params.jitter_px as i64;
    let mut masks = Vec::with_capacity(layers.masks.len());
    for mask in &layers.masks {
        let (h, w) = (mask.height as isize, mask.width as isize);
        let mut out = BinaryMask::empty(mask.height, mask.width);
        for comp in components(mask) {
            let drop = rng.random::<f64>() < params.p_drop;
            let (dy, dx) = if j > 0 { (rng.random_range(-j..=j) as isize, rng.random_range(-j..=j) as isize) } else { (0, 0) };
            if drop {
                continue;
            }
            for p in comp {
                let (y, x) = ((p as isize) / w + dy, (p as isize) % w + dx);
                if y >= 0 && x >= 0 && y < h && x < w {
                    out.bits[(y * w + x) as usize] = true;
                }
            }
        }
        masks.push(morph(&out, params.dilate_erode_px));
    }
    MapLayerSet::new(layers.layer_names.clone(), masks, layers.encoding)
}
