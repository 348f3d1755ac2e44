use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rasters::{LabelMap, UNDEFINED};

/// Keeps random rectangles of annotation until about `keep_fraction` of all
/// pixels are covered; everything else becomes undefined.
pub fn sparsify_labels(labels: &LabelMap, keep_fraction: f64, seed: u64) -> Result<LabelMap> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
    }
    if keep_fraction >= 1.0 {
        return Ok(labels.clone());
    }
    let (h, w) = (labels.height, labels.width);
    let target = (keep_fraction * (h * w) as f64).round() as usize;
    let min_side = (h.min(w) / 16).max(2);
    let max_side = (h.min(w) / 4).max(min_side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = vec![false; h * w];
    let mut count = 0usize;
    let mut rounds = 0;
    while count < target && rounds < 100_000 {
        rounds += 1;
        let remaining = target - count;
        let (mut rh, mut rw) = (rng.random_range(min_side..=max_side), rng.random_range(min_side..=max_side));
        if rh * rw > remaining {
            let side = (remaining as f64).sqrt().ceil() as usize;
            rh = side.clamp(1, h);
            rw = side.clamp(1, w);
        }
        let y0 = rng.random_range(0..=h - rh);
        let x0 = rng.random_range(0..=w - rw);
        for y in y0..y0 + rh {
            for k in &mut kept[y * w + x0..y * w + x0 + rw] {
                if !*k {
                    *k = true;
                    count += 1;
                }
            }
        }
    }
    let values = labels.values.iter().zip(&kept).map(|(&v, &k)| if k { v } else { UNDEFINED }).collect();
    Ok(LabelMap { height: h, width: w, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_requested_fraction() {
        let m = LabelMap::new(256, 256, (0..65536).map(|i| (i % 6) as u8).collect()).unwrap();
        for seed in 0..5 {
            let s = sparsify_labels(&m, 0.3, seed).unwrap();
            let f = s.labeled_fraction();
            assert!((f - 0.3).abs() <= 0.05, "fraction {f}");
            for (a, b) in s.values.iter().zip(&m.values) {
                assert!(*a == UNDEFINED || a == b);
            }
        }
        assert_eq!(sparsify_labels(&m, 1.0, 3).unwrap(), m);
    }
}
