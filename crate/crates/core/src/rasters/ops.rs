use crate::error::{Error, Result};

use super::{LabelMap, MultiChannelRaster, UNDEFINED};

/// Quantile `q` of already-sorted `sorted` by linear interpolation between
/// order statistics.
pub fn quantile_sorted(sorted: &[f32], q: f64) -> f32 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    (sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)) as f32
}

/// Caps each channel at its `(1 - fraction)` quantile.
pub fn clip_high_percentile(raster: &MultiChannelRaster, fraction: f64) -> Result<MultiChannelRaster> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("clip fraction must lie in (0, 1), got {fraction}")));
    }
    let mut out = raster.clone();
    for c in 0..raster.channels {
        let mut sorted = raster.channel(c).to_vec();
        sorted.sort_by(f32::total_cmp);
        let cap = quantile_sorted(&sorted, 1.0 - fraction);
        for v in out.channel_mut(c) {
            if *v > cap {
                *v = cap;
            }
        }
    }
    Ok(out)
}

/// Offsets of a closed disk of radius `r`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// Marks as undefined every pixel lying within `radius` of a pixel holding
/// a different defined class.
pub fn erode_labels(labels: &LabelMap, radius: usize) -> LabelMap {
    if radius == 0 {
        return labels.clone();
    }
    let (h, w) = (labels.height as isize, labels.width as isize);
    let offsets = disk_offsets(radius);
    let mut out = labels.clone();
    for y in 0..h {
        for x in 0..w {
            let c = labels.values[(y * w + x) as usize];
            if c == UNDEFINED {
                continue;
            }
            let near_other = offsets.iter().any(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h || nx >= w {
                    return false;
                }
                let o = labels.values[(ny * w + nx) as usize];
                o != UNDEFINED && o != c
            });
            if near_other {
                out.values[(y * w + x) as usize] = UNDEFINED;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_one_to_hundred() {
        let data: Vec<f32> = (1..=100).map(|v| v as f32).collect();
        let r = MultiChannelRaster::new(1, 10, 10, data).unwrap();
        let out = clip_high_percentile(&r, 0.02).unwrap();
        let cap = 98.0 + 0.02 * 1.0;
        assert!((out.data[98] - cap).abs() < 1e-4);
        assert!((out.data[99] - cap).abs() < 1e-4);
        assert_eq!(out.data[97], 98.0);
    }

    #[test]
    fn clip_constant_unchanged() {
        let r = MultiChannelRaster::new(2, 4, 4, vec![0.7; 32]).unwrap();
        assert_eq!(clip_high_percentile(&r, 0.02).unwrap(), r);
    }

    #[test]
    fn clip_rejects_bad_fraction() {
        let r = MultiChannelRaster::zeros(1, 2, 2);
        assert!(clip_high_percentile(&r, 0.0).is_err());
        assert!(clip_high_percentile(&r, 1.0).is_err());
    }

    #[test]
    fn disk_radius_one() {
        assert_eq!(disk_offsets(1).len(), 5);
        assert_eq!(disk_offsets(0), vec![(0, 0)]);
    }

    #[test]
    fn half_planes() {
        let (h, w, c) = (8usize, 20usize, 10usize);
        let vals = (0..h * w).map(|i| if i % w < c { 0 } else { 1 }).collect();
        let m = LabelMap::new(h, w, vals).unwrap();
        let e = erode_labels(&m, 3);
        for y in 0..h {
            for x in 0..w {
                let expect_undefined = x + 3 >= c && x < c + 3;
                assert_eq!(e.get(y, x) == UNDEFINED, expect_undefined, "({y},{x})");
            }
        }
    }

    #[test]
    fn undefined_neighbours_do_not_erode() {
        let m = LabelMap::new(1, 5, vec![0, UNDEFINED, 0, 0, 0]).unwrap();
        assert_eq!(erode_labels(&m, 3), m);
    }
}
