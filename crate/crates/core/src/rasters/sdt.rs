//! Exact Euclidean distance transform via the separable lower-envelope
//! (parabola) construction: squared distances along columns, then rows.

use crate::error::{Error, Result};

use super::BinaryMask;

/// Stand-in for "no site"; large enough never to win, small enough that
/// parabola intersections stay finite.
const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of sampled function `f`.
fn lower_envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everything so far.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest `true` site.
/// Pixels with no site at all get a value of at least `1e19`.
pub fn squared_edt(sites: &[bool], height: usize, width: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n = height.max(width);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        lower_envelope(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        f[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        lower_envelope(&f[..width], &mut out[..width], &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&out[..width]);
    }
    grid
}

/// Signed Euclidean distance: inside the mask, the distance to the nearest
/// outside pixel, where the ring just beyond the grid border counts as
/// outside; outside the mask, minus the distance to the nearest inside
/// pixel (`-inf` for an empty mask).
pub fn signed_distance(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height, mask.width);
    let (ph, pw) = (h + 2, w + 2);
    let mut outside = vec![true; ph * pw];
    for y in 0..h {
        for x in 0..w {
            outside[(y + 1) * pw + x + 1] = !mask.get(y, x);
        }
    }
    let to_outside = squared_edt(&outside, ph, pw);
    let to_inside = squared_edt(&mask.bits, h, w);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(if mask.get(y, x) {
                to_outside[(y + 1) * pw + x + 1].sqrt()
            } else {
                let d = to_inside[y * w + x];
                if d >= FAR * 0.1 { f64::NEG_INFINITY } else { -d.sqrt() }
            });
        }
    }
    out
}

/// Signed distance clamped to `[-truncation, truncation]` and scaled into `[-1, 1]`.
pub fn signed_distance_transform(mask: &BinaryMask, truncation: f32) -> Result<Vec<f32>> {
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(Error::Config(format!("SDT truncation must be positive, got {truncation}")));
    }
    let t = truncation as f64;
    Ok(signed_distance(mask).into_iter().map(|d| (d.clamp(-t, t) / t) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_is_minus_one() {
        let out = signed_distance_transform(&BinaryMask::empty(4, 6), 8.0).unwrap();
        assert!(out.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn single_pixel() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(2, 2, true);
        let out = signed_distance_transform(&m, 4.0).unwrap();
        assert_eq!(out[12], 0.25);
        assert_eq!(out[13], -0.25);
        assert!((out[0] - (-(8.0f32).sqrt() / 4.0)).abs() < 1e-6);
    }

    #[test]
    fn full_mask_measures_to_border() {
        let m = BinaryMask { height: 5, width: 7, bits: vec![true; 35] };
        let d = signed_distance(&m);
        assert_eq!(d[0], 1.0);
        assert_eq!(d[2 * 7 + 3], 3.0);
    }

    #[test]
    fn rejects_bad_truncation() {
        assert!(signed_distance_transform(&BinaryMask::empty(2, 2), 0.0).is_err());
    }
}
