/// Source taps for one output coordinate under the half-pixel
/// (`align_corners = false`) convention with edge clamping.
#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = if lo == hi { 0.0 } else { (src - lo as f64) as f32 };
            Tap { lo, hi, frac }
        })
        .collect()
}

pub fn bilinear_forward(x: &[f32], planes: usize, (h, w): (usize, usize), (oh, ow): (usize, usize)) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return x.to_vec();
    }
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = vec![0.0f32; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v00 = src[a.lo * w + b.lo];
                let v01 = src[a.lo * w + b.hi];
                let v10 = src[a.hi * w + b.lo];
                let v11 = src[a.hi * w + b.hi];
                let top = v00 + (v01 - v00) * b.frac;
                let bottom = v10 + (v11 - v10) * b.frac;
                dst[oy * ow + ox] = top + (bottom - top) * a.frac;
            }
        }
    }
    out
}

pub fn bilinear_backward(dy: &[f32], planes: usize, (h, w): (usize, usize), (oh, ow): (usize, usize)) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return dy.to_vec();
    }
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut dx = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let src = &dy[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let g = src[oy * ow + ox];
                let (fy, fx) = (a.frac, b.frac);
                dst[a.lo * w + b.lo] += g * (1.0 - fy) * (1.0 - fx);
                dst[a.lo * w + b.hi] += g * (1.0 - fy) * fx;
                dst[a.hi * w + b.lo] += g * fy * (1.0 - fx);
                dst[a.hi * w + b.hi] += g * fy * fx;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_a_two_pixel_row() {
        let out = bilinear_forward(&[0.0, 1.0], 1, (1, 2), (1, 4));
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn single_pixel_fills() {
        let out = bilinear_forward(&[3.5], 1, (1, 1), (3, 3));
        assert!(out.iter().all(|&v| v == 3.5));
    }
}
