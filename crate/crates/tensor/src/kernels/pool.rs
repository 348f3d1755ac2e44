/// 2x2/stride-2 max pooling over `planes` planes of `h x w`. Returns pooled
/// values and, per output cell, the flat in-plane index of the winner. Ties go
/// to the lowest flat index.
pub fn maxpool2x2_forward(x: &[f32], planes: usize, h: usize, w: usize) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut idx = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * w + 2 * ox;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                out.push(plane[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

/// Scatters `values` to the recorded positions of `h x w` planes. Indices are
/// validated by the caller.
pub fn unpool_forward(values: &[f32], indices: &[u32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let per = values.len() / planes;
    let mut out = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for (v, &i) in values[p * per..(p + 1) * per].iter().zip(&indices[p * per..(p + 1) * per]) {
            dst[i as usize] = *v;
        }
    }
    out
}

/// Gathers from the recorded positions; the adjoint of [`unpool_forward`].
pub fn gather(src: &[f32], indices: &[u32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let per = indices.len() / planes;
    let mut out = Vec::with_capacity(indices.len());
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        out.extend(indices[p * per..(p + 1) * per].iter().map(|&i| plane[i as usize]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_maximum_and_its_position() {
        let (v, i) = maxpool2x2_forward(&[1.0, 2.0, 3.0, 4.0], 1, 2, 2);
        assert_eq!(v, vec![4.0]);
        assert_eq!(i, vec![3]);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let (v, i) = maxpool2x2_forward(&[7.0; 4], 1, 2, 2);
        assert_eq!((v[0], i[0]), (7.0, 0));
        let (_, i) = maxpool2x2_forward(&[0.0, 5.0, 5.0, 5.0], 1, 2, 2);
        assert_eq!(i[0], 1);
    }

    #[test]
    fn unpool_places_value() {
        assert_eq!(unpool_forward(&[4.0], &[3], 1, 2, 2), vec![0.0, 0.0, 0.0, 4.0]);
    }
}
