use rayon::prelude::*;

/// Geometry of a 2-D convolution over an `N, C, H, W` batch with `O, C, k, k` weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.height + 2 * self.padding - self.kernel) / self.stride + 1,
            (self.width + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        let (ho, wo) = self.out_hw();
        ho * wo
    }
}

/// Column-matrix budget per tile, in floats. Keeps the unfolded patch
/// matrix cache-resident.
const TILE_FLOATS: usize = 1 << 18;

/// Output rows `[row0, row1)` of one sample unfolded into a
/// `C*k*k x (rows * Wo)` column matrix.
fn im2col(x: &[f32], g: &ConvGeom, (row0, row1): (usize, usize), cols: &mut [f32]) {
    let (_, wo) = g.out_hw();
    let (h, w, k, s, p) = (g.height as isize, g.width as isize, g.kernel, g.stride, g.padding as isize);
    let tile = (row1 - row0) * wo;
    for c in 0..g.in_channels {
        let src = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * tile..(row + 1) * tile];
                for oy in row0..row1 {
                    let iy = (oy * s + ki) as isize - p;
                    let out_row = &mut dst[(oy - row0) * wo..(oy - row0 + 1) * wo];
                    if iy < 0 || iy >= h {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    if s == 1 {
                        // Contiguous interior with zero margins.
                        let shift = kj as isize - p;
                        let lo = (-shift).clamp(0, wo as isize) as usize;
                        let hi = (w - shift).clamp(0, wo as isize) as usize;
                        out_row[..lo].fill(0.0);
                        if hi > lo {
                            let a = (lo as isize + shift) as usize;
                            out_row[lo..hi].copy_from_slice(&src_row[a..a + (hi - lo)]);
                        }
                        out_row[hi.max(lo)..].fill(0.0);
                    } else {
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p;
                            *v = if ix < 0 || ix >= w { 0.0 } else { src_row[ix as usize] };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds a column tile back, accumulating overlaps.
fn col2im(cols: &[f32], g: &ConvGeom, (row0, row1): (usize, usize), dx: &mut [f32]) {
    let (_, wo) = g.out_hw();
    let (h, w, k, s, p) = (g.height as isize, g.width as isize, g.kernel, g.stride, g.padding as isize);
    let tile = (row1 - row0) * wo;
    for c in 0..g.in_channels {
        let dst = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * tile..(row + 1) * tile];
                for oy in row0..row1 {
                    let iy = (oy * s + ki) as isize - p;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let src_row = &src[(oy - row0) * wo..(oy - row0 + 1) * wo];
                    for (ox, v) in src_row.iter().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
                        if ix >= 0 && ix < w {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Row tiles `[row0, row1)` of the output plane.
fn row_tiles(g: &ConvGeom) -> Vec<(usize, usize)> {
    let (ho, wo) = g.out_hw();
    let rows = (TILE_FLOATS / (g.patch_len() * wo)).clamp(1, ho);
    (0..ho).step_by(rows).map(|r| (r, (r + rows).min(ho))).collect()
}

/// `c = a * b` with explicit strides; `c` has row stride `rsc`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (isize, isize),
    b: &[f32],
    (rsb, csb): (isize, isize),
    c: &mut [f32],
    rsc: isize,
    accumulate: bool,
) {
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass slices covering every index addressed by the
    // given extents and strides.
    unsafe {
        matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, 1);
    }
}

pub fn conv2d_forward(x: &[f32], weight: &[f32], bias: Option<&[f32]>, g: &ConvGeom) -> Vec<f32> {
    let in_len = g.in_channels * g.height * g.width;
    let q = g.patch_len();
    let plane = g.out_plane();
    let (_, wo) = g.out_hw();
    let out_len = g.out_channels * plane;
    let tiles = row_tiles(g);
    let mut out = vec![0.0f32; g.batch * out_len];
    out.par_chunks_mut(out_len).zip(x.par_chunks(in_len)).for_each(|(y, xs)| {
        let mut cols = vec![0.0f32; q * (tiles[0].1 - tiles[0].0) * wo];
        for &(r0, r1) in &tiles {
            let tp = (r1 - r0) * wo;
            im2col(xs, g, (r0, r1), &mut cols);
            // y[o, tile] = W[o, :] * cols[:, tile]
            gemm(g.out_channels, q, tp, weight, (q as isize, 1), &cols, (tp as isize, 1), &mut y[r0 * wo..], plane as isize, false);
        }
        if let Some(b) = bias {
            for (o, chan) in y.chunks_mut(plane).enumerate() {
                chan.iter_mut().for_each(|v| *v += b[o]);
            }
        }
    });
    out
}

pub struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Gradients of a convolution. Per-sample weight gradients are reduced in
/// batch order so the result does not depend on thread scheduling.
pub fn conv2d_backward(x: &[f32], weight: &[f32], dy: &[f32], g: &ConvGeom, need_input: bool) -> ConvGrads {
    let in_len = g.in_channels * g.height * g.width;
    let q = g.patch_len();
    let plane = g.out_plane();
    let (_, wo) = g.out_hw();
    let out_len = g.out_channels * plane;
    let wlen = g.out_channels * q;
    let tiles = row_tiles(g);

    let per_sample: Vec<(Vec<f32>, Vec<f64>, Option<Vec<f32>>)> = x
        .par_chunks(in_len)
        .zip(dy.par_chunks(out_len))
        .map(|(xs, dys)| {
            let mut cols = vec![0.0f32; q * (tiles[0].1 - tiles[0].0) * wo];
            let mut dw = vec![0.0f32; wlen];
            let mut dx = need_input.then(|| vec![0.0f32; in_len]);
            for (t, &(r0, r1)) in tiles.iter().enumerate() {
                let tp = (r1 - r0) * wo;
                let dyt = &dys[r0 * wo..];
                im2col(xs, g, (r0, r1), &mut cols);
                // dW[o, q] += sum_p dY[o, p] * cols[q, p]
                gemm(g.out_channels, tp, q, dyt, (plane as isize, 1), &cols, (1, tp as isize), &mut dw, q as isize, t > 0);
                if let Some(dx) = dx.as_mut() {
                    // dcols[q, p] = sum_o W[o, q] * dY[o, p]
                    gemm(q, g.out_channels, tp, weight, (1, q as isize), dyt, (plane as isize, 1), &mut cols, tp as isize, false);
                    col2im(&cols, g, (r0, r1), dx);
                }
            }
            let db = dys.chunks(plane).map(|chan| chan.iter().map(|&v| v as f64).sum::<f64>()).collect();
            (dw, db, dx)
        })
        .collect();

    let mut weight_grad = vec![0.0f32; wlen];
    let mut bias_grad = vec![0.0f64; g.out_channels];
    let mut input_grad = need_input.then(|| Vec::with_capacity(g.batch * in_len));
    for (dw, db, dx) in per_sample {
        weight_grad.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        bias_grad.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(dx)) = (input_grad.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
    }
    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad.into_iter().map(|v| v as f32).collect(),
    }
}
