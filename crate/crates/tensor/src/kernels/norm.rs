/// Per-channel statistics of an `N, C, H, W` batch, accumulated in `f64`.
/// Returns the mean and the biased variance.
pub fn channel_moments(x: &[f32], n: usize, c: usize, plane: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * plane) as f64;
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        let m = s / count;
        let mut ss = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            ss += x[off..off + plane].iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = ss / count;
    }
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta`, per channel.
pub fn normalize(
    x: &[f32],
    n: usize,
    c: usize,
    plane: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f32],
    beta: &[f32],
) -> Vec<f32> {
    let mut y = vec![0.0f32; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let scale = inv_std[ch] * gamma[ch] as f64;
            let shift = beta[ch] as f64 - mean[ch] * scale;
            let (scale, shift) = (scale as f32, shift as f32);
            for (dst, &src) in y[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                *dst = src * scale + shift;
            }
        }
    }
    y
}

pub struct NormGrads {
    pub input: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

/// Backward pass. With `batch_stats` the mean and variance are treated as
/// functions of the input (training mode); otherwise they are constants.
#[allow(clippy::too_many_arguments)]
pub fn normalize_backward(
    x: &[f32],
    dy: &[f32],
    n: usize,
    c: usize,
    plane: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f32],
    batch_stats: bool,
) -> NormGrads {
    let count = (n * plane) as f64;
    let mut dx = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ch in 0..c {
        let (m, s, g) = (mean[ch], inv_std[ch], gamma[ch] as f64);
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for (&xv, &d) in x[off..off + plane].iter().zip(&dy[off..off + plane]) {
                sum_dy += d as f64;
                sum_dy_xhat += d as f64 * (xv as f64 - m) * s;
            }
        }
        dgamma[ch] = sum_dy_xhat as f32;
        dbeta[ch] = sum_dy as f32;
        // dx = a * dy + b * x + c, expanded from the batch-statistics formula.
        let a = g * s;
        let (b_coef, c_coef) = if batch_stats {
            let bc = -g * s * s * sum_dy_xhat / count;
            (bc, -g * s * sum_dy / count - bc * m)
        } else {
            (0.0, 0.0)
        };
        let (a, b_coef, c_coef) = (a as f32, b_coef as f32, c_coef as f32);
        for b in 0..n {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                dx[i] = a * dy[i] + b_coef * x[i] + c_coef;
            }
        }
    }
    NormGrads { input: dx, gamma: dgamma, beta: dbeta }
}
