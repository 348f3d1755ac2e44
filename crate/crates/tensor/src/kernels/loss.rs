/// Result of a masked softmax cross-entropy evaluation.
pub struct CrossEntropy {
    /// Mean loss over counted pixels; exactly 0 when nothing is counted.
    pub loss: f64,
    /// Softmax probabilities, `N, K, H, W`.
    pub probs: Vec<f32>,
    pub counted: usize,
}

/// Mean negative log-softmax over pixels whose label differs from `ignore`.
/// Labels are assumed to be validated by the caller.
pub fn softmax_cross_entropy(logits: &[f32], labels: &[u8], n: usize, k: usize, plane: usize, ignore: u8) -> CrossEntropy {
    let mut probs = vec![0.0f32; logits.len()];
    let mut total = 0.0f64;
    let mut counted = 0usize;
    let mut scratch = vec![0.0f64; k];
    for b in 0..n {
        for p in 0..plane {
            let at = |cls: usize| (b * k + cls) * plane + p;
            let max = (0..k).map(|c| logits[at(c)] as f64).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0f64;
            for (c, s) in scratch.iter_mut().enumerate() {
                *s = (logits[at(c)] as f64 - max).exp();
                z += *s;
            }
            for (c, s) in scratch.iter().enumerate() {
                probs[at(c)] = (s / z) as f32;
            }
            let label = labels[b * plane + p];
            if label != ignore {
                total += z.ln() - (logits[at(label as usize)] as f64 - max);
                counted += 1;
            }
        }
    }
    let loss = if counted == 0 { 0.0 } else { total / counted as f64 };
    CrossEntropy { loss, probs, counted }
}

/// Gradient w.r.t. logits, scaled by the upstream scalar gradient.
pub fn softmax_cross_entropy_backward(
    probs: &[f32],
    labels: &[u8],
    n: usize,
    k: usize,
    plane: usize,
    ignore: u8,
    counted: usize,
    upstream: f32,
) -> Vec<f32> {
    let mut grad = vec![0.0f32; probs.len()];
    if counted == 0 {
        return grad;
    }
    let scale = upstream as f64 / counted as f64;
    for b in 0..n {
        for p in 0..plane {
            let label = labels[b * plane + p];
            if label == ignore {
                continue;
            }
            for c in 0..k {
                let i = (b * k + c) * plane + p;
                let target = if c == label as usize { 1.0 } else { 0.0 };
                grad[i] = ((probs[i] as f64 - target) * scale) as f32;
            }
        }
    }
    grad
}

/// Channel-wise softmax of an `N, K, H, W` buffer.
pub fn softmax_channels(logits: &[f32], n: usize, k: usize, plane: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; logits.len()];
    for b in 0..n {
        for p in 0..plane {
            let at = |cls: usize| (b * k + cls) * plane + p;
            let max = (0..k).map(|c| logits[at(c)] as f64).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..k).map(|c| (logits[at(c)] as f64 - max).exp()).sum();
            for c in 0..k {
                out[at(c)] = ((logits[at(c)] as f64 - max).exp() / z) as f32;
            }
        }
    }
    out
}
