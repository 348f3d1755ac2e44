//! Sliding-window prediction with overlap averaging of class probabilities.

use serde::{Deserialize, Serialize};

use mapfuse_tensor::{resize_bilinear, softmax, Graph, Tensor};

use crate::error::{Error, Result};
use crate::models::{ModelInputs, SegmentationModel};
use crate::rasters::{LabelMap, MultiChannelRaster};

/// Windows evaluated per forward pass.
const WINDOW_BATCH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub tile_hw: (usize, usize),
    pub window: usize,
    pub stride: usize,
    /// Top-left corners, row-major.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0;
    while o + window < len {
        out.push(o);
        o += stride;
    }
    out.push(len - window);
    out
}

pub fn plan_tiling(tile_hw: (usize, usize), window: usize, stride: usize) -> Result<TilingPlan> {
    let (h, w) = tile_hw;
    if window == 0 || window > h || window > w {
        return Err(Error::Dimension(format!("window {window} does not fit a {h}x{w} tile")));
    }
    if stride == 0 || stride > window {
        return Err(Error::Dimension(format!("stride {stride} must lie in 1..={window}")));
    }
    let ys = axis_origins(h, window, stride);
    let xs = axis_origins(w, window, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();
    Ok(TilingPlan { tile_hw, window, stride, origins })
}

/// Bilinear resampling of `K x h x w` scores to `K x H x W`.
pub fn upsample_coarse(scores: &MultiChannelRaster, target: (usize, usize)) -> Result<MultiChannelRaster> {
    if target.0 < scores.height || target.1 < scores.width {
        return Err(Error::Dimension(format!(
            "cannot upsample {}x{} to smaller {}x{}",
            scores.height, scores.width, target.0, target.1
        )));
    }
    let t = Tensor::new(&[1, scores.channels, scores.height, scores.width], scores.data.clone())?;
    let up = resize_bilinear(&t, target)?;
    MultiChannelRaster::new(scores.channels, target.0, target.1, up.into_data())
}

/// Per-pixel argmax; ties go to the lowest class id.
pub fn argmax_labels(scores: &MultiChannelRaster) -> LabelMap {
    let plane = scores.height * scores.width;
    let mut values = vec![0u8; plane];
    for (p, v) in values.iter_mut().enumerate() {
        let mut best = scores.data[p];
        for k in 1..scores.channels {
            let s = scores.data[k * plane + p];
            if s > best {
                best = s;
                *v = k as u8;
            }
        }
    }
    LabelMap { height: scores.height, width: scores.width, values }
}

fn crop_batch(r: &MultiChannelRaster, origins: &[(usize, usize)], window: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(origins.len() * r.channels * window * window);
    for &(y, x) in origins {
        data.extend(r.crop(y, x, window, window).data);
    }
    Ok(Tensor::new(&[origins.len(), r.channels, window, window], data)?)
}

/// Class probabilities for a batch of windows, at window resolution.
pub fn forward_probabilities(model: &dyn SegmentationModel, optical: Tensor, layers: Tensor) -> Result<Tensor> {
    let (_, _, h, w) = optical.dims4()?;
    let mut graph = Graph::new();
    let inputs = ModelInputs { optical: graph.input(optical)?, layers: graph.input(layers)? };
    let out = model.forward(&mut graph, inputs, false)?;
    let probs = softmax(graph.value(out.scores))?;
    Ok(resize_bilinear(&probs, (h, w))?)
}

/// Averages windowed softmax probabilities over `plan` and takes the argmax.
pub fn predict_tile(
    model: &dyn SegmentationModel,
    optical: &MultiChannelRaster,
    layers: &MultiChannelRaster,
    plan: &TilingPlan,
) -> Result<(MultiChannelRaster, LabelMap)> {
    let (h, w) = plan.tile_hw;
    if (optical.height, optical.width) != (h, w) || (layers.height, layers.width) != (h, w) {
        return Err(Error::Dimension(format!("inputs do not match the {h}x{w} tiling plan")));
    }
    let k = model.arch().num_classes;
    let win = plan.window;
    let mut sum = vec![0.0f32; k * h * w];
    let mut hits = vec![0u32; h * w];
    for chunk in plan.origins.chunks(WINDOW_BATCH) {
        let probs = forward_probabilities(model, crop_batch(optical, chunk, win)?, crop_batch(layers, chunk, win)?)?;
        let pd = probs.data();
        for (b, &(oy, ox)) in chunk.iter().enumerate() {
            for c in 0..k {
                let src = &pd[(b * k + c) * win * win..(b * k + c + 1) * win * win];
                for y in 0..win {
                    let row = &mut sum[c * h * w + (oy + y) * w + ox..][..win];
                    for (d, s) in row.iter_mut().zip(&src[y * win..(y + 1) * win]) {
                        *d += s;
                    }
                }
            }
            for y in 0..win {
                for n in &mut hits[(oy + y) * w + ox..][..win] {
                    *n += 1;
                }
            }
        }
    }
    for c in 0..k {
        for (s, &n) in sum[c * h * w..(c + 1) * h * w].iter_mut().zip(&hits) {
            *s /= n as f32;
        }
    }
    let scores = MultiChannelRaster::new(k, h, w, sum)?;
    let labels = argmax_labels(&scores);
    Ok((scores, labels))
}

/// Largest usable window not above `window` for a tile: clipped to the
/// tile and rounded down to the model's input multiple.
pub fn fit_window(window: usize, tile_hw: (usize, usize), multiple: usize) -> Result<usize> {
    let w = window.min(tile_hw.0).min(tile_hw.1) / multiple * multiple;
    if w == 0 {
        return Err(Error::Dimension(format!("tile {tile_hw:?} is smaller than the input multiple {multiple}")));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins() {
        assert_eq!(axis_origins(256, 128, 64), vec![0, 64, 128]);
        assert_eq!(axis_origins(200, 128, 64), vec![0, 64, 72]);
        assert_eq!(axis_origins(128, 128, 64), vec![0]);
        assert_eq!(plan_tiling((256, 256), 128, 64).unwrap().origins.len(), 9);
    }

    #[test]
    fn bad_plans() {
        assert!(plan_tiling((100, 256), 128, 64).is_err());
        assert!(plan_tiling((256, 256), 128, 0).is_err());
        assert!(plan_tiling((256, 256), 64, 128).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let s = MultiChannelRaster::new(3, 1, 2, vec![0.2, 0.1, 0.5, 0.1, 0.5, 0.1]).unwrap();
        assert_eq!(argmax_labels(&s).values, vec![1, 0]);
        let t = MultiChannelRaster::new(2, 1, 1, vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_labels(&t).values, vec![0]);
    }

    #[test]
    fn upsample_identity_and_constant() {
        let s = MultiChannelRaster::new(2, 2, 2, vec![0.1, 0.2, 0.3, 0.4, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(upsample_coarse(&s, (2, 2)).unwrap(), s);
        let up = upsample_coarse(&s, (5, 7)).unwrap();
        assert!(up.channel(1).iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(upsample_coarse(&s, (1, 4)).is_err());
    }
}
