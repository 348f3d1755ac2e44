use mapfuse_core::inference::{argmax_labels, forward_probabilities, plan_tiling, predict_tile, upsample_coarse};
use mapfuse_core::models::{ArchSpec, ModelRegistry};
use mapfuse_core::rasters::MultiChannelRaster;
use mapfuse_core::Error;
use mapfuse_tensor::Tensor;
use proptest::prelude::*;

fn raster(c: usize, h: usize, w: usize, seed: u64) -> MultiChannelRaster {
    let data = (0..c * h * w).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 1000.0).collect();
    MultiChannelRaster::new(c, h, w, data).unwrap()
}

proptest! {
    #[test]
    fn plan_covers_every_pixel(h in 8usize..300, w in 8usize..300, window in 1usize..160, stride_frac in 0.1f64..1.0) {
        let window = window.min(h).min(w);
        let stride = ((window as f64 * stride_frac) as usize).max(1);
        let plan = plan_tiling((h, w), window, stride).unwrap();
        let mut hits = vec![0u32; h * w];
        for &(y, x) in &plan.origins {
            prop_assert!(y + window <= h && x + window <= w);
            for yy in y..y + window {
                for xx in x..x + window {
                    hits[yy * w + xx] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&n| n > 0));
    }
}

#[test]
fn reference_plans() {
    let p = plan_tiling((256, 256), 128, 64).unwrap();
    assert_eq!(p.origins.len(), 9);
    let ys: Vec<usize> = p.origins.iter().map(|o| o.0).collect();
    assert_eq!(ys, vec![0, 0, 0, 64, 64, 64, 128, 128, 128]);
    let hits = |y: usize, x: usize| {
        p.origins.iter().filter(|&&(oy, ox)| (oy..oy + 128).contains(&y) && (ox..ox + 128).contains(&x)).count()
    };
    assert_eq!(hits(100, 100), 4);
    assert_eq!(hits(128, 128), 4);
    assert_eq!(hits(10, 10), 1);
    let q = plan_tiling((200, 200), 128, 64).unwrap();
    assert_eq!(q.origins.iter().map(|o| o.1).take(3).collect::<Vec<_>>(), vec![0, 64, 72]);
    assert!(matches!(plan_tiling((100, 100), 128, 64), Err(Error::Dimension(_))));
    assert!(matches!(plan_tiling((256, 256), 128, 0), Err(Error::Dimension(_))));
}

#[test]
fn averaged_probabilities_lie_on_the_simplex() {
    let r = ModelRegistry::default();
    for name in ["segnet", "rescorr"] {
        let arch = ArchSpec { decoder_trunc: usize::from(name == "rescorr"), ..ArchSpec::default() };
        let m = r.build(name, &arch, 3).unwrap();
        let plan = plan_tiling((48, 56), 32, 16).unwrap();
        let (scores, labels) = predict_tile(&*m, &raster(3, 48, 56, 1), &raster(4, 48, 56, 2), &plan).unwrap();
        let plane = 48 * 56;
        for p in 0..plane {
            let s: f32 = (0..6).map(|k| scores.data[k * plane + p]).sum();
            assert!((s - 1.0).abs() < 1e-5, "{name}: sum {s}");
        }
        assert_eq!(labels, argmax_labels(&scores));
    }
}

#[test]
fn single_window_equals_direct_forward() {
    let m = ModelRegistry::default().build("fusenet", &ArchSpec::default(), 9).unwrap();
    let (optical, layers) = (raster(3, 32, 32, 5), raster(4, 32, 32, 6));
    let plan = plan_tiling((32, 32), 32, 32).unwrap();
    let (scores, _) = predict_tile(&*m, &optical, &layers, &plan).unwrap();
    let direct = forward_probabilities(
        &*m,
        Tensor::new(&[1, 3, 32, 32], optical.data.clone()).unwrap(),
        Tensor::new(&[1, 4, 32, 32], layers.data.clone()).unwrap(),
    )
    .unwrap();
    assert_eq!(scores.data, direct.data());
}

#[test]
fn constant_model_gives_constant_labels() {
    let mut m = ModelRegistry::default().build("segnet", &ArchSpec::default(), 1).unwrap();
    for p in m.params_mut().iter_mut().filter(|p| p.trainable) {
        p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let bias = m.params().find("classifier.bias").unwrap();
    m.params_mut().get_mut(bias).tensor.data_mut()[2] = 1.0;
    let plan = plan_tiling((64, 64), 32, 16).unwrap();
    let (scores, labels) = predict_tile(&*m, &raster(3, 64, 64, 1), &raster(4, 64, 64, 1), &plan).unwrap();
    assert!(labels.values.iter().all(|&v| v == 2));
    let first = scores.data[0];
    assert!(scores.data[..64 * 64].iter().all(|&v| (v - first).abs() < 1e-6));
}

#[test]
fn argmax_ties_go_to_the_lowest_class() {
    let scores = MultiChannelRaster::new(3, 1, 2, vec![0.2, 0.5, 0.4, 0.5, 0.4, 0.1]).unwrap();
    assert_eq!(argmax_labels(&scores).values, vec![1, 0]);
}

#[test]
fn coarse_scores_upsample_to_tile_size() {
    let coarse = MultiChannelRaster::new(2, 2, 2, vec![0.25; 8]).unwrap();
    let up = upsample_coarse(&coarse, (8, 8)).unwrap();
    assert_eq!((up.channels, up.height, up.width), (2, 8, 8));
    assert!(up.data.iter().all(|&v| (v - 0.25).abs() < 1e-7));
    assert!(upsample_coarse(&up, (4, 4)).is_err());
}

#[test]
fn mismatched_inputs_rejected() {
    let m = ModelRegistry::default().build("segnet", &ArchSpec::default(), 1).unwrap();
    let plan = plan_tiling((32, 32), 32, 32).unwrap();
    let r = predict_tile(&*m, &raster(3, 32, 40, 1), &raster(4, 32, 40, 1), &plan);
    assert!(matches!(r, Err(Error::Dimension(_))));
}
