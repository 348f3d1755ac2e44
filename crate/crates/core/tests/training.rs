use std::collections::HashMap;

use mapfuse_core::dataset::SceneData;
use mapfuse_core::encoding::{BinaryEncoder, PreparedScene};
use mapfuse_core::models::{ArchSpec, ModelRegistry};
use mapfuse_core::rasters::{LabelMap, MultiChannelRaster, UNDEFINED};
use mapfuse_core::scenegen::{generate_scene, SceneSpec};
use mapfuse_core::training::{
    batch_loss, lr_at, recalibrate_batch_norm, sample_patch, train, Flip, TrainConfig,
    MAX_SAMPLING_ATTEMPTS,
};
use mapfuse_core::Error;
use mapfuse_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenes(n: usize, size: usize) -> Vec<PreparedScene> {
    (0..n)
        .map(|i| {
            let scene = generate_scene(&SceneSpec::with_size(size, 100 + i as u64)).unwrap();
            PreparedScene::new(&SceneData::from((format!("s{i}").as_str(), &scene)), &BinaryEncoder).unwrap()
        })
        .collect()
}

fn quick(optimizer: &str, lr: f64, iterations: usize) -> TrainConfig {
    TrainConfig {
        patch_size: 32,
        batch_size: 4,
        optimizer: optimizer.into(),
        base_lr: lr,
        epochs: 1,
        iterations_per_epoch: Some(iterations),
        log_every: 0,
        ..TrainConfig::default()
    }
}

fn trainable_bits(m: &dyn mapfuse_core::models::SegmentationModel) -> Vec<(String, Vec<u32>)> {
    m.params()
        .iter()
        .filter(|p| p.trainable)
        .map(|p| (p.name.clone(), p.tensor.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let r = ModelRegistry::default();
    let data = scenes(2, 64);
    for opt in ["sgd", "adam"] {
        let cfg = quick(opt, 0.0, 5);
        let (trained, _) = train(&r, "fusenet", &ArchSpec::default(), &data, &[], &cfg).unwrap();
        let fresh = r.build("fusenet", &ArchSpec::default(), cfg.seed).unwrap();
        assert_eq!(trainable_bits(&*trained), trainable_bits(&*fresh), "{opt}");
    }
}

#[test]
fn loss_drops_below_uniform_guess() {
    let data = scenes(3, 64);
    let cfg = quick("adam", 0.001, 200);
    let (_, log) = train(&ModelRegistry::default(), "segnet", &ArchSpec::default(), &data, &[], &cfg).unwrap();
    let recent = log.recent_loss(20).unwrap();
    assert!(recent < (6.0f64).ln(), "loss {recent}");
    assert_eq!(log.iterations.len(), 200);
}

#[test]
fn training_is_deterministic() {
    let data = scenes(2, 64);
    let cfg = TrainConfig { validate_every: Some(3), ..quick("sgd", 0.01, 6) };
    let r = ModelRegistry::default();
    let run = || train(&r, "rescorr", &ArchSpec::default(), &data, &data[..1], &cfg).unwrap();
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(trainable_bits(&*a), trainable_bits(&*b));
    assert_eq!(la.iterations, lb.iterations);
    assert_eq!(la.validation, lb.validation);
    assert_eq!(la.validation.len(), 2);
}

#[test]
fn step_decay_schedule() {
    let cfg = TrainConfig { base_lr: 0.01, ..TrainConfig::default() };
    for epoch in 0..8 {
        let expect = 0.01 * 10f64.powi(-((epoch / 2) as i32));
        assert!((lr_at(epoch, &cfg) - expect).abs() <= 1e-12 * expect);
    }
    let adam = TrainConfig::sparse();
    assert!((0..8).all(|e| lr_at(e, &adam) == adam.base_lr));
}

#[test]
fn flips_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts: HashMap<Flip, usize> = HashMap::new();
    let n = 8000;
    for _ in 0..n {
        *counts.entry(Flip::draw(&mut rng)).or_default() += 1;
    }
    for flip in [Flip::None, Flip::Horizontal, Flip::Vertical, Flip::Both] {
        let share = counts[&flip] as f64 / n as f64;
        assert!((share - 0.25).abs() < 0.02, "{flip:?}: {share}");
    }
}

/// A 10x10 scene with exactly `labeled` annotated pixels.
fn sparse_scene(labeled: usize) -> PreparedScene {
    let mut values = vec![UNDEFINED; 100];
    values[..labeled].iter_mut().for_each(|v| *v = 1);
    PreparedScene {
        id: "sparse".into(),
        optical: MultiChannelRaster::zeros(3, 10, 10),
        layers: MultiChannelRaster::zeros(4, 10, 10),
        labels: LabelMap::new(10, 10, values).unwrap(),
    }
}

#[test]
fn sampler_rejects_thinly_annotated_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scene = sparse_scene(4);
    let err = sample_patch(&scene, 10, 0.05, &mut rng).unwrap_err();
    assert!(matches!(err, Error::Sampling(_)));
    assert!(err.to_string().contains(&MAX_SAMPLING_ATTEMPTS.to_string()));
    assert_eq!(sample_patch(&scene, 10, 0.04, &mut rng).unwrap().annotated_fraction(), 0.04);
    assert!(sample_patch(&sparse_scene(5), 10, 0.05, &mut rng).is_ok());
}

#[test]
fn masked_loss_ignores_undefined_pixels() {
    let m = ModelRegistry::default().build("fusenet", &ArchSpec::default(), 2).unwrap();
    let opt = |seed: u64| Tensor::from_fn(&[2, 3, 16, 16], |i| ((i as u64 * 7919 + seed) % 97) as f32 / 97.0);
    let lay = Tensor::from_fn(&[2, 4, 16, 16], |i| (i % 2) as f32);

    let none = vec![UNDEFINED; 2 * 16 * 16];
    let (g, loss) = batch_loss(&*m, opt(1), lay.clone(), &none, true).unwrap();
    assert_eq!(g.scalar(loss), 0.0);
    let grads = g.backward(loss).unwrap();
    let mut store = m.params().clone();
    store.zero_grad();
    g.accumulate_param_grads(&grads, &mut store).unwrap();
    assert!(store.iter().filter_map(|p| p.tensor.grad()).all(|gr| gr.iter().all(|&v| v == 0.0)));

    // Relabeling undefined pixels with other classes changes the loss only
    // when they become defined.
    let a: Vec<u8> = (0..512).map(|i| if i % 3 == 0 { (i % 6) as u8 } else { UNDEFINED }).collect();
    let (g1, l1) = batch_loss(&*m, opt(1), lay.clone(), &a, false).unwrap();
    let (g2, l2) = batch_loss(&*m, opt(1), lay.clone(), &a.clone(), false).unwrap();
    assert_eq!(g1.scalar(l1), g2.scalar(l2));
    let b: Vec<u8> = a.iter().enumerate().map(|(i, &v)| if v == UNDEFINED { (i % 5) as u8 } else { v }).collect();
    let (g3, l3) = batch_loss(&*m, opt(1), lay, &b, false).unwrap();
    assert_ne!(g1.scalar(l1), g3.scalar(l3));
}

#[test]
fn diverging_run_is_reported() {
    let data = scenes(1, 64);
    let cfg = TrainConfig { momentum: 0.0, ..quick("sgd", 1e30, 4) };
    let err = train(&ModelRegistry::default(), "osmnet", &ArchSpec::default(), &data, &[], &cfg).err().unwrap();
    assert!(matches!(err, Error::Diverged(_)), "{err}");
}

#[test]
fn bad_configs_rejected() {
    let data = scenes(1, 64);
    let r = ModelRegistry::default();
    let odd = TrainConfig { patch_size: 30, ..quick("sgd", 0.01, 1) };
    assert!(matches!(train(&r, "segnet", &ArchSpec::default(), &data, &[], &odd), Err(Error::Config(_))));
    let big = TrainConfig { patch_size: 128, ..quick("sgd", 0.01, 1) };
    assert!(matches!(train(&r, "segnet", &ArchSpec::default(), &data, &[], &big), Err(Error::Dimension(_))));
    assert!(matches!(train(&r, "segnet", &ArchSpec::default(), &[], &[], &quick("sgd", 0.01, 1)), Err(Error::Config(_))));
}

fn running_bits(m: &dyn mapfuse_core::models::SegmentationModel) -> Vec<Vec<u32>> {
    m.params()
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn batch_norm_recalibration_forgets_old_statistics() {
    let r = ModelRegistry::default();
    let data = scenes(2, 64);
    let cfg = TrainConfig { bn_recalibration_batches: 3, ..quick("sgd", 0.0, 1) };
    let mut fresh = r.build("segnet", &ArchSpec::default(), 0).unwrap();
    let mut stale = r.build("segnet", &ArchSpec::default(), 0).unwrap();
    for p in stale.params_mut().iter_mut().filter(|p| !p.trainable) {
        p.tensor.data_mut().iter_mut().for_each(|v| *v = 7.5);
    }
    let before = trainable_bits(&*stale);
    recalibrate_batch_norm(&mut *fresh, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    recalibrate_batch_norm(&mut *stale, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert!(!running_bits(&*fresh).is_empty());
    assert_eq!(running_bits(&*fresh), running_bits(&*stale));
    assert_eq!(trainable_bits(&*stale), before);

    let none = TrainConfig { bn_recalibration_batches: 0, ..cfg };
    let kept = running_bits(&*stale);
    recalibrate_batch_norm(&mut *stale, &data, &none, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(running_bits(&*stale), kept);
}
