use mapfuse_core::rasters::{BinaryMask, LayerEncoding, MapLayerSet, UNDEFINED};
use mapfuse_core::scenegen::{components, degrade_layers, sparsify_labels};
use mapfuse_core::scenegen::{generate_scene, Degradation, SceneSpec, BUILDING, LAYER_BUILDINGS};
use proptest::prelude::*;

fn spec(seed: u64) -> SceneSpec {
    SceneSpec { seed, ..SceneSpec::default() }
}

#[test]
fn same_seed_same_scene() {
    let s = SceneSpec { degradation: Degradation { p_drop: 0.3, jitter_px: 2, dilate_erode_px: 1 }, keep_fraction: 0.5, ..spec(7) };
    assert_eq!(generate_scene(&s).unwrap(), generate_scene(&s).unwrap());
    let other = generate_scene(&SceneSpec { seed: 8, ..s.clone() }).unwrap();
    assert_ne!(other.labels, generate_scene(&s).unwrap().labels);
}

#[test]
fn clean_building_layer_equals_building_labels() {
    for seed in 0..4 {
        let scene = generate_scene(&spec(seed)).unwrap();
        let layer = &scene.layers.masks[LAYER_BUILDINGS];
        for (i, &v) in scene.labels.values.iter().enumerate() {
            assert_eq!(layer.bits[i], v == BUILDING, "seed {seed} pixel {i}");
        }
        assert_eq!(components(layer).len(), scene.placed.buildings);
    }
}

#[test]
fn optical_values_in_unit_range() {
    let scene = generate_scene(&SceneSpec { channels: 5, ..spec(3) }).unwrap();
    assert_eq!(scene.optical.channels, 5);
    assert!(scene.optical.data.iter().all(|v| (0.0..=1.0).contains(v)));
    scene.labels.validate(6).unwrap();
}

#[test]
fn every_class_is_painted() {
    let scene = generate_scene(&spec(1)).unwrap();
    let mut counts = [0usize; 6];
    for &v in &scene.labels.values {
        counts[v as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn drop_all_and_drop_none() {
    let all = generate_scene(&SceneSpec { degradation: Degradation { p_drop: 1.0, ..Default::default() }, ..spec(2) }).unwrap();
    assert!(all.layers.masks.iter().all(|m| m.count() == 0));
    let none = generate_scene(&SceneSpec { degradation: Degradation { p_drop: 0.0, ..Default::default() }, ..spec(2) }).unwrap();
    assert_eq!(none.layers, none.clean_layers);
    assert_eq!(none.labels, all.labels);
}

/// Grid of separated 3x3 squares.
fn squares(n_side: usize) -> MapLayerSet {
    let size = n_side * 6;
    let mut m = BinaryMask::empty(size, size);
    for by in 0..n_side {
        for bx in 0..n_side {
            for y in 0..3 {
                for x in 0..3 {
                    m.set(by * 6 + 1 + y, bx * 6 + 1 + x, true);
                }
            }
        }
    }
    MapLayerSet::new(vec!["squares".into()], vec![m], LayerEncoding::Binary).unwrap()
}

#[test]
fn drop_rate_matches_probability() {
    let layers = squares(15);
    let total = components(&layers.masks[0]).len();
    assert_eq!(total, 225);
    for seed in 0..5 {
        let out = degrade_layers(&layers, &Degradation { p_drop: 0.5, ..Default::default() }, seed).unwrap();
        let kept = components(&out.masks[0]).len() as f64 / total as f64;
        assert!((0.4..=0.6).contains(&kept), "seed {seed}: kept {kept}");
    }
}

fn nearest_source(mask: &BinaryMask, y: usize, x: usize) -> f64 {
    let mut best = f64::INFINITY;
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        let (sy, sx) = ((i / mask.width) as f64, (i % mask.width) as f64);
        best = best.min(((sy - y as f64).powi(2) + (sx - x as f64).powi(2)).sqrt());
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn degraded_pixels_stay_near_the_source(seed in any::<u64>(), jitter in 0usize..4, morph in -1i32..3) {
        let layers = squares(4);
        let d = Degradation { p_drop: 0.2, jitter_px: jitter, dilate_erode_px: morph };
        let out = degrade_layers(&layers, &d, seed).unwrap();
        let bound = jitter as f64 * 2f64.sqrt() + morph.max(0) as f64 + 1e-9;
        let src = &layers.masks[0];
        let dst = &out.masks[0];
        for y in 0..dst.height {
            for x in 0..dst.width {
                if dst.get(y, x) {
                    prop_assert!(nearest_source(src, y, x) <= bound);
                }
            }
        }
    }

    #[test]
    fn sparsified_labels_are_a_subset(seed in any::<u64>(), keep in 0.1f64..1.0) {
        let dense = generate_scene(&SceneSpec::with_size(64, seed % 16)).unwrap().labels;
        let sparse = sparsify_labels(&dense, keep, seed).unwrap();
        for (a, b) in dense.values.iter().zip(&sparse.values) {
            prop_assert!(*b == *a || *b == UNDEFINED);
        }
    }
}

#[test]
fn sparse_scene_keeps_target_fraction() {
    let scene = generate_scene(&SceneSpec { keep_fraction: 0.3, ..spec(5) }).unwrap();
    let frac = scene.labels.labeled_fraction();
    assert!((frac - 0.3).abs() <= 0.05, "{frac}");
    assert_eq!(scene.dense_labels.labeled_count(), 256 * 256);
}

#[test]
fn class_prior_dominated_by_impervious_and_buildings() {
    let mut counts = [0usize; 6];
    for seed in 0..4 {
        for &v in &generate_scene(&spec(seed)).unwrap().labels.values {
            counts[v as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let share = |k: usize| counts[k] as f64 / total as f64;
    assert!(share(0) > share(1) && share(1) > share(4), "{counts:?}");
    assert!(share(4) < 0.05 && share(4) > 0.002, "{counts:?}");
}
