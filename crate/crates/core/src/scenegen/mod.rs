//! Deterministic synthetic scenes: optical imagery, imperfect map layers and
//! dense or sparse reference labels.

mod degrade;
mod paint;
mod sparsify;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use mapfuse_tensor::name_seed;

use crate::error::{Error, Result};
use crate::rasters::{default_layer_names, BinaryMask, LabelMap, LayerEncoding, MapLayerSet, MultiChannelRaster};

pub use degrade::{components, degrade_layers, morph};
pub use sparsify::sparsify_labels;

use paint::Canvas;

pub const IMPERVIOUS: u8 = 0;
pub const BUILDING: u8 = 1;
pub const LOW_VEGETATION: u8 = 2;
pub const TREE: u8 = 3;
pub const CAR: u8 = 4;
pub const CLUTTER: u8 = 5;

/// Layer slots, in the order of [`default_layer_names`].
pub const LAYER_ROADS: usize = 0;
pub const LAYER_BUILDINGS: usize = 1;
pub const LAYER_VEGETATION: usize = 2;
pub const LAYER_WATER: usize = 3;

pub fn default_class_names() -> Vec<String> {
    ["impervious", "building", "low_vegetation", "tree", "car", "clutter"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Per-class object counts and size ranges (inclusive, pixels), tuned for
/// a 256x256 scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectSpec {
    pub buildings: usize,
    pub building_side: [usize; 2],
    pub roads: usize,
    pub road_width: [usize; 2],
    pub low_vegetation: usize,
    pub vegetation_radius: [usize; 2],
    pub trees: usize,
    pub tree_radius: [usize; 2],
    pub cars: usize,
    pub car_length: [usize; 2],
    pub clutter: usize,
    pub clutter_side: [usize; 2],
    pub water: usize,
    pub water_radius: [usize; 2],
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            buildings: 18,
            building_side: [18, 44],
            roads: 3,
            road_width: [16, 22],
            low_vegetation: 10,
            vegetation_radius: [16, 40],
            trees: 40,
            tree_radius: [5, 12],
            cars: 14,
            car_length: [16, 22],
            clutter: 12,
            clutter_side: [6, 14],
            water: 1,
            water_radius: [12, 24],
        }
    }
}

impl ObjectSpec {
    /// Counts scaled by area relative to a 256x256 scene (at least one each).
    pub fn scaled_for(size: usize) -> Self {
        let base = Self::default();
        let f = (size * size) as f64 / (256.0 * 256.0);
        let s = |n: usize| ((n as f64 * f).round() as usize).max(1);
        Self {
            buildings: s(base.buildings),
            roads: s(base.roads),
            low_vegetation: s(base.low_vegetation),
            trees: s(base.trees),
            cars: s(base.cars),
            clutter: s(base.clutter),
            water: s(base.water),
            ..base
        }
    }

    fn ranges(&self) -> [(&'static str, [usize; 2]); 7] {
        [
            ("building_side", self.building_side),
            ("road_width", self.road_width),
            ("vegetation_radius", self.vegetation_radius),
            ("tree_radius", self.tree_radius),
            ("car_length", self.car_length),
            ("clutter_side", self.clutter_side),
            ("water_radius", self.water_radius),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Degradation {
    pub p_drop: f64,
    pub jitter_px: usize,
    /// Positive dilates, negative erodes.
    pub dilate_erode_px: i32,
}

impl Degradation {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("p_drop must lie in [0, 1], got {}", self.p_drop)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub size: usize,
    pub channels: usize,
    pub classes: Vec<String>,
    pub layer_names: Vec<String>,
    pub objects: ObjectSpec,
    /// Per-pixel Gaussian noise.
    pub texture_sigma: f32,
    /// Per-object color offset.
    pub object_sigma: f32,
    /// Maximum slope of the per-scene illumination gradient.
    pub illumination: f32,
    pub degradation: Degradation,
    pub keep_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 256,
            channels: 3,
            classes: default_class_names(),
            layer_names: default_layer_names(),
            objects: ObjectSpec::default(),
            texture_sigma: 0.05,
            object_sigma: 0.04,
            illumination: 0.2,
            degradation: Degradation::default(),
            keep_fraction: 1.0,
        }
    }
}

impl SceneSpec {
    pub fn with_size(size: usize, seed: u64) -> Self {
        Self { seed, size, objects: ObjectSpec::scaled_for(size), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 64 {
            return Err(Error::Config(format!("scene size must be at least 64, got {}", self.size)));
        }
        if self.channels == 0 {
            return Err(Error::Config("scenes need at least one optical channel".into()));
        }
        if self.classes.len() != 6 {
            return Err(Error::Config(format!("the generator paints 6 classes, table has {}", self.classes.len())));
        }
        if self.layer_names.len() != 4 {
            return Err(Error::Config(format!("the generator draws 4 map layers, got {}", self.layer_names.len())));
        }
        for (name, [lo, hi]) in self.objects.ranges() {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("invalid {name} range [{lo}, {hi}]")));
            }
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep_fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        if !(self.texture_sigma >= 0.0 && self.object_sigma >= 0.0 && self.illumination >= 0.0) {
            return Err(Error::Config("noise parameters must be non-negative".into()));
        }
        self.degradation.validate()
    }
}

/// Objects actually placed (placement gives up after repeated collisions).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedCounts {
    pub buildings: usize,
    pub roads: usize,
    pub low_vegetation: usize,
    pub trees: usize,
    pub cars: usize,
    pub clutter: usize,
    pub water: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub optical: MultiChannelRaster,
    pub layers: MapLayerSet,
    /// Layers before degradation.
    pub clean_layers: MapLayerSet,
    pub labels: LabelMap,
    /// Labels before sparsification.
    pub dense_labels: LabelMap,
    pub placed: PlacedCounts,
    pub spec: SceneSpec,
}

const PLACEMENT_ATTEMPTS: usize = 100;

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn base_color(rng: &mut ChaCha8Rng, base: [f32; 3], sigma: f32) -> [f32; 3] {
    let n = Normal::new(0.0f32, sigma.max(1e-12)).unwrap();
    base.map(|b| b + if sigma > 0.0 { n.sample(rng) } else { 0.0 })
}

const GROUND: [f32; 3] = [0.55, 0.53, 0.50];
const ASPHALT: [f32; 3] = [0.45, 0.45, 0.47];
const ROOF: [f32; 3] = [0.53, 0.50, 0.48];
const GRASS: [f32; 3] = [0.42, 0.58, 0.30];
const FOLIAGE: [f32; 3] = [0.18, 0.38, 0.16];
const WATER: [f32; 3] = [0.12, 0.22, 0.40];

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let s = spec.size;
    let o = &spec.objects;
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(spec.seed, "scene.layout"));
    let mut canvas = Canvas::new(s, GROUND);
    let mut layers = vec![BinaryMask::empty(s, s); 4];
    let mut placed = PlacedCounts::default();

    for _ in 0..o.low_vegetation {
        let shape = canvas.random_ellipse(&mut rng, o.vegetation_radius);
        let color = base_color(&mut rng, GRASS, spec.object_sigma);
        canvas.paint(&shape, LOW_VEGETATION, color, |_, _| true);
        shape.draw_into(&mut layers[LAYER_VEGETATION]);
        placed.low_vegetation += 1;
    }
    for _ in 0..o.water {
        let shape = canvas.random_ellipse(&mut rng, o.water_radius);
        let color = base_color(&mut rng, WATER, spec.object_sigma);
        canvas.paint(&shape, CLUTTER, color, |_, _| true);
        shape.draw_into(&mut layers[LAYER_WATER]);
        placed.water += 1;
    }
    for _ in 0..o.roads {
        let width = uniform(&mut rng, o.road_width);
        let shape = canvas.random_road(&mut rng, width);
        let color = base_color(&mut rng, ASPHALT, spec.object_sigma);
        canvas.paint(&shape, IMPERVIOUS, color, |_, _| true);
        shape.draw_into(&mut layers[LAYER_ROADS]);
        placed.roads += 1;
    }
    for _ in 0..o.trees {
        let shape = canvas.random_ellipse(&mut rng, o.tree_radius);
        let color = base_color(&mut rng, FOLIAGE, spec.object_sigma);
        canvas.paint(&shape, TREE, color, |_, _| true);
        placed.trees += 1;
    }
    // Buildings keep a two-pixel gap from each other and stay off roads.
    let mut occupied = BinaryMask::empty(s, s);
    for _ in 0..o.buildings {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (h, w) = (uniform(&mut rng, o.building_side), uniform(&mut rng, o.building_side));
            let shape = canvas.random_rect(&mut rng, h, w);
            if shape.hits(&occupied, 2) || shape.hits(&layers[LAYER_ROADS], 0) {
                continue;
            }
            let color = base_color(&mut rng, ROOF, spec.object_sigma);
            canvas.paint(&shape, BUILDING, color, |_, _| true);
            shape.draw_into(&mut layers[LAYER_BUILDINGS]);
            shape.draw_into(&mut occupied);
            placed.buildings += 1;
            break;
        }
    }
    // Cars lie entirely on road surface, one pixel apart, never on buildings.
    let mut cars = BinaryMask::empty(s, s);
    for _ in 0..o.cars {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let len = uniform(&mut rng, o.car_length);
            let wid = (len / 2).max(2);
            let (h, w) = if rng.random_bool(0.5) { (len, wid) } else { (wid, len) };
            let shape = canvas.random_rect(&mut rng, h, w);
            if !shape.inside(&layers[LAYER_ROADS]) || shape.hits(&cars, 1) || shape.hits(&occupied, 0) {
                continue;
            }
            let color = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            canvas.paint(&shape, CAR, color, |_, _| true);
            shape.draw_into(&mut cars);
            placed.cars += 1;
            break;
        }
    }
    for _ in 0..o.clutter {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (h, w) = (uniform(&mut rng, o.clutter_side), uniform(&mut rng, o.clutter_side));
            let shape = canvas.random_rect(&mut rng, h, w);
            if shape.hits(&occupied, 0) || shape.hits(&cars, 0) {
                continue;
            }
            let color = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            canvas.paint(&shape, CLUTTER, color, |_, _| true);
            placed.clutter += 1;
            break;
        }
    }

    let optical = canvas.render(&mut rng, spec.channels, spec.texture_sigma, spec.illumination);
    let dense_labels = canvas.labels();
    let clean_layers = MapLayerSet::new(spec.layer_names.clone(), layers, LayerEncoding::Binary)?;
    let layers = degrade_layers(&clean_layers, &spec.degradation, name_seed(spec.seed, "scene.degrade"))?;
    let labels = sparsify_labels(&dense_labels, spec.keep_fraction, name_seed(spec.seed, "scene.sparsify"))?;
    Ok(Scene { optical, layers, clean_layers, labels, dense_labels, placed, spec: spec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_specs() {
        let bad = [
            SceneSpec { size: 32, ..SceneSpec::default() },
            SceneSpec { keep_fraction: 0.0, ..SceneSpec::default() },
            SceneSpec { degradation: Degradation { p_drop: 1.5, ..Default::default() }, ..SceneSpec::default() },
            SceneSpec { channels: 0, ..SceneSpec::default() },
        ];
        for spec in bad {
            assert!(matches!(generate_scene(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn scaled_counts() {
        let o = ObjectSpec::scaled_for(128);
        assert_eq!(o.buildings, 5);
        assert_eq!(o.water, 1);
        assert_eq!(ObjectSpec::scaled_for(256), ObjectSpec::default());
    }
}
