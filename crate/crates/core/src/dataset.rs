//! Dataset directories: `dataset.json` plus `scenes/<id>/` holding
//! `optical.mfr`, `layer_<name>.mfr`, `labels.mfr` and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mapfuse_tensor::name_seed;

use crate::error::{Error, Result};
use crate::rasters::{self, LabelMap, LayerEncoding, MapLayerSet, MultiChannelRaster};
use crate::scenegen::{generate_scene, Scene, SceneSpec};

pub const GENERATOR_VERSION: &str = "mapfuse-scenegen/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub seed: u64,
    pub scenes: usize,
    pub test_scenes: usize,
    /// Template for every scene; its `seed` is replaced per scene.
    pub scene: SceneSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { seed: 0, scenes: 26, test_scenes: 6, scene: SceneSpec::default() }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.test_scenes == 0 || self.test_scenes >= self.scenes {
            return Err(Error::Config(format!(
                "need at least one train and one test scene ({} scenes, {} test)",
                self.scenes, self.test_scenes
            )));
        }
        self.scene.validate()
    }

    pub fn scene_id(i: usize) -> String {
        format!("scene_{i:03}")
    }

    pub fn scene_spec(&self, i: usize) -> SceneSpec {
        SceneSpec { seed: name_seed(self.seed, &Self::scene_id(i)), ..self.scene.clone() }
    }

    pub fn is_test(&self, i: usize) -> bool {
        i >= self.scenes - self.test_scenes
    }
}

/// Scenes held in memory, split into train and test.
#[derive(Clone, Debug)]
pub struct SplitScenes {
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

pub fn generate_scenes(spec: &DatasetSpec) -> Result<SplitScenes> {
    spec.validate()?;
    let mut out = SplitScenes { train: Vec::new(), test: Vec::new() };
    for i in 0..spec.scenes {
        let scene = generate_scene(&spec.scene_spec(i))?;
        if spec.is_test(i) {
            out.test.push(scene);
        } else {
            out.train.push(scene);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub generator_version: String,
    pub classes: Vec<String>,
    pub layers: Vec<String>,
    pub size: usize,
    pub channels: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub spec: DatasetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub id: String,
    pub seed: u64,
    pub optical: String,
    pub layers: Vec<LayerEntry>,
    pub labels: String,
    pub classes: Vec<String>,
}

/// A scene as read back from disk; layers come back binary.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneData {
    pub id: String,
    pub optical: MultiChannelRaster,
    pub layers: MapLayerSet,
    pub labels: LabelMap,
}

impl From<(&str, &Scene)> for SceneData {
    fn from((id, s): (&str, &Scene)) -> Self {
        SceneData { id: id.to_string(), optical: s.optical.clone(), layers: s.layers.clone(), labels: s.labels.clone() }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_scene(dir: &Path, id: &str, scene: &Scene) -> Result<SceneManifest> {
    create_dir(dir)?;
    rasters::write_raster(&scene.optical, &dir.join("optical.mfr"))?;
    let mut layers = Vec::new();
    for (name, mask) in scene.layers.layer_names.iter().zip(&scene.layers.masks) {
        let file = format!("layer_{name}.mfr");
        rasters::write_mask(mask, &dir.join(&file))?;
        layers.push(LayerEntry { name: name.clone(), path: file });
    }
    rasters::write_labels(&scene.labels, &dir.join("labels.mfr"))?;
    let manifest = SceneManifest {
        id: id.to_string(),
        seed: scene.spec.seed,
        optical: "optical.mfr".into(),
        layers,
        labels: "labels.mfr".into(),
        classes: scene.spec.classes.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Generates every scene of `spec` and writes the dataset directory.
pub fn write_dataset(spec: &DatasetSpec, root: &Path) -> Result<DatasetIndex> {
    spec.validate()?;
    let mut index = DatasetIndex {
        generator_version: GENERATOR_VERSION.into(),
        classes: spec.scene.classes.clone(),
        layers: spec.scene.layer_names.clone(),
        size: spec.scene.size,
        channels: spec.scene.channels,
        train: Vec::new(),
        test: Vec::new(),
        spec: spec.clone(),
    };
    for i in 0..spec.scenes {
        let id = DatasetSpec::scene_id(i);
        let scene = generate_scene(&spec.scene_spec(i))?;
        write_scene(&root.join("scenes").join(&id), &id, &scene)?;
        log::info!("wrote {id}");
        if spec.is_test(i) {
            index.test.push(id);
        } else {
            index.train.push(id);
        }
    }
    write_json(&root.join("dataset.json"), &index)?;
    Ok(index)
}

pub struct Dataset {
    pub root: PathBuf,
    pub index: DatasetIndex,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let index: DatasetIndex = read_json(&root.join("dataset.json"))?;
        Ok(Self { root: root.to_path_buf(), index })
    }

    pub fn load_scene(&self, id: &str) -> Result<SceneData> {
        read_scene(&self.root.join("scenes").join(id), self.index.classes.len())
    }

    pub fn load_split(&self, test: bool) -> Result<Vec<SceneData>> {
        let ids = if test { &self.index.test } else { &self.index.train };
        ids.iter().map(|id| self.load_scene(id)).collect()
    }
}

pub fn read_scene(dir: &Path, classes: usize) -> Result<SceneData> {
    let m: SceneManifest = read_json(&dir.join("manifest.json"))?;
    let optical = rasters::read_raster(&dir.join(&m.optical))?;
    let labels = rasters::read_labels(&dir.join(&m.labels))?;
    labels.validate(classes)?;
    let mut names = Vec::new();
    let mut masks = Vec::new();
    for l in &m.layers {
        names.push(l.name.clone());
        masks.push(rasters::read_mask(&dir.join(&l.path))?);
    }
    let layers = MapLayerSet::new(names, masks, LayerEncoding::Binary)?;
    let dims = (optical.height, optical.width);
    if layers.dims() != dims || (labels.height, labels.width) != dims {
        return Err(Error::Dimension(format!("scene {} members differ in size", m.id)));
    }
    Ok(SceneData { id: m.id, optical, layers, labels })
}
