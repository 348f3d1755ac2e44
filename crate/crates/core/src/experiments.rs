//! Ablation grids over models, encodings, seeds and map degradations, with
//! the convergence-speed comparison against a single-stream reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_scenes, DatasetSpec, SceneData};
use crate::encoding::{prepare_all, EncoderRegistry, PreparedScene};
use crate::error::{Error, Result};
use crate::inference::{fit_window, plan_tiling, predict_tile};
use crate::metrics::{evaluate_many, EvalMetadata, EvalReport};
use crate::models::{ArchSpec, ModelRegistry, SegmentationModel};
use crate::rasters::LabelMap;
use crate::scenegen::Degradation;
use crate::training::{train, TrainConfig, TrainLog, TrainSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub window: usize,
    pub stride: usize,
    pub erode_radius: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { window: 128, stride: 64, erode_radius: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSpec {
    pub models: Vec<String>,
    pub encodings: Vec<String>,
    pub seeds: Vec<u64>,
    /// Each entry replaces the dataset's degradation; empty keeps it.
    pub degradations: Vec<Degradation>,
    pub dataset: DatasetSpec,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    /// Single-stream model whose final validation OA is the convergence target.
    pub reference_model: String,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            models: vec!["segnet".into(), "fusenet".into()],
            encodings: vec!["binary".into()],
            seeds: vec![0],
            degradations: Vec::new(),
            dataset: DatasetSpec::default(),
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            reference_model: "segnet".into(),
        }
    }
}

impl AblationSpec {
    pub fn validate(&self, registry: &ModelRegistry, encoders: &EncoderRegistry) -> Result<()> {
        if self.models.is_empty() || self.seeds.is_empty() || self.encodings.is_empty() {
            return Err(Error::Config("an ablation needs at least one model, encoding and seed".into()));
        }
        for m in &self.models {
            registry.resolve(m)?;
        }
        for e in &self.encodings {
            encoders.build(e, self.arch.sdt_truncation)?;
        }
        for d in &self.degradations {
            d.validate()?;
        }
        registry.resolve(&self.reference_model)?;
        self.arch.validate()?;
        self.train.validate(&self.arch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Diverged,
    /// Trained, but never reached the convergence target.
    Unreachable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub model: String,
    pub encoding: String,
    pub seed: u64,
    pub degradation: Degradation,
    pub status: CellStatus,
    pub error: Option<String>,
    pub report: Option<EvalReport>,
    pub training: Option<TrainSummary>,
    pub target_oa: Option<f64>,
    pub iterations_to_target: Option<usize>,
    /// Iterations to target relative to the reference model.
    pub convergence_ratio: Option<f64>,
}

impl AblationCell {
    pub fn overall_accuracy(&self) -> Option<f64> {
        self.report.as_ref().and_then(|r| r.overall_accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: AblationSpec,
    pub classes: Vec<String>,
    pub cells: Vec<AblationCell>,
}

/// `iterations_to_target(fused) / iterations_to_target(single)`, or `None`
/// when either log never reaches `target_oa`.
pub fn convergence_ratio(fused: &TrainLog, single: &TrainLog, target_oa: f64) -> Option<f64> {
    let f = fused.iterations_to_target(target_oa)?;
    let s = single.iterations_to_target(target_oa)?;
    Some(f as f64 / s as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Predicts every test scene with the evaluation tiling.
pub fn predict_scenes(
    model: &dyn SegmentationModel,
    scenes: &[PreparedScene],
    settings: &EvalSettings,
) -> Result<Vec<LabelMap>> {
    scenes
        .iter()
        .map(|s| {
            let win = fit_window(settings.window, s.dims(), model.arch().input_multiple())?;
            let plan = plan_tiling(s.dims(), win, settings.stride.min(win))?;
            Ok(predict_tile(model, &s.optical, &s.layers, &plan)?.1)
        })
        .collect()
}

pub fn evaluate_model(
    model: &dyn SegmentationModel,
    scenes: &[PreparedScene],
    classes: &[String],
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let predictions = predict_scenes(model, scenes, settings)?;
    evaluate_many(predictions.iter().zip(scenes.iter().map(|s| &s.labels)), classes, settings.erode_radius)
}

/// Train and test scenes for one degradation setting.
pub struct AblationData {
    pub degradation: Degradation,
    pub train: Vec<SceneData>,
    pub test: Vec<SceneData>,
    pub dataset_name: String,
}

fn to_scene_data(prefix: &str, scenes: &[crate::scenegen::Scene]) -> Vec<SceneData> {
    scenes.iter().enumerate().map(|(i, s)| SceneData::from((format!("{prefix}{i:03}").as_str(), s))).collect()
}

/// Generates one dataset per degradation of the grid.
pub fn generate_ablation_data(spec: &AblationSpec) -> Result<Vec<AblationData>> {
    let grid = if spec.degradations.is_empty() {
        vec![spec.dataset.scene.degradation.clone()]
    } else {
        spec.degradations.clone()
    };
    grid.into_iter()
        .map(|degradation| {
            let mut ds = spec.dataset.clone();
            ds.scene.degradation = degradation.clone();
            let split = generate_scenes(&ds)?;
            Ok(AblationData {
                degradation,
                train: to_scene_data("train_", &split.train),
                test: to_scene_data("test_", &split.test),
                dataset_name: format!("synthetic-seed{}", ds.seed),
            })
        })
        .collect()
}

pub fn run_ablation(spec: &AblationSpec) -> Result<AblationReport> {
    let data = generate_ablation_data(spec)?;
    run_ablation_on(spec, &data)
}

struct TrainedCell {
    log: Option<TrainLog>,
    report: Option<EvalReport>,
    error: Option<(CellStatus, String)>,
}

fn train_cell(
    registry: &ModelRegistry,
    spec: &AblationSpec,
    model: &str,
    encoding: &str,
    seed: u64,
    train_scenes: &[PreparedScene],
    test_scenes: &[PreparedScene],
    dataset_name: &str,
) -> Result<TrainedCell> {
    let mut arch = spec.arch.clone();
    arch.encoding = encoding.to_string();
    arch.optical_channels = train_scenes[0].optical.channels;
    arch.layer_channels = train_scenes[0].layers.channels;
    let config = TrainConfig { seed, ..spec.train.clone() };
    log::info!("training {model}/{encoding} seed {seed}");
    match train(registry, model, &arch, train_scenes, test_scenes, &config) {
        Ok((trained, log)) => {
            let mut report = evaluate_model(&*trained, test_scenes, &spec.dataset.scene.classes, &spec.eval)?;
            report.metadata =
                EvalMetadata { model: Some(trained.name().to_string()), dataset: Some(dataset_name.into()), seed: Some(seed) };
            Ok(TrainedCell { log: Some(log), report: Some(report), error: None })
        }
        Err(e @ Error::Diverged(_)) => Ok(TrainedCell { log: None, report: None, error: Some((CellStatus::Diverged, e.to_string())) }),
        Err(e) => Err(e),
    }
}

/// Runs every (degradation, seed, encoding, model) cell on the given data.
/// Models that ignore map layers are trained once per seed and degradation
/// and reported under each encoding.
pub fn run_ablation_on(spec: &AblationSpec, data: &[AblationData]) -> Result<AblationReport> {
    let registry = ModelRegistry::default();
    let encoders = EncoderRegistry::default();
    spec.validate(&registry, &encoders)?;
    let reference = registry.resolve(&spec.reference_model)?;
    let mut models: Vec<&'static str> = Vec::new();
    for m in &spec.models {
        let m = registry.resolve(m)?;
        if !models.contains(&m) {
            models.push(m);
        }
    }
    let mut cells = Vec::new();
    for d in data {
        for &seed in &spec.seeds {
            let mut layerless: BTreeMap<&str, (Option<TrainLog>, Option<EvalReport>, Option<(CellStatus, String)>)> =
                BTreeMap::new();
            for encoding in &spec.encodings {
                let encoder = encoders.build(encoding, spec.arch.sdt_truncation)?;
                let train_scenes = prepare_all(&d.train, &*encoder)?;
                let test_scenes = prepare_all(&d.test, &*encoder)?;
                let mut logs: BTreeMap<&str, TrainLog> = BTreeMap::new();
                let mut run = |m: &'static str| -> Result<(Option<TrainLog>, Option<EvalReport>, Option<(CellStatus, String)>)> {
                    if !registry.uses_layers(m)? {
                        if let Some(done) = layerless.get(m) {
                            return Ok(done.clone());
                        }
                    }
                    let c = train_cell(&registry, spec, m, encoding, seed, &train_scenes, &test_scenes, &d.dataset_name)?;
                    let out = (c.log, c.report, c.error);
                    if !registry.uses_layers(m)? {
                        layerless.insert(m, out.clone());
                    }
                    Ok(out)
                };
                let mut order = models.clone();
                if !order.contains(&reference) {
                    order.insert(0, reference);
                }
                let mut results = Vec::new();
                for m in order {
                    let r = run(m)?;
                    if let Some(log) = &r.0 {
                        logs.insert(m, log.clone());
                    }
                    if models.contains(&m) {
                        results.push((m, r));
                    }
                }
                let target = logs.get(reference).and_then(|l| l.final_oa());
                for (m, (log, report, error)) in results {
                    let mut cell = AblationCell {
                        model: m.to_string(),
                        encoding: encoding.clone(),
                        seed,
                        degradation: d.degradation.clone(),
                        status: CellStatus::Ok,
                        error: None,
                        report,
                        training: log.as_ref().map(|l| l.summary()),
                        target_oa: target,
                        iterations_to_target: None,
                        convergence_ratio: None,
                    };
                    if let Some((status, msg)) = error {
                        cell.status = status;
                        cell.error = Some(msg);
                    } else if let (Some(t), Some(log), Some(reflog)) = (target, &log, logs.get(reference)) {
                        cell.iterations_to_target = log.iterations_to_target(t);
                        cell.convergence_ratio = convergence_ratio(log, reflog, t);
                        if cell.convergence_ratio.is_none() {
                            cell.status = CellStatus::Unreachable;
                        }
                    }
                    cells.push(cell);
                }
            }
        }
    }
    Ok(AblationReport { spec: spec.clone(), classes: spec.dataset.scene.classes.clone(), cells })
}

impl AblationReport {
    fn select<'a>(&'a self, model: &'a str, encoding: &'a str) -> impl Iterator<Item = &'a AblationCell> + 'a {
        self.cells.iter().filter(move |c| c.model == model && c.encoding == encoding)
    }

    /// Median over seeds (and degradations) of the overall accuracy.
    pub fn median_oa(&self, model: &str, encoding: &str) -> Option<f64> {
        median(&self.select(model, encoding).filter_map(|c| c.overall_accuracy()).collect::<Vec<_>>())
    }

    pub fn median_f1(&self, model: &str, encoding: &str, class: usize) -> Option<f64> {
        let v: Vec<f64> =
            self.select(model, encoding).filter_map(|c| c.report.as_ref().and_then(|r| r.f1(class))).collect();
        median(&v)
    }

    /// Median convergence ratio; unreachable cells count as infinitely slow.
    pub fn median_convergence_ratio(&self, model: &str, encoding: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .select(model, encoding)
            .filter(|c| c.status != CellStatus::Diverged && c.target_oa.is_some())
            .map(|c| c.convergence_ratio.unwrap_or(f64::INFINITY))
            .collect();
        median(&v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Seed-median table: one row per model and encoding, per-class F1 and OA
    /// in percent.
    pub fn to_markdown(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
        let mut rows: Vec<(String, String)> = Vec::new();
        for c in &self.cells {
            let key = (c.model.clone(), c.encoding.clone());
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        let mut out = String::from("| Method | Encoding |");
        for name in &self.classes {
            let _ = write!(out, " {name} |");
        }
        out.push_str(" OA | conv. ratio |\n|---|---|");
        out.push_str(&"---:|".repeat(self.classes.len() + 2));
        out.push('\n');
        for (m, e) in &rows {
            let _ = write!(out, "| {m} | {e} |");
            for k in 0..self.classes.len() {
                let _ = write!(out, " {} |", pct(self.median_f1(m, e, k)));
            }
            let ratio = self.median_convergence_ratio(m, e).map_or("-".to_string(), |r| format!("{r:.2}"));
            let _ = writeln!(out, " {} | {ratio} |", pct(self.median_oa(m, e)));
        }
        let failed: Vec<String> = self
            .cells
            .iter()
            .filter(|c| c.status == CellStatus::Diverged)
            .map(|c| format!("{}/{} seed {}", c.model, c.encoding, c.seed))
            .collect();
        let _ = writeln!(out, "\nMedians over seeds {:?}; F1 and OA in percent.", self.spec.seeds);
        if !failed.is_empty() {
            let _ = writeln!(out, "Diverged: {}.", failed.join(", "));
        }
        out
    }
}
