use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mapfuse_core::dataset::{write_dataset, Dataset, DatasetSpec, SceneData};
use mapfuse_core::encoding::{prepare_all, EncoderRegistry, PreparedScene};
use mapfuse_core::experiments::{
    evaluate_model, run_ablation, run_ablation_on, AblationData, AblationSpec, EvalSettings,
};
use mapfuse_core::inference::{fit_window, plan_tiling, predict_tile};
use mapfuse_core::metrics::{evaluate, write_heat_map, EvalMetadata};
use mapfuse_core::models::{load_model, save_model, ArchSpec, ModelRegistry};
use mapfuse_core::rasters::palette::write_label_ppm;
use mapfuse_core::rasters::{read_labels, write_labels, write_raster};
use mapfuse_core::scenegen::{default_class_names, ObjectSpec};
use mapfuse_core::training::{train, TrainConfig};
use mapfuse_core::{Error, Result};

use crate::args::{AblateArgs, EvalArgs, GenArgs, PredictArgs, TrainArgs};

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let mut spec: DatasetSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => DatasetSpec::default(),
    };
    if let Some(size) = args.size {
        spec.scene.size = size;
        if args.config.is_none() {
            spec.scene.objects = ObjectSpec::scaled_for(size);
        }
    }
    if let Some(v) = args.scenes {
        spec.scenes = v;
    }
    if let Some(v) = args.test_scenes {
        spec.test_scenes = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.channels {
        spec.scene.channels = v;
    }
    if let Some(v) = args.p_drop {
        spec.scene.degradation.p_drop = v;
    }
    if let Some(v) = args.jitter {
        spec.scene.degradation.jitter_px = v;
    }
    if let Some(v) = args.dilate_erode {
        spec.scene.degradation.dilate_erode_px = v;
    }
    if let Some(v) = args.keep_fraction {
        spec.scene.keep_fraction = v;
    }
    spec.validate()?;
    create_dir(&args.out)?;
    let index = write_dataset(&spec, &args.out)?;
    eprintln!(
        "wrote {} train and {} test scenes to {}",
        index.train.len(),
        index.test.len(),
        args.out.display()
    );
    Ok(())
}

/// Training config file: [`TrainConfig`] fields plus an optional `arch` object.
#[derive(Debug, Default, Serialize, Deserialize)]
struct TrainFile {
    #[serde(flatten)]
    train: TrainConfig,
    #[serde(default)]
    arch: Option<ArchSpec>,
}

#[derive(Debug, Serialize)]
struct ResolvedRun<'a> {
    model: &'a str,
    encoding: &'a str,
    dataset: String,
    train: &'a TrainConfig,
    arch: &'a ArchSpec,
    /// Epoch length in iterations, as used by the schedule.
    iterations_per_epoch: usize,
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let file: TrainFile = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let mut config = file.train;
    let mut arch = file.arch.unwrap_or_default();
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.iterations_per_epoch {
        config.iterations_per_epoch = Some(v);
    }
    if let Some(v) = args.patch_size {
        config.patch_size = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = &args.optimizer {
        config.optimizer = v.clone();
    }
    if let Some(v) = args.lr {
        config.base_lr = v;
    }
    if let Some(v) = args.decoder_trunc {
        arch.decoder_trunc = v;
    }
    if let Some(v) = &args.encoding {
        arch.encoding = v.clone();
    }
    let registry = ModelRegistry::default();
    let model_name = registry.resolve(&args.model)?;
    let encoder = EncoderRegistry::default().build(&arch.encoding, arch.sdt_truncation)?;

    let dataset = Dataset::open(&args.data)?;
    let train_scenes = prepare_all(&dataset.load_split(false)?, &*encoder)?;
    let test_scenes = prepare_all(&dataset.load_split(true)?, &*encoder)?;
    if train_scenes.is_empty() {
        return Err(Error::Format("dataset has no training scenes".into()));
    }
    arch.num_classes = dataset.index.classes.len();
    arch.optical_channels = train_scenes[0].optical.channels;
    arch.layer_channels = train_scenes[0].layers.channels;

    let (model, log) = train(&registry, model_name, &arch, &train_scenes, &test_scenes, &config)?;
    create_dir(&args.out)?;
    save_model(&*model, &args.out.join("model"))?;
    log.write_csv(&args.out.join("train_log.csv"))?;
    write_json(&args.out.join("train_summary.json"), &log.summary())?;
    write_json(
        &args.out.join("config.json"),
        &ResolvedRun {
            model: model_name,
            encoding: &arch.encoding,
            dataset: args.data.display().to_string(),
            train: &config,
            arch: model.arch(),
            iterations_per_epoch: log.iterations_per_epoch,
        },
    )?;
    if !test_scenes.is_empty() {
        let settings = EvalSettings { erode_radius: args.erode, ..EvalSettings::default() };
        let mut report = evaluate_model(&*model, &test_scenes, &dataset.index.classes, &settings)?;
        report.metadata = EvalMetadata {
            model: Some(model_name.to_string()),
            dataset: Some(format!("seed {}", dataset.index.spec.seed)),
            seed: Some(config.seed),
        };
        write_json(&args.out.join("eval.json"), &report)?;
        write_text(&args.out.join("eval.txt"), &report.to_table())?;
        eprint!("{}", report.to_table());
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&ModelRegistry::default(), &args.run.join("model"))?;
    let arch = model.arch().clone();
    if let Some(e) = &args.encoding {
        if *e != arch.encoding {
            return Err(Error::Config(format!("model was trained on `{}` layers, not `{e}`", arch.encoding)));
        }
    }
    let encoder = EncoderRegistry::default().build(&arch.encoding, arch.sdt_truncation)?;
    let dataset = Dataset::open(&args.data)?;
    let ids: Vec<String> = match &args.scene {
        Some(id) => vec![id.clone()],
        None => dataset.index.test.clone(),
    };
    create_dir(&args.out)?;
    for id in ids {
        let scene: SceneData = dataset.load_scene(&id)?;
        let prepared = PreparedScene::new(&scene, &*encoder)?;
        let win = fit_window(args.window, prepared.dims(), arch.input_multiple())?;
        let plan = plan_tiling(prepared.dims(), win, args.stride.min(win))?;
        let (scores, labels) = predict_tile(&*model, &prepared.optical, &prepared.layers, &plan)?;
        write_raster(&scores, &args.out.join(format!("{id}_scores.mfr")))?;
        write_labels(&labels, &args.out.join(format!("{id}_labels.mfr")))?;
        write_label_ppm(&labels, &args.out.join(format!("{id}_labels.ppm")))?;
        log::info!("predicted {id}");
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let predicted = read_labels(&args.pred)?;
    let reference = read_labels(&args.r#ref)?;
    let classes = match &args.data {
        Some(d) => Dataset::open(d)?.index.classes,
        None => default_class_names(),
    };
    let report = evaluate(&predicted, &reference, &classes, args.erode)?;
    let json = report.to_json()?;
    println!("{json}");
    if let Some(p) = &args.out {
        write_text(p, &(json + "\n"))?;
    }
    if let Some(p) = &args.heatmap {
        write_heat_map(&report.confusion, p)?;
    }
    if args.table {
        eprint!("{}", report.to_table());
    }
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let mut spec: AblationSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => AblationSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seeds = vec![s];
    }
    if let Some(m) = &args.model {
        spec.models = m.clone();
    }
    if let Some(e) = &args.encoding {
        spec.encodings = e.clone();
    }
    let report = match &args.data {
        None => run_ablation(&spec)?,
        Some(dir) => {
            let dataset = Dataset::open(dir)?;
            spec.dataset = dataset.index.spec.clone();
            let data = AblationData {
                degradation: dataset.index.spec.scene.degradation.clone(),
                train: dataset.load_split(false)?,
                test: dataset.load_split(true)?,
                dataset_name: dir.display().to_string(),
            };
            spec.degradations.clear();
            run_ablation_on(&spec, &[data])?
        }
    };
    create_dir(&args.out)?;
    write_json(&args.out.join("ablation.json"), &report)?;
    let md = report.to_markdown();
    write_text(&args.out.join("ablation.md"), &md)?;
    print!("{md}");
    Ok(())
}
