//! Load → split → normalize → train → checkpoint, and the evaluation paths.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qfid_core::data::{filter_classes, load_idx, split_and_cap, ClassMap, DatasetSplit, LabeledImage, SplitOptions};
use qfid_core::encoding::Normalizer;
use qfid_core::training::{train_with, Example, LossRecord, ModelState, Prediction};
use qfid_core::{Error, Result};

use crate::checkpoint::{metrics_csv, Checkpoint, FORMAT_VERSION};
use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn load_images(cfg: &RunConfig, dir: &Path) -> Result<Vec<LabeledImage>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("data directory {} does not exist", dir.display())));
    }
    let images = dir.join(&cfg.data.images);
    let labels = dir.join(&cfg.data.labels);
    for p in [&images, &labels] {
        if !p.is_file() {
            return Err(Error::Config(format!("dataset file {} not found", p.display())));
        }
    }
    load_idx(&images, &labels)
}

pub struct PreparedData {
    pub split: DatasetSplit,
    pub normalizer: Normalizer,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn examples(items: &[LabeledImage], normalizer: &Normalizer, classes: &ClassMap) -> Result<Vec<Example>> {
    items
        .iter()
        .map(|im| {
            let class = classes
                .class_of(im.label)
                .ok_or_else(|| Error::Argument(format!("label {} is not a model class", im.label)))?;
            Example::new(&normalizer.apply(&im.raw_features())?, class)
        })
        .collect()
}

/// Filters and splits with the run seed, fitting the normalizer on the training split.
pub fn prepare(cfg: &RunConfig, images: &[LabeledImage]) -> Result<PreparedData> {
    let filtered = filter_classes(images, &cfg.data.classes)?;
    let options = SplitOptions {
        test_fraction: cfg.data.test_fraction,
        train_cap_per_class: cfg.data.train_cap_per_class,
        test_cap_per_class: cfg.data.test_cap_per_class,
    };
    let split = split_and_cap(&filtered, &options, cfg.train.seed)?;
    let raw: Vec<Vec<f64>> = split.train.iter().map(LabeledImage::raw_features).collect();
    let normalizer = Normalizer::fit(&raw)?;
    let train = examples(&split.train, &normalizer, &split.class_map)?;
    let test = examples(&split.test, &normalizer, &split.class_map)?;
    Ok(PreparedData {
        split,
        normalizer,
        train,
        test,
    })
}

pub struct RunOutput {
    pub checkpoint: Checkpoint,
    pub records: Vec<LossRecord>,
}

pub fn train_run(cfg: &RunConfig, data_dir: &Path, on_epoch: impl FnMut(&LossRecord)) -> Result<RunOutput> {
    cfg.validate()?;
    let images = load_images(cfg, data_dir)?;
    let data = prepare(cfg, &images)?;
    log::info!(
        "training on {} samples, testing on {} ({:?})",
        data.train.len(),
        data.test.len(),
        data.split.class_map.labels()
    );
    let model = ModelState::new(
        cfg.circuit()?,
        &cfg.mps_config(),
        data.split.class_map.labels().to_vec(),
        cfg.train.seed,
    )?;
    let (model, records) = train_with(model, &data.train, Some(&data.test), &cfg.train, on_epoch)?;
    let checkpoint = Checkpoint {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        seed: cfg.train.seed,
        epochs_completed: records.len(),
        normalizer: data.normalizer,
        model,
    };
    Ok(RunOutput { checkpoint, records })
}

/// Writes `checkpoint.json` and `metrics.csv` into `out_dir`.
pub fn write_run(out_dir: &Path, run: &RunOutput) -> Result<(PathBuf, PathBuf)> {
    let io = |path: &Path, e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    let metrics = out_dir.join(METRICS_FILE);
    run.checkpoint.save(&ckpt)?;
    fs::write(&metrics, metrics_csv(&run.records)).map_err(|e| io(&metrics, e))?;
    Ok((ckpt, metrics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            other => Err(Error::Argument(format!("unknown split {other:?} (train, test, all)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// Original labels in class-index order.
    pub labels: Vec<u8>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Re-derives the checkpoint's split on `images` and scores the chosen part.
pub fn evaluate(ckpt: &Checkpoint, images: &[LabeledImage], split: Split) -> Result<EvalReport> {
    let model = &ckpt.model;
    let class_map = ClassMap::new(&model.classes)?;
    let items = match split {
        Split::All => filter_classes(images, &model.classes)?.items,
        Split::Train | Split::Test => {
            let data = prepare(&ckpt.config, images)?;
            if split == Split::Train {
                data.split.train
            } else {
                data.split.test
            }
        }
    };
    let examples = examples(&items, &ckpt.normalizer, &class_map)?;
    let readout = ckpt.config.train.readout;
    let confusion = model.confusion(&examples, readout)?;
    let correct: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        samples: examples.len(),
        accuracy: if examples.is_empty() {
            0.0
        } else {
            correct as f64 / examples.len() as f64
        },
        labels: model.classes.clone(),
        confusion,
    })
}

/// Classifies raw 0–255 pixels.
pub fn predict_pixels(ckpt: &Checkpoint, pixels: &[u8]) -> Result<Prediction> {
    let raw: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
    let features = ckpt.normalizer.apply(&raw)?;
    let example = Example::new(&features, 0)?;
    ckpt.model.predict(&example.input, ckpt.config.train.readout)
}

/// Process exit status for an error: 2 configuration or usage, 3 data, format
/// or checkpoint, 4 training divergence.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Training { .. } => 4,
        Error::Format { .. } | Error::Load(_) | Error::Layout(_) | Error::Shape(_) | Error::Domain(_) => 3,
        _ => 2,
    }
}
