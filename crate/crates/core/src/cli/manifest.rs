use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::data::{desk_subset, load_cifar10, synthetic_dataset, Dataset, Split, SyntheticSpec, CIFAR_CLASSES};
use crate::engine::{ExperimentConfig, ScheduleMode};
use crate::evaluator::{CnnEvaluator, Evaluator, SurrogateEvaluator, SurrogateParams};
use crate::genome::ShapeSpec;
use crate::nn::{LrSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    #[default]
    Surrogate,
    Cnn,
}

/// A run manifest, read from TOML.
///
/// ```toml
/// output_dir = "runs/partial"
/// evaluator = "surrogate"
///
/// [experiment]
/// pop_size = 20
/// generations = 20
/// fitness_penalty_per_hour = 0.05
/// schedule = { mode = "linear", lo = 30, hi = 70 }
/// seed = 1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Relative paths are resolved against the manifest's directory.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub evaluator: EvaluatorKind,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    /// Input resolution seen by the surrogate.
    #[serde(default = "cifar_input")]
    pub input: ShapeSpec,
    #[serde(default)]
    pub surrogate: SurrogateParams,
    #[serde(default)]
    pub training: TrainingSection,
    pub dataset: Option<DatasetSpec>,
}

fn cifar_input() -> ShapeSpec {
    ShapeSpec::new(32, 32, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: usize,
    pub momentum: f64,
    /// Defaults to decay after epochs 1/26/43 for flat schedules and
    /// 1/30/50 for linear ones.
    pub lr: Option<LrSchedule>,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            momentum: t.momentum,
            lr: None,
            seed: t.seed,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self, schedule: ScheduleMode) -> TrainConfig {
        let lr = self.lr.clone().unwrap_or_else(|| match schedule {
            ScheduleMode::Flat { .. } => LrSchedule::baseline(),
            ScheduleMode::Linear { .. } => LrSchedule::partial_training(),
        });
        TrainConfig {
            batch_size: self.batch_size,
            momentum: self.momentum,
            lr,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Cifar10(CifarSource),
    Synthetic(SyntheticSource),
}

/// CIFAR-10 binary batches, optionally reduced to a class-balanced subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifarSource {
    pub dir: PathBuf,
    /// Train images held out (from the end) for fitness evaluation. With 0
    /// fitness is measured on the test set.
    #[serde(default = "default_validation")]
    pub validation: usize,
    pub train_per_class: Option<usize>,
    pub validation_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub downsample_to: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_validation() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    #[serde(default = "default_synthetic_train")]
    pub per_class: usize,
    #[serde(default = "default_synthetic_holdout")]
    pub validation_per_class: usize,
    #[serde(default = "default_synthetic_holdout")]
    pub test_per_class: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_synthetic_train() -> usize {
    100
}
fn default_synthetic_holdout() -> usize {
    20
}
fn default_classes() -> usize {
    CIFAR_CLASSES
}
fn default_side() -> usize {
    16
}
fn default_channels() -> usize {
    3
}
fn default_noise() -> f64 {
    SyntheticSpec::default().noise
}

/// Training, fitness and final test sets.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Arc<Dataset>,
    pub fitness: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

impl DatasetSpec {
    pub fn prepare(&self) -> Result<PreparedData, CliError> {
        match self {
            DatasetSpec::Cifar10(src) => {
                let cifar = load_cifar10(&src.dir)?;
                let subset = |d: &Dataset, per_class: Option<usize>, seed: u64| match per_class {
                    Some(n) => desk_subset(d, n, src.downsample_to, seed),
                    None if src.downsample_to.is_some() => desk_subset(d, d.len() / d.num_classes, src.downsample_to, seed),
                    None => Ok(d.clone()),
                };
                let test = subset(&cifar.test, src.test_per_class, src.seed.wrapping_add(2))?;
                let (train, fitness) = if src.validation == 0 {
                    (subset(&cifar.train, src.train_per_class, src.seed)?, test.clone())
                } else {
                    let (train, val) = cifar.train.split_tail(src.validation)?;
                    (
                        subset(&train, src.train_per_class, src.seed)?,
                        subset(&val, src.validation_per_class, src.seed.wrapping_add(1))?,
                    )
                };
                Ok(PreparedData {
                    train: Arc::new(train),
                    fitness: Arc::new(fitness),
                    test: Arc::new(test),
                })
            }
            DatasetSpec::Synthetic(src) => {
                let spec = SyntheticSpec {
                    classes: src.classes,
                    per_class: src.per_class + src.validation_per_class + src.test_per_class,
                    height: src.height,
                    width: src.width,
                    channels: src.channels,
                    noise: src.noise,
                };
                let all = synthetic_dataset(&spec, src.seed)?;
                let (rest, mut test) = all.split_tail(src.test_per_class * src.classes)?;
                test.split = Split::Test;
                let (train, fitness) = rest.split_tail(src.validation_per_class * src.classes)?;
                let fitness = if fitness.is_empty() { test.clone() } else { fitness };
                Ok(PreparedData {
                    train: Arc::new(train),
                    fitness: Arc::new(fitness),
                    test: Arc::new(test),
                })
            }
        }
    }
}

/// A manifest with its source text and where it was read from.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub text: String,
    pub path: PathBuf,
}

impl LoadedManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = super::read_text(path)?;
        let manifest = parse_manifest(&text).map_err(|e| match e {
            CliError::Invalid(reason) => CliError::Manifest {
                path: path.to_owned(),
                reason,
            },
            other => other,
        })?;
        Ok(Self {
            manifest,
            text,
            path: path.to_owned(),
        })
    }

    pub fn hash(&self) -> String {
        manifest_hash(&self.text)
    }

    /// `output_dir`, resolved against the manifest's directory.
    pub fn output_dir(&self) -> PathBuf {
        let base = self.path.parent().unwrap_or(Path::new("."));
        base.join(&self.manifest.output_dir)
    }
}

pub fn manifest_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Parses and validates a manifest without touching the filesystem.
pub fn parse_manifest(text: &str) -> Result<RunManifest, CliError> {
    let manifest: RunManifest = toml::from_str(text).map_err(|e| CliError::Invalid(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), CliError> {
        self.experiment.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        let train = self.training.train_config(self.experiment.schedule);
        train.lr.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        if train.batch_size == 0 {
            return Err(CliError::Invalid("training.batch_size must be positive".into()));
        }
        if self.evaluator == EvaluatorKind::Cnn && self.dataset.is_none() {
            return Err(CliError::Invalid("the cnn evaluator needs a [dataset] section".into()));
        }
        if !(self.surrogate.tau > 0.0) {
            return Err(CliError::Invalid("surrogate.tau must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.training.train_config(self.experiment.schedule)
    }

    /// Builds the configured evaluator; the CNN evaluator also returns the
    /// held-out test set.
    pub fn build_evaluator(&self) -> Result<(Box<dyn Evaluator>, Option<Arc<Dataset>>), CliError> {
        match self.evaluator {
            EvaluatorKind::Surrogate => Ok((Box::new(SurrogateEvaluator::new(self.input, self.surrogate.clone())), None)),
            EvaluatorKind::Cnn => {
                let data = self
                    .dataset
                    .as_ref()
                    .ok_or_else(|| CliError::Invalid("the cnn evaluator needs a [dataset] section".into()))?
                    .prepare()?;
                let eval = CnnEvaluator::new(data.train, data.fitness, self.train_config());
                Ok((Box::new(eval), Some(data.test)))
            }
        }
    }
}
