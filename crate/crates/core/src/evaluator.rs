//! Fitness evaluation: the common contract, a CNN evaluator that really
//! trains and tests, and a closed-form surrogate for cheap, reproducible runs.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::Dataset;
use crate::genome::{cost_estimate, Genome, GenomeError, LayerGene, ShapeSpec};
use crate::nn::{test_accuracy, train, ModelState, NnError, TrainConfig};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Training(#[from] NnError),
    #[error("cannot resume from {from} epochs to {target}")]
    InvalidResume { from: u32, target: u32 },
}

/// Result of one fitness evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub canonical_key: String,
    pub epochs: u32,
    pub accuracy: f64,
    /// Training plus testing time of this evaluation only; a resumed
    /// evaluation counts just the incremental epochs.
    pub wall_seconds: f64,
    pub worker_id: usize,
    pub checkpoint_ref: Option<String>,
}

/// A partially trained network to continue from.
#[derive(Debug, Clone)]
pub struct Resume {
    pub epochs: u32,
    /// Weights, for evaluators that keep them.
    pub model: Option<Arc<ModelState>>,
}

#[derive(Debug, Clone)]
pub struct EvaluationOutcome {
    pub record: EvaluationRecord,
    pub model: Option<ModelState>,
}

pub trait Evaluator: Send + Sync {
    /// Trains `genome` up to `epochs_target` epochs (continuing from `resume`
    /// when given) and tests it.
    fn evaluate(
        &self,
        genome: &Genome,
        epochs_target: u32,
        resume: Option<&Resume>,
        worker_id: usize,
    ) -> Result<EvaluationOutcome, EvaluationError>;

    /// Input resolution every genome must be valid for.
    fn input_shape(&self) -> ShapeSpec;

    fn name(&self) -> &'static str;
}

fn check_resume(resume: Option<&Resume>, target: u32) -> Result<u32, EvaluationError> {
    match resume {
        Some(r) if r.epochs >= target => Err(EvaluationError::InvalidResume {
            from: r.epochs,
            target,
        }),
        Some(r) => Ok(r.epochs),
        None => Ok(0),
    }
}

/// Constants of the surrogate landscape and time model.
///
/// Accuracy follows `a_max * (1 - exp(-epochs / tau))` where
///
/// ```text
/// a_max = base
///       + depth_gain * (1 - exp(-skips / depth_scale))
///       + pool_gain * pools / max_pools
///       + alternation_gain * (fraction of adjacent genes of different type)
///       + width_gain * (mean over convs of clamp(log2(filters / 64) / 2, 0, 1))
///       - early_pool_penalty * (fraction of pools placed before the first skip)
///       - excess_depth_penalty * max(0, skips - comfortable_depth)
/// ```
///
/// clamped to `[0, 0.99]`. Simulated seconds are
/// `seconds_per_mac_epoch * mac_count * epochs`, plus `overhead_seconds`
/// for an evaluation that starts from scratch.
///
/// These values give the GA a non-trivial landscape; they make no claim
/// about real CNN behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    pub base: f64,
    pub depth_gain: f64,
    pub depth_scale: f64,
    pub pool_gain: f64,
    pub alternation_gain: f64,
    pub width_gain: f64,
    pub early_pool_penalty: f64,
    pub excess_depth_penalty: f64,
    pub comfortable_depth: usize,
    /// Learning-curve time constant, in epochs.
    pub tau: f64,
    pub seconds_per_mac_epoch: f64,
    pub overhead_seconds: f64,
    pub num_classes: usize,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            base: 0.35,
            depth_gain: 0.30,
            depth_scale: 6.0,
            pool_gain: 0.10,
            alternation_gain: 0.08,
            width_gain: 0.05,
            early_pool_penalty: 0.05,
            excess_depth_penalty: 0.004,
            comfortable_depth: 20,
            tau: 12.0,
            seconds_per_mac_epoch: 3e-8,
            overhead_seconds: 30.0,
            num_classes: 10,
        }
    }
}

/// Asymptotic accuracy of a genome under the surrogate landscape.
pub fn surrogate_a_max(genome: &Genome, input: ShapeSpec, p: &SurrogateParams) -> f64 {
    let layers = genome.layers();
    let skips = genome.skip_count();
    let pools = genome.pool_count();
    let max_pools = input.max_pools();

    let depth = 1.0 - (-(skips as f64) / p.depth_scale).exp();
    let pool = if max_pools == 0 { 0.0 } else { pools as f64 / max_pools as f64 };
    let alternation = if layers.len() < 2 {
        0.0
    } else {
        let changes = layers.windows(2).filter(|w| w[0].is_pool() != w[1].is_pool()).count();
        changes as f64 / (layers.len() - 1) as f64
    };
    let width = {
        let convs: Vec<u32> = layers
            .iter()
            .filter_map(|l| match *l {
                LayerGene::Skip {
                    filters_1,
                    filters_2,
                } => Some([filters_1, filters_2]),
                LayerGene::Pool(_) => None,
            })
            .flatten()
            .collect();
        if convs.is_empty() {
            0.0
        } else {
            convs
                .iter()
                .map(|&f| ((f as f64 / 64.0).log2() / 2.0).clamp(0.0, 1.0))
                .sum::<f64>()
                / convs.len() as f64
        }
    };
    let early_pools = layers.iter().take_while(|l| l.is_pool()).count();
    let early = if pools == 0 { 0.0 } else { early_pools as f64 / pools as f64 };
    let excess = skips.saturating_sub(p.comfortable_depth) as f64;

    let a = p.base + p.depth_gain * depth + p.pool_gain * pool + p.alternation_gain * alternation + p.width_gain * width
        - p.early_pool_penalty * early
        - p.excess_depth_penalty * excess;
    a.clamp(0.0, 0.99)
}

pub fn surrogate_accuracy(genome: &Genome, epochs: u32, input: ShapeSpec, p: &SurrogateParams) -> f64 {
    surrogate_a_max(genome, input, p) * (1.0 - (-(epochs as f64) / p.tau).exp())
}

/// Simulated seconds to train from `from_epochs` to `to_epochs` and test.
pub fn surrogate_seconds(mac_count: u64, from_epochs: u32, to_epochs: u32, p: &SurrogateParams) -> f64 {
    let overhead = if from_epochs == 0 { p.overhead_seconds } else { 0.0 };
    p.seconds_per_mac_epoch * mac_count as f64 * to_epochs.saturating_sub(from_epochs) as f64 + overhead
}

/// Runs `work` and measures it with the monotonic clock.
pub fn measured_clock<T>(work: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = work();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    pub params: SurrogateParams,
    pub input: ShapeSpec,
}

impl SurrogateEvaluator {
    pub fn new(input: ShapeSpec, params: SurrogateParams) -> Self {
        Self { params, input }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(
        &self,
        genome: &Genome,
        epochs_target: u32,
        resume: Option<&Resume>,
        worker_id: usize,
    ) -> Result<EvaluationOutcome, EvaluationError> {
        let from = check_resume(resume, epochs_target)?;
        let cost = cost_estimate(genome, self.input, self.params.num_classes)?;
        let key = genome.canonical_key();
        Ok(EvaluationOutcome {
            record: EvaluationRecord {
                accuracy: surrogate_accuracy(genome, epochs_target, self.input, &self.params),
                wall_seconds: surrogate_seconds(cost.mac_count, from, epochs_target, &self.params),
                checkpoint_ref: Some(format!("{key}@{epochs_target}")),
                canonical_key: key,
                epochs: epochs_target,
                worker_id,
            },
            model: None,
        })
    }

    fn input_shape(&self) -> ShapeSpec {
        self.input
    }

    fn name(&self) -> &'static str {
        "surrogate"
    }
}

/// Trains the real network on `train_set` and reports accuracy on `eval_set`.
#[derive(Debug, Clone)]
pub struct CnnEvaluator {
    train_set: Arc<Dataset>,
    eval_set: Arc<Dataset>,
    config: TrainConfig,
}

impl CnnEvaluator {
    pub fn new(train_set: Arc<Dataset>, eval_set: Arc<Dataset>, config: TrainConfig) -> Self {
        Self {
            train_set,
            eval_set,
            config,
        }
    }

    /// Per-genome training seed, so that a resumed network continues the
    /// exact trajectory its first evaluation started.
    pub fn seed_for(&self, genome: &Genome) -> u64 {
        genome_seed(self.config.seed, genome)
    }
}

pub(crate) fn genome_seed(base: u64, genome: &Genome) -> u64 {
    let digest = Sha256::digest(genome.canonical_key().as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(bytes)
}

impl Evaluator for CnnEvaluator {
    fn evaluate(
        &self,
        genome: &Genome,
        epochs_target: u32,
        resume: Option<&Resume>,
        worker_id: usize,
    ) -> Result<EvaluationOutcome, EvaluationError> {
        check_resume(resume, epochs_target)?;
        let start_model = resume.and_then(|r| r.model.as_deref().cloned());
        let cfg = TrainConfig {
            seed: self.seed_for(genome),
            ..self.config.clone()
        };
        let (result, wall_seconds) = measured_clock(|| -> Result<_, NnError> {
            let outcome = train(genome, &self.train_set, epochs_target, start_model, &cfg)?;
            let accuracy = test_accuracy(&outcome.state, &self.eval_set)?;
            Ok((outcome.state, accuracy))
        });
        let (model, accuracy) = result?;
        let key = genome.canonical_key();
        Ok(EvaluationOutcome {
            record: EvaluationRecord {
                checkpoint_ref: Some(format!("{key}@{epochs_target}")),
                canonical_key: key,
                epochs: epochs_target,
                accuracy,
                wall_seconds,
                worker_id,
            },
            model: Some(model),
        })
    }

    fn input_shape(&self) -> ShapeSpec {
        self.train_set.shape()
    }

    fn name(&self) -> &'static str {
        "cnn"
    }
}
