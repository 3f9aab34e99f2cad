use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{argmax, ModelState};
use super::optim::LrSchedule;
use super::NnError;
use crate::data::Dataset;
use crate::genome::Genome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub lr: LrSchedule,
    /// Seeds weight initialisation and the shuffle stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            momentum: 0.9,
            lr: LrSchedule::baseline(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    /// Mean mini-batch loss of every epoch run by this call.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch SGD until `epochs_target` epochs have been completed.
///
/// Resuming continues both the epoch counter and the shuffle stream, so
/// training to `e1` and resuming to `e2` produces the same weights as
/// training to `e2` in one call.
pub fn train(
    genome: &Genome,
    dataset: &Dataset,
    epochs_target: u32,
    resume: Option<ModelState>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    cfg.lr.validate()?;
    if cfg.batch_size == 0 {
        return Err(NnError::InvalidSchedule("batch size must be positive".into()));
    }
    let mut state = match resume {
        Some(state) => {
            if state.genome() != genome {
                return Err(NnError::CheckpointMismatch(format!(
                    "checkpoint is for {}, asked to train {}",
                    state.genome(),
                    genome
                )));
            }
            if state.architecture().input() != dataset.shape() || state.architecture().num_classes() != dataset.num_classes {
                return Err(NnError::CheckpointMismatch("checkpoint input shape differs from dataset".into()));
            }
            if epochs_target <= state.epochs_completed {
                return Err(NnError::NothingToTrain {
                    completed: state.epochs_completed,
                    target: epochs_target,
                });
            }
            state
        }
        None => {
            if epochs_target == 0 {
                return Err(NnError::NothingToTrain { completed: 0, target: 0 });
            }
            ModelState::init(genome, dataset.shape(), dataset.num_classes, cfg.seed)?
        }
    };

    let mut loss_curve = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    while state.epochs_completed < epochs_target {
        let epoch = state.epochs_completed + 1;
        let lr = cfg.lr.lr_at_epoch(epoch);
        order.sort_unstable();
        order.shuffle(state.rng_mut());
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = dataset.images.gather(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i]).collect();
            let (loss, grads) = state.loss_and_grads(&x, &labels)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            state.sgd_momentum_step(&grads, lr, cfg.momentum);
            total += loss;
            batches += 1;
        }
        state.epochs_completed = epoch;
        loss_curve.push(total / batches.max(1) as f64);
    }
    Ok(TrainOutcome { state, loss_curve })
}

const EVAL_BATCH: usize = 100;

/// Fraction of samples whose argmax prediction equals the label.
pub fn test_accuracy(model: &ModelState, dataset: &Dataset) -> Result<f64, NnError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let probs = model.forward(&dataset.images.gather(chunk))?;
        correct += probs
            .iter()
            .zip(chunk)
            .filter(|(p, &i)| argmax(p) == dataset.labels[i])
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Mean cross-entropy of the model over a whole dataset.
pub fn dataset_loss(model: &ModelState, dataset: &Dataset) -> Result<f64, NnError> {
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_BATCH) {
        let probs = model.forward(&dataset.images.gather(chunk))?;
        for (p, &i) in probs.iter().zip(chunk) {
            total -= p[dataset.labels[i]].ln();
        }
    }
    Ok(total / dataset.len().max(1) as f64)
}
