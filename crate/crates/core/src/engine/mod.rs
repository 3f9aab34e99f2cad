//! The evolution loop and everything it schedules: epoch budgets per
//! generation, wall-time regularised fitness, cached and resumable
//! evaluation, and per-generation statistics.

mod run;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::EvaluationError;
use crate::genome::{Genome, InitConfig};
use crate::operators::{OperatorConfig, OperatorError};

pub use run::{evaluate_population, run_evolution, EvolutionRun, GenerationOutcome, RunResult, RunSnapshot, RunState};
pub use store::{CacheEntry, CachedEvaluation, CheckpointIndexEntry, CheckpointStore, FitnessCache, StoredCheckpoint};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("generation {generation} outside 1..={total}")]
    GenerationOutOfRange { generation: u32, total: u32 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("checkpoint store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One member of an evaluated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub accuracy: f64,
    pub eval_wall_seconds: f64,
    pub fitness: f64,
    pub epochs_trained: u32,
    pub checkpoint_ref: Option<String>,
    pub worker_id: usize,
}

impl Individual {
    pub fn unevaluated(genome: Genome) -> Self {
        Self {
            genome,
            accuracy: 0.0,
            eval_wall_seconds: 0.0,
            fitness: 0.0,
            epochs_trained: 0,
            checkpoint_ref: None,
            worker_id: 0,
        }
    }

    pub fn with_fitness(mut self, fitness: f64) -> Self {
        self.fitness = fitness;
        self
    }

    pub fn key(&self) -> String {
        self.genome.canonical_key()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ScheduleMode {
    Flat { epochs: u32 },
    Linear { lo: u32, hi: u32 },
}

impl ScheduleMode {
    pub const BASELINE: ScheduleMode = ScheduleMode::Flat { epochs: 60 };
    pub const PARTIAL: ScheduleMode = ScheduleMode::Linear { lo: 30, hi: 70 };
}

impl Default for ScheduleMode {
    fn default() -> Self {
        Self::BASELINE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub mode: ScheduleMode,
    pub generations: u32,
}

impl EpochSchedule {
    pub fn new(mode: ScheduleMode, generations: u32) -> Self {
        Self { mode, generations }
    }

    pub fn epochs_for(&self, generation: u32) -> Result<u32, EngineError> {
        epochs_for_generation(generation, self)
    }

    /// Epochs summed over every generation.
    pub fn total_epochs(&self) -> u64 {
        (1..=self.generations)
            .map(|g| self.epochs_for(g).expect("in range") as u64)
            .sum()
    }
}

/// Training budget of the 1-based `generation`.
///
/// Linear schedules interpolate from `lo` at the first generation to `hi`
/// at the last, rounding halves up.
pub fn epochs_for_generation(generation: u32, schedule: &EpochSchedule) -> Result<u32, EngineError> {
    let total = schedule.generations;
    if generation == 0 || generation > total {
        return Err(EngineError::GenerationOutOfRange { generation, total });
    }
    Ok(match schedule.mode {
        ScheduleMode::Flat { epochs } => epochs,
        ScheduleMode::Linear { hi, .. } if total == 1 => hi,
        ScheduleMode::Linear { lo, hi } => {
            // lo + (hi - lo)(g - 1)/(G - 1), rounded half up in exact integer arithmetic
            let den = (total - 1) as i64;
            let num = lo as i64 * den + (hi as i64 - lo as i64) * (generation - 1) as i64;
            (2 * num + den).div_euclid(2 * den) as u32
        }
    })
}

/// Accuracy minus `c_per_hour` for every hour of evaluation wall time.
/// Not clamped, so fitness may be negative.
pub fn regularised_fitness(accuracy: f64, wall_seconds: f64, c_per_hour: f64) -> f64 {
    accuracy - c_per_hour * wall_seconds / SECONDS_PER_HOUR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pop_size: usize,
    pub generations: u32,
    pub operators: OperatorConfig,
    pub init: InitConfig,
    /// Fitness penalty per hour of evaluation wall time.
    pub fitness_penalty_per_hour: f64,
    pub schedule: ScheduleMode,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pop_size: 20,
            generations: 20,
            operators: OperatorConfig::default(),
            init: InitConfig::default(),
            fitness_penalty_per_hour: 0.0,
            schedule: ScheduleMode::BASELINE,
            seed: 0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    /// The regularised variant: 0.05 fitness per evaluation hour.
    pub const REGULARISED_C: f64 = 0.05;

    pub fn epoch_schedule(&self) -> EpochSchedule {
        EpochSchedule::new(self.schedule, self.generations)
    }

    pub fn is_regularised(&self) -> bool {
        self.fitness_penalty_per_hour > 0.0
    }

    pub fn is_partial_training(&self) -> bool {
        matches!(self.schedule, ScheduleMode::Linear { .. })
    }

    /// Short label of the variant this configuration runs.
    pub fn variant(&self) -> &'static str {
        match (self.is_regularised(), self.is_partial_training()) {
            (false, false) => "base",
            (true, false) => "regularised",
            (false, true) => "partial",
            (true, true) => "combined",
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.pop_size < 2 {
            return bad(format!("pop_size must be at least 2 for tournament selection, got {}", self.pop_size));
        }
        if self.generations == 0 {
            return bad("generations must be at least 1".into());
        }
        if !(self.fitness_penalty_per_hour >= 0.0) || !self.fitness_penalty_per_hour.is_finite() {
            return bad(format!("fitness penalty must be >= 0, got {}", self.fitness_penalty_per_hour));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        match self.schedule {
            ScheduleMode::Flat { epochs } if epochs == 0 => return bad("flat schedule needs epochs >= 1".into()),
            ScheduleMode::Linear { lo, hi } if lo == 0 || lo > hi => {
                return bad(format!("linear schedule needs 1 <= lo <= hi, got {lo}..{hi}"))
            }
            _ => {}
        }
        if self.init.min_depth > self.init.max_depth {
            return bad("init.min_depth exceeds init.max_depth".into());
        }
        if self.init.filter_choices.is_empty() || self.init.filter_choices.contains(&0) {
            return bad("init.filter_choices must be non-empty positive counts".into());
        }
        self.operators.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub skip: usize,
    pub pool: usize,
}

/// For each depth index, how many genomes long enough to reach it hold a
/// skip or a pool gene there.
pub fn layer_distribution<'a>(population: impl IntoIterator<Item = &'a Genome>) -> Vec<LayerCounts> {
    let mut hist: Vec<LayerCounts> = Vec::new();
    for genome in population {
        if hist.len() < genome.len() {
            hist.resize(genome.len(), LayerCounts::default());
        }
        for (d, gene) in genome.layers().iter().enumerate() {
            if gene.is_pool() {
                hist[d].pool += 1;
            } else {
                hist[d].skip += 1;
            }
        }
    }
    hist
}

/// One row of the per-individual event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationEvent {
    pub generation: u32,
    pub key: String,
    pub epochs: u32,
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub fitness: f64,
    pub cache_hit: bool,
    pub resumed_from: Option<u32>,
    /// Population index the row describes. An elite replacement reuses the
    /// victim's slot and is logged after it.
    pub slot: usize,
    pub worker: usize,
}

/// Summary of one evaluated generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u32,
    pub epochs: u32,
    pub fitness_min: f64,
    pub fitness_mean: f64,
    pub fitness_max: f64,
    pub accuracy_min: f64,
    pub accuracy_mean: f64,
    pub accuracy_max: f64,
    pub mean_depth: f64,
    /// Evaluation time actually spent in this generation; cache hits cost nothing.
    pub wall_seconds: f64,
    pub epochs_trained: u64,
    pub evaluations: usize,
    pub cache_hits: usize,
    pub layer_histogram: Vec<LayerCounts>,
}

impl GenerationStats {
    pub fn compute(generation: u32, epochs: u32, population: &[Individual], events: &[EvaluationEvent]) -> Self {
        let n = population.len().max(1) as f64;
        let (mut f_min, mut f_max, mut f_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let (mut a_min, mut a_max, mut a_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let mut depth = 0usize;
        for ind in population {
            f_min = f_min.min(ind.fitness);
            f_max = f_max.max(ind.fitness);
            f_sum += ind.fitness;
            a_min = a_min.min(ind.accuracy);
            a_max = a_max.max(ind.accuracy);
            a_sum += ind.accuracy;
            depth += ind.genome.len();
        }
        let worked: Vec<&EvaluationEvent> = events.iter().filter(|e| !e.cache_hit).collect();
        Self {
            generation,
            epochs,
            fitness_min: f_min,
            fitness_mean: f_sum / n,
            fitness_max: f_max,
            accuracy_min: a_min,
            accuracy_mean: a_sum / n,
            accuracy_max: a_max,
            mean_depth: depth as f64 / n,
            wall_seconds: worked.iter().map(|e| e.wall_seconds).sum(),
            epochs_trained: worked
                .iter()
                .map(|e| (e.epochs - e.resumed_from.unwrap_or(0)) as u64)
                .sum(),
            evaluations: worked.len(),
            cache_hits: events.len() - worked.len(),
            layer_histogram: layer_distribution(population.iter().map(|i| &i.genome)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::parse_key;

    fn linear(generations: u32) -> EpochSchedule {
        EpochSchedule::new(ScheduleMode::PARTIAL, generations)
    }

    #[test]
    fn linear_schedule_values() {
        let s = linear(20);
        assert_eq!(s.epochs_for(1).unwrap(), 30);
        assert_eq!(s.epochs_for(20).unwrap(), 70);
        assert_eq!(s.epochs_for(16).unwrap(), 62);
        assert_eq!(s.epochs_for(5).unwrap(), 38);
        assert_eq!(s.epochs_for(10).unwrap(), 49);
        assert_eq!(linear(1).epochs_for(1).unwrap(), 70);
        assert!(matches!(
            s.epochs_for(0),
            Err(EngineError::GenerationOutOfRange { generation: 0, total: 20 })
        ));
        assert!(s.epochs_for(21).is_err());
    }

    #[test]
    fn linear_schedule_matches_float_rounding() {
        for g_total in 2..40u32 {
            let s = linear(g_total);
            let mut prev = 0;
            for g in 1..=g_total {
                let exact = 30.0 + 40.0 * (g - 1) as f64 / (g_total - 1) as f64;
                let e = s.epochs_for(g).unwrap();
                assert_eq!(e as f64, (exact + 0.5).floor(), "G={g_total} g={g}");
                assert!((30..=70).contains(&e) && e >= prev);
                prev = e;
            }
        }
    }

    #[test]
    fn flat_schedule() {
        let s = EpochSchedule::new(ScheduleMode::BASELINE, 20);
        assert!((1..=20).all(|g| s.epochs_for(g).unwrap() == 60));
        assert_eq!(s.total_epochs(), 1200);
        assert_eq!(linear(20).total_epochs(), 1000);
    }

    #[test]
    fn fitness_arithmetic() {
        assert_eq!(regularised_fitness(0.89, 3600.0, 0.05), 0.84);
        assert_eq!(regularised_fitness(0.89, 0.0, 0.05), 0.89);
        assert!((regularised_fitness(0.50, 72000.0, 0.05) + 0.50).abs() < 1e-15);
        assert_eq!(regularised_fitness(0.7, 1e6, 0.0), 0.7);
    }

    #[test]
    fn regularisation_ranking() {
        // equal time: order follows accuracy; equal accuracy: faster wins
        assert!(regularised_fitness(0.8, 500.0, 0.05) > regularised_fitness(0.7, 500.0, 0.05));
        assert!(regularised_fitness(0.8, 500.0, 0.05) > regularised_fitness(0.8, 501.0, 0.05));
    }

    #[test]
    fn distribution_counts() {
        let pop = [parse_key("S8.8|PM").unwrap(), parse_key("S8.8|S8.8").unwrap()];
        let hist = layer_distribution(pop.iter());
        assert_eq!(hist, vec![LayerCounts { skip: 2, pool: 0 }, LayerCounts { skip: 1, pool: 1 }]);
        assert!(layer_distribution(std::iter::empty()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let small = ExperimentConfig {
            pop_size: 1,
            ..ExperimentConfig::default()
        };
        assert!(matches!(small.validate(), Err(EngineError::Config(_))));
        let negative = ExperimentConfig {
            fitness_penalty_per_hour: -0.1,
            ..ExperimentConfig::default()
        };
        assert!(negative.validate().is_err());
        let combined = ExperimentConfig {
            fitness_penalty_per_hour: 0.05,
            schedule: ScheduleMode::PARTIAL,
            ..ExperimentConfig::default()
        };
        assert!(combined.validate().is_ok());
        assert_eq!(combined.variant(), "combined");
    }
}
