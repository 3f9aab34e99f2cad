use std::collections::HashMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::store::{CacheEntry, CachedEvaluation, CheckpointIndexEntry, CheckpointStore, FitnessCache};
use super::{
    epochs_for_generation, regularised_fitness, EngineError, EvaluationEvent, ExperimentConfig, GenerationStats,
    Individual,
};
use crate::evaluator::Evaluator;
use crate::genome::{random_genome, Genome};
use crate::operators::{elitism_victim, next_generation};

enum Job {
    Cached(CachedEvaluation),
    Evaluate,
    DuplicateOf(usize),
}

/// Evaluates `genomes` at the budget of `generation`, consulting the cache
/// and resuming from stored checkpoints. Returns one individual and one
/// event per genome, in input order.
pub fn evaluate_population(
    generation: u32,
    genomes: &[Genome],
    evaluator: &dyn Evaluator,
    cache: &FitnessCache,
    store: &CheckpointStore,
    cfg: &ExperimentConfig,
) -> Result<(Vec<Individual>, Vec<EvaluationEvent>), EngineError> {
    let epochs = epochs_for_generation(generation, &cfg.epoch_schedule())?;
    let keys: Vec<String> = genomes.iter().map(Genome::canonical_key).collect();

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let jobs: Vec<Job> = keys
        .iter()
        .enumerate()
        .map(|(slot, key)| {
            if let Some(hit) = cache.get(key, epochs) {
                Job::Cached(hit)
            } else if let Some(&first) = first_seen.get(key.as_str()) {
                Job::DuplicateOf(first)
            } else {
                first_seen.insert(key, slot);
                Job::Evaluate
            }
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| EngineError::Config(format!("worker pool: {e}")))?;
    let work: Vec<usize> = jobs
        .iter()
        .enumerate()
        .filter_map(|(i, j)| matches!(j, Job::Evaluate).then_some(i))
        .collect();
    let results: Vec<(usize, Option<u32>, Option<CachedEvaluation>)> = pool.install(|| {
        work.par_iter()
            .map(|&slot| {
                let worker = rayon::current_thread_index().unwrap_or(0);
                let key = &keys[slot];
                let resume = store.resume_point(key, epochs);
                let from = resume.as_ref().map(|r| r.epochs);
                match evaluator.evaluate(&genomes[slot], epochs, resume.as_ref(), worker) {
                    Ok(outcome) => {
                        let value = CachedEvaluation {
                            accuracy: outcome.record.accuracy,
                            wall_seconds: outcome.record.wall_seconds,
                            worker_id: outcome.record.worker_id,
                            checkpoint_ref: outcome.record.checkpoint_ref,
                        };
                        if let Err(e) = store.store(key, epochs, outcome.model) {
                            log::warn!("could not store checkpoint of {key} at {epochs} epochs: {e}");
                        }
                        cache.insert(key, epochs, value.clone());
                        (slot, from, Some(value))
                    }
                    Err(e) => {
                        log::warn!("evaluation of {key} at {epochs} epochs failed, scoring 0: {e}");
                        (slot, from, None)
                    }
                }
            })
            .collect()
    });
    let mut evaluated: HashMap<usize, (Option<u32>, Option<CachedEvaluation>)> =
        results.into_iter().map(|(slot, from, v)| (slot, (from, v))).collect();

    let mut individuals = Vec::with_capacity(genomes.len());
    let mut events = Vec::with_capacity(genomes.len());
    for (slot, job) in jobs.iter().enumerate() {
        let (value, cache_hit, resumed_from) = match job {
            Job::Cached(v) => (Some(v.clone()), true, None),
            Job::Evaluate => {
                let (from, v) = evaluated.get(&slot).cloned().expect("every job evaluated");
                (v, false, from)
            }
            Job::DuplicateOf(first) => (evaluated.get_mut(first).and_then(|(_, v)| v.clone()), true, None),
        };
        let (accuracy, wall_seconds, worker_id, checkpoint_ref) = match value {
            Some(v) => (v.accuracy, v.wall_seconds, v.worker_id, v.checkpoint_ref),
            None => (0.0, 0.0, 0, None),
        };
        let fitness = regularised_fitness(accuracy, wall_seconds, cfg.fitness_penalty_per_hour);
        events.push(EvaluationEvent {
            generation,
            key: keys[slot].clone(),
            epochs,
            accuracy,
            wall_seconds,
            fitness,
            cache_hit,
            resumed_from,
            slot,
            worker: worker_id,
        });
        individuals.push(Individual {
            genome: genomes[slot].clone(),
            accuracy,
            eval_wall_seconds: wall_seconds,
            fitness,
            epochs_trained: epochs,
            checkpoint_ref,
            worker_id,
        });
    }
    Ok((individuals, events))
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub stats: GenerationStats,
    pub population: Vec<Individual>,
    pub events: Vec<EvaluationEvent>,
}

/// Progress of a run between generations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub completed: u32,
    pub population: Vec<Individual>,
    pub best_by_fitness: Option<Individual>,
    pub best_by_accuracy: Option<Individual>,
}

/// Everything needed to continue a run after the last completed generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub state: RunState,
    pub cache: Vec<CacheEntry>,
    pub checkpoints: Vec<CheckpointIndexEntry>,
}

pub struct EvolutionRun<'a> {
    cfg: ExperimentConfig,
    evaluator: &'a dyn Evaluator,
    cache: FitnessCache,
    store: CheckpointStore,
    state: RunState,
}

impl<'a> EvolutionRun<'a> {
    pub fn new(cfg: ExperimentConfig, evaluator: &'a dyn Evaluator) -> Result<Self, EngineError> {
        Self::with_store(cfg, evaluator, CheckpointStore::in_memory())
    }

    pub fn with_store(
        cfg: ExperimentConfig,
        evaluator: &'a dyn Evaluator,
        store: CheckpointStore,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            evaluator,
            cache: FitnessCache::new(),
            store,
            state: RunState::default(),
        })
    }

    /// Continues from a snapshot; `checkpoint_dir` holds any persisted weights.
    pub fn restore(
        cfg: ExperimentConfig,
        evaluator: &'a dyn Evaluator,
        snapshot: RunSnapshot,
        checkpoint_dir: Option<PathBuf>,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        if snapshot.state.completed > cfg.generations {
            return Err(EngineError::Store(format!(
                "snapshot has {} generations, configuration only {}",
                snapshot.state.completed, cfg.generations
            )));
        }
        Ok(Self {
            store: CheckpointStore::restore(&snapshot.checkpoints, checkpoint_dir)?,
            cache: FitnessCache::from_entries(snapshot.cache),
            cfg,
            evaluator,
            state: snapshot.state,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn cache(&self) -> &FitnessCache {
        &self.cache
    }

    pub fn checkpoints(&self) -> &CheckpointStore {
        &self.store
    }

    pub fn is_finished(&self) -> bool {
        self.state.completed >= self.cfg.generations
    }

    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot {
            state: self.state.clone(),
            cache: self.cache.entries(),
            checkpoints: self.store.index(),
        }
    }

    /// Rng driving initialisation or reproduction for `generation`; one
    /// stream per generation, so a resumed run draws the same numbers.
    fn operator_rng(&self, generation: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(generation as u64);
        rng
    }

    /// Breeds, evaluates and applies elitism for the next generation.
    pub fn step(&mut self) -> Result<GenerationOutcome, EngineError> {
        if self.is_finished() {
            return Err(EngineError::GenerationOutOfRange {
                generation: self.state.completed + 1,
                total: self.cfg.generations,
            });
        }
        let generation = self.state.completed + 1;
        let input = self.evaluator.input_shape();
        let mut rng = self.operator_rng(generation);
        let genomes = if generation == 1 {
            (0..self.cfg.pop_size)
                .map(|_| random_genome(&mut rng, input, &self.cfg.init))
                .collect()
        } else {
            next_generation(&mut rng, &self.state.population, input, &self.cfg.operators, self.cfg.pop_size)?
        };
        let (mut population, mut events) =
            evaluate_population(generation, &genomes, self.evaluator, &self.cache, &self.store, &self.cfg)?;

        if let Some(elite) = fittest(&self.state.population) {
            if let Some(victim) = elitism_victim(&population, &elite.key()) {
                let (mut again, mut event) = evaluate_population(
                    generation,
                    std::slice::from_ref(&elite.genome),
                    self.evaluator,
                    &self.cache,
                    &self.store,
                    &self.cfg,
                )?;
                event[0].slot = victim;
                population[victim] = again.remove(0);
                events.append(&mut event);
            }
        }

        let epochs = epochs_for_generation(generation, &self.cfg.epoch_schedule())?;
        let stats = GenerationStats::compute(generation, epochs, &population, &events);
        if let Some(best) = fittest(&population) {
            if self.state.best_by_fitness.as_ref().is_none_or(|b| best.fitness > b.fitness) {
                self.state.best_by_fitness = Some(best.clone());
            }
        }
        if let Some(best) = most_accurate(&population) {
            if self.state.best_by_accuracy.as_ref().is_none_or(|b| best.accuracy > b.accuracy) {
                self.state.best_by_accuracy = Some(best.clone());
            }
        }
        self.state.population = population.clone();
        self.state.completed = generation;
        Ok(GenerationOutcome {
            stats,
            population,
            events,
        })
    }
}

/// First individual of maximal fitness.
pub(crate) fn fittest(population: &[Individual]) -> Option<&Individual> {
    population.iter().reduce(|best, i| if i.fitness > best.fitness { i } else { best })
}

fn most_accurate(population: &[Individual]) -> Option<&Individual> {
    population.iter().reduce(|best, i| if i.accuracy > best.accuracy { i } else { best })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best_by_fitness: Individual,
    pub best_by_accuracy: Individual,
    pub history: Vec<GenerationStats>,
    pub events: Vec<EvaluationEvent>,
    pub final_population: Vec<Individual>,
}

/// Runs every generation of `cfg` in memory.
pub fn run_evolution(cfg: &ExperimentConfig, evaluator: &dyn Evaluator) -> Result<RunResult, EngineError> {
    let mut run = EvolutionRun::new(cfg.clone(), evaluator)?;
    let mut history = Vec::new();
    let mut events = Vec::new();
    while !run.is_finished() {
        let outcome = run.step()?;
        history.push(outcome.stats);
        events.extend(outcome.events);
    }
    let state = run.state;
    Ok(RunResult {
        best_by_fitness: state.best_by_fitness.expect("at least one generation"),
        best_by_accuracy: state.best_by_accuracy.expect("at least one generation"),
        history,
        events,
        final_population: state.population,
    })
}
