//! Genetic operators: one-point crossover, mutation, tournament selection
//! and generational replacement with elitism.
//!
//! Operators that could produce half pixels abort and restart from scratch,
//! up to `max_retries` attempts, after which they return their input.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Individual;
use crate::genome::{random_skip, Genome, LayerGene, PoolKind, ShapeSpec, DEFAULT_FILTER_CHOICES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("tournament selection needs at least 2 individuals, population has {0}")]
    PopulationTooSmall(usize),
    #[error("invalid operator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationWeights {
    pub insert_skip: f64,
    pub insert_pool: f64,
    pub remove: f64,
    pub alter: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self {
            insert_skip: 0.7,
            insert_pool: 0.1,
            remove: 0.1,
            alter: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MutationKind {
    InsertSkip,
    InsertPool,
    Remove,
    Alter,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] = [Self::InsertSkip, Self::InsertPool, Self::Remove, Self::Alter];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub mutation_weights: MutationWeights,
    pub max_retries: u32,
    /// Filter counts drawn when inserting or altering a skip gene.
    pub filter_choices: Vec<u32>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            p_crossover: 0.9,
            p_mutation: 0.2,
            mutation_weights: MutationWeights::default(),
            max_retries: 25,
            filter_choices: DEFAULT_FILTER_CHOICES.to_vec(),
        }
    }
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let invalid = |msg: String| Err(OperatorError::InvalidConfig(msg));
        for (name, p) in [("p_crossover", self.p_crossover), ("p_mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} = {p} is not a probability"));
            }
        }
        let w = self.mutation_weights;
        let parts = [w.insert_skip, w.insert_pool, w.remove, w.alter];
        if parts.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid(format!("mutation weights {w:?} must be probabilities summing to 1"));
        }
        if self.max_retries == 0 {
            return invalid("max_retries must be positive".into());
        }
        if self.filter_choices.is_empty() || self.filter_choices.contains(&0) {
            return invalid("filter choices must be non-empty positive counts".into());
        }
        Ok(())
    }
}

/// Children of cutting `a` at `cut_a` and `b` at `cut_b` and swapping tails.
pub fn splice(a: &Genome, b: &Genome, cut_a: usize, cut_b: usize) -> (Genome, Genome) {
    let (a, b) = (a.layers(), b.layers());
    let first = a[..cut_a].iter().chain(&b[cut_b..]).copied().collect::<Vec<_>>();
    let second = b[..cut_b].iter().chain(&a[cut_a..]).copied().collect::<Vec<_>>();
    (Genome::new(first), Genome::new(second))
}

pub fn crossover<R: Rng + ?Sized>(rng: &mut R, a: &Genome, b: &Genome, input: ShapeSpec, cfg: &OperatorConfig) -> (Genome, Genome) {
    for _ in 0..cfg.max_retries {
        let cut_a = rng.gen_range(0..=a.len());
        let cut_b = rng.gen_range(0..=b.len());
        let (c1, c2) = splice(a, b, cut_a, cut_b);
        if c1.is_valid_for(input) && c2.is_valid_for(input) {
            return (c1, c2);
        }
    }
    (a.clone(), b.clone())
}

fn draw_kind<R: Rng + ?Sized>(rng: &mut R, w: &MutationWeights) -> MutationKind {
    let u: f64 = rng.gen();
    if u < w.insert_skip {
        MutationKind::InsertSkip
    } else if u < w.insert_skip + w.insert_pool {
        MutationKind::InsertPool
    } else if u < w.insert_skip + w.insert_pool + w.remove {
        MutationKind::Remove
    } else {
        MutationKind::Alter
    }
}

/// Applies one sub-operation; `None` when it does not apply (empty genome).
pub fn apply_mutation<R: Rng + ?Sized>(rng: &mut R, g: &Genome, kind: MutationKind, filter_choices: &[u32]) -> Option<Genome> {
    let mut layers = g.layers().to_vec();
    match kind {
        MutationKind::InsertSkip => {
            let at = rng.gen_range(0..=layers.len());
            layers.insert(at, random_skip(rng, filter_choices));
        }
        MutationKind::InsertPool => {
            let at = rng.gen_range(0..=layers.len());
            let kind = if rng.gen_bool(0.5) { PoolKind::Max } else { PoolKind::Average };
            layers.insert(at, LayerGene::Pool(kind));
        }
        MutationKind::Remove => {
            if layers.is_empty() {
                return None;
            }
            let at = rng.gen_range(0..layers.len());
            layers.remove(at);
        }
        MutationKind::Alter => {
            if layers.is_empty() {
                return None;
            }
            let at = rng.gen_range(0..layers.len());
            layers[at] = match layers[at] {
                LayerGene::Skip { .. } => random_skip(rng, filter_choices),
                LayerGene::Pool(kind) => LayerGene::Pool(kind.flipped()),
            };
        }
    }
    Some(Genome::new(layers))
}

/// Like [`mutate`], also reporting which sub-operation produced the result.
pub fn mutate_traced<R: Rng + ?Sized>(
    rng: &mut R,
    g: &Genome,
    input: ShapeSpec,
    cfg: &OperatorConfig,
) -> (Genome, Option<MutationKind>) {
    for _ in 0..cfg.max_retries {
        let kind = draw_kind(rng, &cfg.mutation_weights);
        if let Some(child) = apply_mutation(rng, g, kind, &cfg.filter_choices) {
            if child.is_valid_for(input) {
                return (child, Some(kind));
            }
        }
    }
    (g.clone(), None)
}

pub fn mutate<R: Rng + ?Sized>(rng: &mut R, g: &Genome, input: ShapeSpec, cfg: &OperatorConfig) -> Genome {
    mutate_traced(rng, g, input, cfg).0
}

/// Fitter of two distinct uniformly drawn individuals; exact ties are broken
/// by a fair coin. Returns the index of the winner.
pub fn tournament_select<R: Rng + ?Sized>(rng: &mut R, population: &[Individual]) -> Result<usize, OperatorError> {
    let n = population.len();
    if n < 2 {
        return Err(OperatorError::PopulationTooSmall(n));
    }
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let (fi, fj) = (population[i].fitness, population[j].fitness);
    Ok(if fi > fj {
        i
    } else if fj > fi {
        j
    } else if rng.gen_bool(0.5) {
        i
    } else {
        j
    })
}

/// Genomes of the next generation, before elitism.
pub fn next_generation<R: Rng + ?Sized>(
    rng: &mut R,
    population: &[Individual],
    input: ShapeSpec,
    cfg: &OperatorConfig,
    pop_size: usize,
) -> Result<Vec<Genome>, OperatorError> {
    if population.len() < 2 {
        return Err(OperatorError::PopulationTooSmall(population.len()));
    }
    let mut out = Vec::with_capacity(pop_size);
    while out.len() < pop_size {
        let first = &population[tournament_select(rng, population)?].genome;
        let mut children = if rng.gen_bool(cfg.p_crossover) {
            let second = &population[tournament_select(rng, population)?].genome;
            let (c1, c2) = crossover(rng, first, second, input, cfg);
            vec![c1, c2]
        } else {
            vec![first.clone()]
        };
        let remaining = pop_size - out.len();
        if children.len() > remaining {
            let keep = rng.gen_range(0..children.len());
            children = vec![children.swap_remove(keep)];
        }
        for child in children {
            let child = if rng.gen_bool(cfg.p_mutation) {
                mutate(rng, &child, input, cfg)
            } else {
                child
            };
            out.push(child);
        }
    }
    Ok(out)
}

/// Slot the elite should take: `None` if a genome with the elite's key is
/// already present, otherwise the minimum-fitness individual (earliest on ties).
pub fn elitism_victim(population: &[Individual], elite_key: &str) -> Option<usize> {
    if population.is_empty() || population.iter().any(|i| i.key() == elite_key) {
        return None;
    }
    let mut victim = 0;
    for (i, ind) in population.iter().enumerate() {
        if ind.fitness < population[victim].fitness {
            victim = i;
        }
    }
    Some(victim)
}

/// Replaces the weakest individual with `elite` unless its genome is present.
pub fn apply_elitism(population: &mut [Individual], elite: Individual) -> Option<usize> {
    let victim = elitism_victim(population, &elite.key())?;
    population[victim] = elite;
    Some(victim)
}
