//! Shows how the wall-time penalty moves selection towards cheaper networks:
//! the same surrogate search with and without the penalty.
//!
//!     cargo run --release --example regularised_fitness [seed]

use evotopo::engine::{regularised_fitness, run_evolution, ExperimentConfig};
use evotopo::evaluator::{SurrogateEvaluator, SurrogateParams};
use evotopo::genome::ShapeSpec;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    println!("an 89% network that took an hour scores {:.2}", regularised_fitness(0.89, 3600.0, 0.05));

    let evaluator = SurrogateEvaluator::new(ShapeSpec::new(32, 32, 3), SurrogateParams::default());
    for c in [0.0, ExperimentConfig::REGULARISED_C] {
        let cfg = ExperimentConfig {
            fitness_penalty_per_hour: c,
            seed,
            ..ExperimentConfig::default()
        };
        let result = run_evolution(&cfg, &evaluator)?;
        let last = result.history.last().expect("at least one generation");
        let best = &result.best_by_fitness;
        println!(
            "C = {c:<4} final mean depth {:>5.2}, mean eval {:>6.1} min, best {} (acc {:.4}, {:.1} min)",
            last.mean_depth,
            last.wall_seconds / last.evaluations.max(1) as f64 / 60.0,
            best.key(),
            best.accuracy,
            best.eval_wall_seconds / 60.0
        );
    }
    Ok(())
}
