//! Runs the four experiment variants against the surrogate evaluator and
//! compares simulated evaluation time.
//!
//!     cargo run --release --example surrogate_evolution [seed]

use evotopo::engine::{run_evolution, ExperimentConfig, ScheduleMode};
use evotopo::evaluator::{SurrogateEvaluator, SurrogateParams};
use evotopo::genome::ShapeSpec;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let evaluator = SurrogateEvaluator::new(ShapeSpec::new(32, 32, 3), SurrogateParams::default());
    let variants = [
        (0.0, ScheduleMode::BASELINE),
        (ExperimentConfig::REGULARISED_C, ScheduleMode::BASELINE),
        (0.0, ScheduleMode::PARTIAL),
        (ExperimentConfig::REGULARISED_C, ScheduleMode::PARTIAL),
    ];
    println!("{:<12} {:>9} {:>9} {:>10} {:>8} {:>11}", "variant", "best fit", "best acc", "epochs", "evals", "sim hours");
    for (c, schedule) in variants {
        let cfg = ExperimentConfig {
            fitness_penalty_per_hour: c,
            schedule,
            seed,
            ..ExperimentConfig::default()
        };
        let result = run_evolution(&cfg, &evaluator)?;
        let seconds: f64 = result.history.iter().map(|s| s.wall_seconds).sum();
        let epochs: u64 = result.history.iter().map(|s| s.epochs_trained).sum();
        let evals: usize = result.history.iter().map(|s| s.evaluations).sum();
        println!(
            "{:<12} {:>9.4} {:>9.4} {:>10} {:>8} {:>11.2}",
            cfg.variant(),
            result.best_by_fitness.fitness,
            result.best_by_accuracy.accuracy,
            epochs,
            evals,
            seconds / 3600.0
        );
    }
    Ok(())
}
