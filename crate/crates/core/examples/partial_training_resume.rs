//! Partial training: the epoch budget grows linearly with the generation and
//! a surviving network continues from its checkpoint instead of restarting.
//!
//!     cargo run --release --example partial_training_resume

use evotopo::data::{synthetic_dataset, SyntheticSpec};
use evotopo::engine::{EpochSchedule, ScheduleMode};
use evotopo::genome::parse_key;
use evotopo::nn::{train, ModelState, TrainConfig};

fn main() -> anyhow::Result<()> {
    let linear = EpochSchedule::new(ScheduleMode::PARTIAL, 20);
    let flat = EpochSchedule::new(ScheduleMode::BASELINE, 20);
    let budgets: Vec<String> = (1..=20).map(|g| linear.epochs_for(g).unwrap().to_string()).collect();
    println!("epochs per generation: {}", budgets.join(" "));
    println!("total {} vs {} for a flat 60", linear.total_epochs(), flat.total_epochs());

    // a survivor trained for 3 epochs, checkpointed, then continued to 5
    let data = synthetic_dataset(
        &SyntheticSpec {
            per_class: 20,
            ..SyntheticSpec::default()
        },
        0,
    )?;
    let genome = parse_key("S4.4|PM")?;
    let mut cfg = TrainConfig::default();
    cfg.lr.initial = 0.01;
    let first = train(&genome, &data, 3, None, &cfg)?;
    let bytes = first.state.to_bytes();
    let resumed = train(&genome, &data, 5, Some(ModelState::from_bytes(&bytes)?), &cfg)?;
    let direct = train(&genome, &data, 5, None, &cfg)?;
    println!(
        "checkpoint {} bytes at epoch {}; resumed run trained {} more epochs; identical to uninterrupted: {}",
        bytes.len(),
        first.state.epochs_completed(),
        resumed.loss_curve.len(),
        resumed.state == direct.state
    );
    Ok(())
}
