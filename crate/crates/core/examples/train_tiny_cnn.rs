//! Trains one genome on a synthetic dataset and prints the loss curve.
//!
//!     cargo run --release --example train_tiny_cnn [genome-key] [epochs]

use evotopo::data::{synthetic_dataset, SyntheticSpec};
use evotopo::genome::parse_key;
use evotopo::nn::{test_accuracy, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let genome = parse_key(&args.next().unwrap_or_else(|| "S8.8|PM|S8.8|PA".into()))?;
    let epochs: u32 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let spec = SyntheticSpec {
        per_class: 50,
        ..SyntheticSpec::default()
    };
    let train_set = synthetic_dataset(&spec, 1)?;
    let test_set = synthetic_dataset(&SyntheticSpec { per_class: 20, ..spec }, 2)?;

    let mut cfg = TrainConfig::default();
    // no normalisation layers, so the usual 0.1 is too aggressive here
    cfg.lr.initial = 0.01;
    let out = train(&genome, &train_set, epochs, None, &cfg)?;
    for (e, loss) in out.loss_curve.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.4}", e + 1);
    }
    println!("{genome}: test accuracy {:.3}", test_accuracy(&out.state, &test_set)?);
    Ok(())
}
