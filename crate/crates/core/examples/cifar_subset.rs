//! Trains a 2-skip/2-pool network on a 1000-image CIFAR-10 subset.
//! Needs the binary distribution (data_batch_1.bin ... test_batch.bin).
//!
//!     CIFAR10_DIR=/data/cifar-10-batches-bin cargo run --release --example cifar_subset

use evotopo::data::{desk_subset, load_cifar10};
use evotopo::genome::parse_key;
use evotopo::nn::{test_accuracy, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::var_os("CIFAR10_DIR").ok_or_else(|| anyhow::anyhow!("set CIFAR10_DIR"))?;
    let cifar = load_cifar10(dir.as_ref())?;
    let (train_part, held_out) = cifar.train.split_tail(5000)?;
    let train_set = desk_subset(&train_part, 100, None, 0)?;
    let validation = desk_subset(&held_out, 50, None, 0)?;
    let test = desk_subset(&cifar.test, 50, None, 0)?;

    let genome = parse_key("S16.16|PM|S16.16|PA")?;
    let mut cfg = TrainConfig::default();
    cfg.lr.initial = 0.01;
    let start = std::time::Instant::now();
    let out = train(&genome, &train_set, 10, None, &cfg)?;
    println!(
        "{genome}: validation {:.3}, test {:.3}, {:.0}s",
        test_accuracy(&out.state, &validation)?,
        test_accuracy(&out.state, &test)?,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
