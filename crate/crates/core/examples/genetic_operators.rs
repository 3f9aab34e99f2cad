//! Applies crossover and mutation to a pair of genomes and prints the children.
//!
//!     cargo run --example genetic_operators -- "S64.64|PM|S128.128" "S256.64|PA|PM"

use evotopo::genome::{parse_key, ShapeSpec};
use evotopo::operators::{crossover, mutate_traced, OperatorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let a = parse_key(&args.next().unwrap_or_else(|| "S64.64|PM|S128.128|PA".into()))?;
    let b = parse_key(&args.next().unwrap_or_else(|| "S256.64|PA|S64.256|PM|PM".into()))?;
    let input = ShapeSpec::new(32, 32, 3);
    let cfg = OperatorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    println!("parents\n  {a}\n  {b}");
    for _ in 0..3 {
        let (c1, c2) = crossover(&mut rng, &a, &b, input, &cfg);
        println!("crossover\n  {c1}\n  {c2}");
    }
    for _ in 0..5 {
        let (child, kind) = mutate_traced(&mut rng, &a, input, &cfg);
        let kind = kind.map_or("none applicable".to_string(), |k| format!("{k:?}"));
        println!("mutation {kind:<12} {child}");
    }
    Ok(())
}
