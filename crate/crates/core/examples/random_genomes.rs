//! Samples initial genomes and shows their keys, depth and output shape.
//!
//!     cargo run --example random_genomes [count] [seed]

use evotopo::genome::{output_shape, random_genome, InitConfig, ShapeSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let input = ShapeSpec::new(32, 32, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let g = random_genome(&mut rng, input, &InitConfig::default());
        let out = output_shape(&g, input)?;
        println!(
            "{:>2} layers ({} skip, {} pool) -> {}x{}x{}  {}",
            g.len(),
            g.skip_count(),
            g.pool_count(),
            out.height,
            out.width,
            out.channels,
            g
        );
    }
    Ok(())
}
