//! Compares back-propagated gradients of a small network with central
//! finite differences.
//!
//!     cargo run --release --example gradient_check [genome-key]

use evotopo::genome::{parse_key, ShapeSpec};
use evotopo::nn::{ModelState, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn main() -> anyhow::Result<()> {
    let key = std::env::args().nth(1).unwrap_or_else(|| "S3.2|PM|S2.4|PA".into());
    let genome = parse_key(&key)?;
    let input = ShapeSpec::new(4, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = ModelState::init(&genome, input, 3, 1)?;
    for p in model.params_mut() {
        p.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
    }
    let data = (0..2 * 2 * 4 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor4::from_vec([2, 2, 4, 4], data)?;
    let labels = [0, 2];
    let (loss, grads) = model.loss_and_grads(&x, &labels)?;
    println!("{key}: loss {loss:.6}");

    for (i, g) in grads.iter().enumerate() {
        let mut worst = 0.0f64;
        for j in 0..g.len() {
            let mut probe = model.clone();
            probe.params_mut()[i][j] += H;
            let up = probe.loss_and_grads(&x, &labels)?.0;
            probe.params_mut()[i][j] -= 2.0 * H;
            let down = probe.loss_and_grads(&x, &labels)?.0;
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max((g[j] - numeric).abs() / g[j].abs().max(numeric.abs()).max(1e-6));
        }
        println!("  param {i:>2} ({:>4} values) max rel error {worst:.2e}", g.len());
    }
    Ok(())
}
