#![allow(dead_code)]

use std::path::{Path, PathBuf};

use evotopo::data::{encode_cifar_batch, synthetic_dataset, SyntheticSpec, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
use evotopo::nn::Tensor4;
use rand::Rng;

pub const EPS: f64 = 1e-5;

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_tensor<R: Rng>(rng: &mut R, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_vec(dims, random_vec(rng, dims.iter().product())).unwrap()
}

/// Central differences of `f` around `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + EPS;
            let up = f(&probe);
            probe[i] = x[i] - EPS;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn print_result(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} [{verdict}] {title}: {detail}");
}

pub fn print_blocked(criterion: u32, title: &str, reason: &str) {
    println!("criterion {criterion:>2} [BLOCKED] {title}: {reason}");
}

/// Directory named by `CIFAR10_DIR`, if it holds the binary batches.
pub fn cifar_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("CIFAR10_DIR")?);
    dir.join(CIFAR_TEST_FILE).exists().then_some(dir)
}

/// Writes a stand-in for the CIFAR-10 binary distribution: synthetic
/// 32x32 ramp images in the same record layout, `per_file` records per file.
pub fn write_stand_in_cifar(dir: &Path, per_file: usize, seed: u64) {
    let files: Vec<&str> = CIFAR_TRAIN_FILES.iter().copied().chain([CIFAR_TEST_FILE]).collect();
    for (i, name) in files.iter().enumerate() {
        let spec = SyntheticSpec {
            classes: 10,
            per_class: per_file / 10,
            height: 32,
            width: 32,
            channels: 3,
            noise: 0.5,
        };
        let d = synthetic_dataset(&spec, seed + i as u64).unwrap();
        let data: Vec<f64> = d.images.data().iter().map(|v| 0.5 + 0.2 * v).collect();
        let images = Tensor4::from_vec(d.images.dims(), data).unwrap();
        let batch = encode_cifar_batch(&images, &d.labels).unwrap();
        std::fs::write(dir.join(name), batch.to_bytes()).unwrap();
    }
}
