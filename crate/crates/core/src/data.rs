//! Datasets: the CIFAR-10 binary format, class-balanced desk-scale subsets
//! and seeded synthetic image sets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::ShapeSpec;
use crate::nn::Tensor4;

pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
/// One label byte followed by the R, G and B planes.
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: size {size} is not a multiple of the {CIFAR_RECORD}-byte record")]
    TruncatedBatch { path: String, size: usize },
    #[error("{path}: record {record} has label {label}, expected < {CIFAR_CLASSES}")]
    BadLabel { path: String, record: usize, label: u8 },
    #[error("missing CIFAR-10 file {0}")]
    MissingFile(PathBuf),
    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("cannot downsample {from}x{from} to {to}x{to} by 2x2 averaging")]
    BadDownsample { from: usize, to: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor4,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor4, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self, DataError> {
        if images.batch() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} images but {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Invalid(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ShapeSpec {
        ShapeSpec::new(self.images.height(), self.images.width(), self.images.channels())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize], split: Split) -> Self {
        Self {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        }
    }

    /// Splits off the last `n` samples as a validation set.
    pub fn split_tail(&self, n: usize) -> Result<(Self, Self), DataError> {
        if n > self.len() {
            return Err(DataError::Invalid(format!("cannot hold out {n} of {} samples", self.len())));
        }
        let cut = self.len() - n;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.len()).collect();
        Ok((self.select(&head, self.split), self.select(&tail, Split::Validation)))
    }
}

/// One CIFAR-10 batch file as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBatch {
    pub labels: Vec<u8>,
    /// `labels.len()` blocks of 3072 bytes: 1024 R, 1024 G, 1024 B, row-major.
    pub pixels: Vec<u8>,
}

impl RawBatch {
    pub fn parse(bytes: &[u8], origin: &str) -> Result<Self, DataError> {
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(DataError::TruncatedBatch {
                path: origin.to_owned(),
                size: bytes.len(),
            });
        }
        let n = bytes.len() / CIFAR_RECORD;
        let mut labels = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
        for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            let label = chunk[0];
            if label as usize >= CIFAR_CLASSES {
                return Err(DataError::BadLabel {
                    path: origin.to_owned(),
                    record,
                    label,
                });
            }
            labels.push(label);
            pixels.extend_from_slice(&chunk[1..]);
        }
        Ok(Self { labels, pixels })
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        if !path.exists() {
            return Err(DataError::MissingFile(path.to_owned()));
        }
        Self::parse(&fs::read(path)?, &path.display().to_string())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.labels.len() * CIFAR_RECORD);
        for (label, px) in self.labels.iter().zip(self.pixels.chunks_exact(CIFAR_PIXELS)) {
            out.push(*label);
            out.extend_from_slice(px);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn concat(batches: Vec<RawBatch>) -> Self {
        let mut out = RawBatch {
            labels: Vec::new(),
            pixels: Vec::new(),
        };
        for b in batches {
            out.labels.extend(b.labels);
            out.pixels.extend(b.pixels);
        }
        out
    }

    /// Pixels scaled to [0, 1], as a `N x 3 x 32 x 32` tensor.
    pub fn unit_images(&self) -> Tensor4 {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Tensor4::from_vec([self.len(), 3, CIFAR_SIDE, CIFAR_SIDE], data).expect("record layout")
    }

    pub fn into_dataset(self, stats: &ChannelStats, split: Split) -> Dataset {
        let mut images = self.unit_images();
        stats.apply(&mut images);
        Dataset {
            images,
            labels: self.labels.into_iter().map(usize::from).collect(),
            num_classes: CIFAR_CLASSES,
            split,
        }
    }
}

/// Per-channel standardisation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Population mean and standard deviation of every channel.
    pub fn compute(images: &Tensor4) -> Self {
        let [n, c, _, _] = images.dims();
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for ch in 0..c {
            let count = (n * images.plane_len()) as f64;
            let sum: f64 = (0..n).map(|i| images.plane(i, ch).iter().sum::<f64>()).sum();
            let m = sum / count;
            let ss: f64 = (0..n)
                .map(|i| images.plane(i, ch).iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                .sum();
            mean[ch] = m;
            std[ch] = (ss / count).sqrt().max(1e-12);
        }
        Self { mean, std }
    }

    pub fn apply(&self, images: &mut Tensor4) {
        let [n, c, _, _] = images.dims();
        for i in 0..n {
            for ch in 0..c {
                let (m, s) = (self.mean[ch], self.std[ch]);
                images.plane_mut(i, ch).iter_mut().for_each(|v| *v = (*v - m) / s);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cifar10 {
    pub train: Dataset,
    pub test: Dataset,
    pub stats: ChannelStats,
}

/// Reads the five training batches and the test batch, standardising both
/// with constants computed from the training split.
pub fn load_cifar10(dir: &Path) -> Result<Cifar10, DataError> {
    let train = RawBatch::concat(
        CIFAR_TRAIN_FILES
            .iter()
            .map(|f| RawBatch::read(&dir.join(f)))
            .collect::<Result<_, _>>()?,
    );
    let test = RawBatch::read(&dir.join(CIFAR_TEST_FILE))?;
    let stats = ChannelStats::compute(&train.unit_images());
    Ok(Cifar10 {
        train: train.into_dataset(&stats, Split::Train),
        test: test.into_dataset(&stats, Split::Test),
        stats,
    })
}

/// Class-balanced seeded subset, optionally downsampled by repeated 2x2 averaging.
pub fn desk_subset(d: &Dataset, n_per_class: usize, downsample_to: Option<usize>, seed: u64) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); d.num_classes];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut chosen = Vec::with_capacity(n_per_class * d.num_classes);
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < n_per_class {
            return Err(DataError::InsufficientSamples {
                class,
                available: idx.len(),
                requested: n_per_class,
            });
        }
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..n_per_class]);
    }
    chosen.shuffle(&mut rng);
    let mut subset = d.select(&chosen, d.split);
    if let Some(target) = downsample_to {
        subset.images = downsample(&subset.images, target)?;
    }
    Ok(subset)
}

/// Halves resolution with 2x2 averaging until the side length is `target`.
pub fn downsample(images: &Tensor4, target: usize) -> Result<Tensor4, DataError> {
    let (h, w) = (images.height(), images.width());
    let bad = || DataError::BadDownsample { from: h.max(w), to: target };
    if target == 0 || h != w || h % target != 0 || !(h / target).is_power_of_two() {
        return Err(bad());
    }
    let mut out = images.clone();
    while out.height() > target {
        let (n, c, oh, ow) = (out.batch(), out.channels(), out.height() / 2, out.width() / 2);
        let mut next = Tensor4::zeros([n, c, oh, ow]);
        for i in 0..n {
            for ch in 0..c {
                let src = out.plane(i, ch);
                let w2 = ow * 2;
                let dst = next.plane_mut(i, ch);
                for y in 0..oh {
                    for x in 0..ow {
                        dst[y * ow + x] = 0.25
                            * (src[2 * y * w2 + 2 * x]
                                + src[2 * y * w2 + 2 * x + 1]
                                + src[(2 * y + 1) * w2 + 2 * x]
                                + src[(2 * y + 1) * w2 + 2 * x + 1]);
                    }
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// Parameters of a synthetic image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Standard deviation of the additive Gaussian-like pixel noise.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 100,
            height: 16,
            width: 16,
            channels: 3,
            noise: 0.5,
        }
    }
}

/// Class `k` is an intensity ramp oriented at angle `pi * k / K`, scaled by
/// a random per-image contrast in [0.5, 1.5], weighted per channel and
/// perturbed by noise. Labels cycle through the classes so the histogram is
/// exactly balanced.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DataError> {
    if spec.classes < 2 || spec.height == 0 || spec.width == 0 || spec.channels == 0 {
        return Err(DataError::Invalid(format!("degenerate synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.classes * spec.per_class;
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let templates: Vec<Vec<f64>> = (0..spec.classes)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / spec.classes as f64;
            let (cos, sin) = (theta.cos(), theta.sin());
            let mut t = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let u = centred(x, w);
                    let v = centred(y, h);
                    t.push(cos * u + sin * v);
                }
            }
            t
        })
        .collect();
    let mut data = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % spec.classes;
        let contrast = rng.gen_range(0.5..1.5);
        for ch in 0..c {
            let weight = 1.0 - 0.2 * ch as f64;
            for &t in &templates[label] {
                let noise = if spec.noise > 0.0 { spec.noise * approx_normal(&mut rng) } else { 0.0 };
                data.push(contrast * weight * t + noise);
            }
        }
        labels.push(label);
    }
    let images = Tensor4::from_vec([n, c, h, w], data).expect("sized above");
    Dataset::new(images, labels, spec.classes, Split::Train)
}

fn centred(i: usize, len: usize) -> f64 {
    if len == 1 {
        0.0
    } else {
        2.0 * i as f64 / (len - 1) as f64 - 1.0
    }
}

/// Irwin-Hall approximation of a standard normal draw.
fn approx_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0
}

/// Writes images in the CIFAR-10 record layout. Pixels are quantised from
/// [0, 1]; intended for fixtures and for exporting synthetic sets.
pub fn encode_cifar_batch(images: &Tensor4, labels: &[usize]) -> Result<RawBatch, DataError> {
    if images.dims()[1..] != [3, CIFAR_SIDE, CIFAR_SIDE] || images.batch() != labels.len() {
        return Err(DataError::Invalid(format!(
            "CIFAR records need N x 3 x 32 x 32 images with N labels, got {:?}",
            images.dims()
        )));
    }
    let labels = labels
        .iter()
        .map(|&l| u8::try_from(l).ok().filter(|&b| (b as usize) < CIFAR_CLASSES))
        .collect::<Option<Vec<u8>>>()
        .ok_or_else(|| DataError::Invalid("label out of CIFAR range".into()))?;
    let pixels = images
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(RawBatch { labels, pixels })
}
