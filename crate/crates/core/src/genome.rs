//! Topology genomes.
//!
//! A genome is an ordered stack of feature-extraction layers. Every genome
//! ends in the same implicit classifier (flatten, one linear layer, softmax),
//! so only the stack itself is evolved.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Filter counts used by initialization and mutation at full scale.
pub const DEFAULT_FILTER_CHOICES: [u32; 3] = [64, 128, 256];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenomeError {
    #[error("invalid genome: pool layer at index {index} would reduce a {height}x{width} feature map below one pixel")]
    InvalidGenome {
        index: usize,
        height: usize,
        width: usize,
    },
    #[error("malformed genome key {key:?}: {reason}")]
    MalformedKey { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolKind {
    Max,
    Average,
}

impl PoolKind {
    pub fn flipped(self) -> Self {
        match self {
            PoolKind::Max => PoolKind::Average,
            PoolKind::Average => PoolKind::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerGene {
    /// Residual block of two 3x3 convolutions.
    Skip { filters_1: u32, filters_2: u32 },
    /// 2x2 stride-2 pooling.
    Pool(PoolKind),
}

impl LayerGene {
    pub fn is_pool(&self) -> bool {
        matches!(self, LayerGene::Pool(_))
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, LayerGene::Skip { .. })
    }
}

impl fmt::Display for LayerGene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerGene::Skip {
                filters_1,
                filters_2,
            } => write!(f, "S{filters_1}.{filters_2}"),
            LayerGene::Pool(PoolKind::Max) => f.write_str("PM"),
            LayerGene::Pool(PoolKind::Average) => f.write_str("PA"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ShapeSpec {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn volume(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Whether a 2x2 stride-2 pool can be applied without producing half pixels.
    pub fn can_halve(&self) -> bool {
        self.height >= 2 && self.width >= 2 && self.height % 2 == 0 && self.width % 2 == 0
    }

    /// Number of exact halvings the spatial resolution admits.
    pub fn max_pools(&self) -> usize {
        let mut shape = *self;
        let mut count = 0;
        while shape.can_halve() {
            shape.height /= 2;
            shape.width /= 2;
            count += 1;
        }
        count
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Parameters of random initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub min_depth: usize,
    pub max_depth: usize,
    pub filter_choices: Vec<u32>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            min_depth: 10,
            max_depth: 120,
            filter_choices: DEFAULT_FILTER_CHOICES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cost {
    /// Multiply-accumulate operations for one forward pass of one image.
    pub mac_count: u64,
    /// Trainable weights and biases.
    pub param_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genome {
    layers: Vec<LayerGene>,
}

impl Genome {
    pub fn new(layers: Vec<LayerGene>) -> Self {
        Self { layers }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn layers(&self) -> &[LayerGene] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<LayerGene> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn pool_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_pool()).count()
    }

    pub fn skip_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_skip()).count()
    }

    pub fn is_valid_for(&self, input: ShapeSpec) -> bool {
        output_shape(self, input).is_ok()
    }

    pub fn canonical_key(&self) -> String {
        canonical_key(self)
    }
}

impl From<Vec<LayerGene>> for Genome {
    fn from(layers: Vec<LayerGene>) -> Self {
        Self::new(layers)
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_key(self))
    }
}

impl From<Genome> for String {
    fn from(g: Genome) -> Self {
        canonical_key(&g)
    }
}

impl TryFrom<String> for Genome {
    type Error = GenomeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Genome {
    type Err = GenomeError;

    fn from_str(key: &str) -> Result<Self, Self::Err> {
        parse_key(key)
    }
}

/// Builds a random genome by concatenating skip and pool genes with equal
/// probability. Generation stops when the drawn pool would produce half
/// pixels or the depth bound is reached.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, input: ShapeSpec, cfg: &InitConfig) -> Genome {
    let max_depth = rng.gen_range(cfg.min_depth..=cfg.max_depth);
    let mut layers = Vec::new();
    let mut shape = input;

    while layers.len() < max_depth {
        let gene = if rng.gen_bool(0.5) {
            random_skip(rng, &cfg.filter_choices)
        } else {
            let kind = if rng.gen_bool(0.5) {
                PoolKind::Max
            } else {
                PoolKind::Average
            };
            LayerGene::Pool(kind)
        };
        if gene.is_pool() {
            if !shape.can_halve() {
                break;
            }
            shape.height /= 2;
            shape.width /= 2;
        }
        layers.push(gene);
    }
    Genome::new(layers)
}

/// A skip gene whose two filter counts are drawn independently from `choices`.
pub fn random_skip<R: Rng + ?Sized>(rng: &mut R, choices: &[u32]) -> LayerGene {
    LayerGene::Skip {
        filters_1: *choices.choose(rng).expect("filter choices must not be empty"),
        filters_2: *choices.choose(rng).expect("filter choices must not be empty"),
    }
}

/// Shape of the final feature map, before the classifier.
pub fn output_shape(g: &Genome, input: ShapeSpec) -> Result<ShapeSpec, GenomeError> {
    let mut shape = input;
    for (index, gene) in g.layers.iter().enumerate() {
        shape = apply_layer(shape, gene).ok_or(GenomeError::InvalidGenome {
            index,
            height: shape.height,
            width: shape.width,
        })?;
    }
    Ok(shape)
}

fn apply_layer(shape: ShapeSpec, gene: &LayerGene) -> Option<ShapeSpec> {
    match *gene {
        LayerGene::Skip { filters_2, .. } => Some(ShapeSpec {
            channels: filters_2 as usize,
            ..shape
        }),
        LayerGene::Pool(_) => shape.can_halve().then(|| ShapeSpec {
            height: shape.height / 2,
            width: shape.width / 2,
            channels: shape.channels,
        }),
    }
}

/// Cache identity of a genome, e.g. `S64.128|PM|PA`; the empty genome is `E`.
pub fn canonical_key(g: &Genome) -> String {
    if g.layers.is_empty() {
        return "E".to_owned();
    }
    let tokens: Vec<String> = g.layers.iter().map(|l| l.to_string()).collect();
    tokens.join("|")
}

/// Inverse of [`canonical_key`].
pub fn parse_key(key: &str) -> Result<Genome, GenomeError> {
    let malformed = |reason: &str| GenomeError::MalformedKey {
        key: key.to_owned(),
        reason: reason.to_owned(),
    };
    if key == "E" {
        return Ok(Genome::empty());
    }
    if key.is_empty() {
        return Err(malformed("empty key"));
    }
    let mut layers = Vec::new();
    for token in key.split('|') {
        let gene = match token {
            "PM" => LayerGene::Pool(PoolKind::Max),
            "PA" => LayerGene::Pool(PoolKind::Average),
            t if t.starts_with('S') => {
                let (a, b) = t[1..]
                    .split_once('.')
                    .ok_or_else(|| malformed("skip token without '.'"))?;
                LayerGene::Skip {
                    filters_1: parse_filters(a).ok_or_else(|| malformed("bad filter count"))?,
                    filters_2: parse_filters(b).ok_or_else(|| malformed("bad filter count"))?,
                }
            }
            _ => return Err(malformed("unknown token")),
        };
        layers.push(gene);
    }
    Ok(Genome::new(layers))
}

fn parse_filters(s: &str) -> Option<u32> {
    // Reject signs and leading zeros so that keys stay canonical.
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok().filter(|&n| n > 0)
}

/// Per-image forward cost of the network a genome describes.
///
/// Each skip gene contributes two 3x3 convolutions plus a 1x1 projection on
/// the shortcut when its input channel count differs from `filters_2`.
pub fn cost_estimate(g: &Genome, input: ShapeSpec, num_classes: usize) -> Result<Cost, GenomeError> {
    output_shape(g, input)?;
    let mut cost = Cost::default();
    let mut shape = input;
    for gene in &g.layers {
        if let LayerGene::Skip {
            filters_1,
            filters_2,
        } = *gene
        {
            let (hw, c_in) = (shape.pixels() as u64, shape.channels as u64);
            let (f1, f2) = (filters_1 as u64, filters_2 as u64);
            cost.mac_count += hw * 9 * c_in * f1 + hw * 9 * f1 * f2;
            cost.param_count += 9 * c_in * f1 + f1 + 9 * f1 * f2 + f2;
            if c_in != f2 {
                cost.mac_count += hw * c_in * f2;
                cost.param_count += c_in * f2 + f2;
            }
        }
        shape = apply_layer(shape, gene).expect("validated above");
    }
    let features = shape.volume() as u64;
    let classes = num_classes as u64;
    cost.mac_count += features * classes;
    cost.param_count += features * classes + classes;
    Ok(cost)
}
