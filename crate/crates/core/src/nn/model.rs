use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classifier::{cross_entropy, linear_backward, linear_forward, softmax};
use super::optim::sgd_momentum_step;
use super::pool::{pool2x2_backward, pool2x2_forward, PoolCache};
use super::skip::{needs_projection, skip_block_backward, skip_block_forward, SkipCache, SkipParams};
use super::{NnError, Tensor4};
use crate::genome::{output_shape, Genome, LayerGene, PoolKind, ShapeSpec};

#[derive(Debug, Clone, PartialEq)]
enum LayerPlan {
    Skip {
        c_in: usize,
        filters_1: usize,
        filters_2: usize,
        /// Index of the first conv's weight in the flat parameter list.
        first: usize,
        projection: bool,
    },
    Pool(PoolKind),
}

/// Parameter layout of the network a genome describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    genome: Genome,
    input: ShapeSpec,
    num_classes: usize,
    plan: Vec<LayerPlan>,
    classifier: usize,
    features: usize,
    lengths: Vec<usize>,
    fan_in: Vec<usize>,
}

impl Architecture {
    pub fn new(genome: &Genome, input: ShapeSpec, num_classes: usize) -> Result<Self, NnError> {
        let final_shape = output_shape(genome, input)?;
        let mut plan = Vec::with_capacity(genome.len());
        let mut lengths = Vec::new();
        let mut fan_in = Vec::new();
        let mut push = |len: usize, fan: usize, lengths: &mut Vec<usize>| {
            lengths.push(len);
            fan_in.push(fan);
        };
        let mut c_in = input.channels;
        for gene in genome.layers() {
            match *gene {
                LayerGene::Skip {
                    filters_1,
                    filters_2,
                } => {
                    let (f1, f2) = (filters_1 as usize, filters_2 as usize);
                    let first = lengths.len();
                    push(f1 * c_in * 9, c_in * 9, &mut lengths);
                    push(f1, 0, &mut lengths);
                    push(f2 * f1 * 9, f1 * 9, &mut lengths);
                    push(f2, 0, &mut lengths);
                    let projection = needs_projection(c_in, f2);
                    if projection {
                        push(f2 * c_in, c_in, &mut lengths);
                        push(f2, 0, &mut lengths);
                    }
                    plan.push(LayerPlan::Skip {
                        c_in,
                        filters_1: f1,
                        filters_2: f2,
                        first,
                        projection,
                    });
                    c_in = f2;
                }
                LayerGene::Pool(kind) => plan.push(LayerPlan::Pool(kind)),
            }
        }
        let features = final_shape.volume();
        let classifier = lengths.len();
        lengths.push(num_classes * features);
        fan_in.push(features);
        lengths.push(num_classes);
        fan_in.push(0);
        Ok(Self {
            genome: genome.clone(),
            input,
            num_classes,
            plan,
            classifier,
            features,
            lengths,
            fan_in,
        })
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn input(&self) -> ShapeSpec {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Lengths of the parameter arrays in declaration order.
    pub fn param_lengths(&self) -> &[usize] {
        &self.lengths
    }

    fn skip_params<'a>(&self, layer: &LayerPlan, params: &'a [Vec<f64>]) -> SkipParams<'a> {
        let LayerPlan::Skip {
            filters_1,
            filters_2,
            first,
            projection,
            ..
        } = *layer
        else {
            unreachable!("skip_params called on a pool layer")
        };
        SkipParams {
            filters_1,
            filters_2,
            conv1_weight: &params[first],
            conv1_bias: &params[first + 1],
            conv2_weight: &params[first + 2],
            conv2_bias: &params[first + 3],
            projection: projection.then(|| (params[first + 4].as_slice(), params[first + 5].as_slice())),
        }
    }
}

enum LayerCache {
    Skip(SkipCache),
    Pool(PoolCache),
}

struct ForwardTrace {
    caches: Vec<LayerCache>,
    features: Tensor4,
    probabilities: Vec<Vec<f64>>,
}

/// Weights, momentum buffers and training cursor of one network.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub(crate) arch: Architecture,
    pub(crate) params: Vec<Vec<f64>>,
    pub(crate) velocity: Vec<Vec<f64>>,
    pub(crate) epochs_completed: u32,
    pub(crate) rng: ChaCha8Rng,
}

impl PartialEq for ModelState {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.params == other.params
            && self.velocity == other.velocity
            && self.epochs_completed == other.epochs_completed
            && self.rng.get_seed() == other.rng.get_seed()
            && self.rng.get_stream() == other.rng.get_stream()
            && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl ModelState {
    /// Fresh network with He-style uniform initialisation (bound `sqrt(6 / fan_in)`)
    /// for convolutions, `sqrt(3 / fan_in)` for the classifier and zero biases.
    pub fn init(genome: &Genome, input: ShapeSpec, num_classes: usize, seed: u64) -> Result<Self, NnError> {
        let arch = Architecture::new(genome, input, num_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.lengths.len());
        for (i, (&len, &fan)) in arch.lengths.iter().zip(&arch.fan_in).enumerate() {
            if fan == 0 {
                params.push(vec![0.0; len]);
                continue;
            }
            let gain = if i == arch.classifier { 3.0 } else { 6.0 };
            let bound = (gain / fan as f64).sqrt();
            params.push((0..len).map(|_| rng.gen_range(-bound..bound)).collect());
        }
        let velocity = arch.lengths.iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            arch,
            params,
            velocity,
            epochs_completed: 0,
            rng,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn genome(&self) -> &Genome {
        &self.arch.genome
    }

    pub fn epochs_completed(&self) -> u32 {
        self.epochs_completed
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn sgd_momentum_step(&mut self, grads: &[Vec<f64>], lr: f64, momentum: f64) {
        sgd_momentum_step(&mut self.params, &mut self.velocity, grads, lr, momentum);
    }

    fn check_input(&self, x: &Tensor4) -> Result<(), NnError> {
        let s = self.arch.input;
        if x.dims()[1..] != [s.channels, s.height, s.width] {
            return Err(NnError::ShapeMismatch {
                what: "network input",
                expected: format!("[N, {}, {}, {}]", s.channels, s.height, s.width),
                got: format!("{:?}", x.dims()),
            });
        }
        Ok(())
    }

    fn forward_trace(&self, x: &Tensor4) -> Result<ForwardTrace, NnError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.arch.plan.len());
        let mut act = x.clone();
        for layer in &self.arch.plan {
            let (next, cache) = match layer {
                LayerPlan::Skip { .. } => {
                    let p = self.arch.skip_params(layer, &self.params);
                    let (y, c) = skip_block_forward(&act, &p)?;
                    (y, LayerCache::Skip(c))
                }
                LayerPlan::Pool(kind) => {
                    let (y, c) = pool2x2_forward(&act, *kind)?;
                    (y, LayerCache::Pool(c))
                }
            };
            caches.push(cache);
            act = next;
        }
        let (w, b) = (&self.params[self.arch.classifier], &self.params[self.arch.classifier + 1]);
        let probabilities = (0..act.batch())
            .map(|n| softmax(&linear_forward(act.sample(n), w, b)))
            .collect();
        Ok(ForwardTrace {
            caches,
            features: act,
            probabilities,
        })
    }

    /// Class probabilities for every item of the batch.
    pub fn forward(&self, x: &Tensor4) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(self.forward_trace(x)?.probabilities)
    }

    pub fn predict(&self, x: &Tensor4) -> Result<Vec<usize>, NnError> {
        Ok(self.forward(x)?.iter().map(|p| argmax(p)).collect())
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter array.
    pub fn loss_and_grads(&self, x: &Tensor4, labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        let trace = self.forward_trace(x)?;
        let batch = x.batch();
        let scale = 1.0 / batch as f64;
        let mut grads: Vec<Vec<f64>> = self.arch.lengths.iter().map(|&n| vec![0.0; n]).collect();

        let ci = self.arch.classifier;
        let (gw_cls, rest) = grads[ci..].split_at_mut(1);
        let (gw_cls, gb_cls) = (&mut gw_cls[0], &mut rest[0]);
        let mut loss = 0.0;
        let mut grad_features = Tensor4::zeros(trace.features.dims());
        let sample_len = trace.features.sample_len();
        for (n, (p, &label)) in trace.probabilities.iter().zip(labels).enumerate() {
            let (l, mut g) = cross_entropy(p, label);
            loss += l;
            g.iter_mut().for_each(|v| *v *= scale);
            let gf = linear_backward(trace.features.sample(n), &self.params[ci], &g, gw_cls, gb_cls);
            grad_features.data_mut()[n * sample_len..(n + 1) * sample_len].copy_from_slice(&gf);
        }

        let mut grad = grad_features;
        for (layer, cache) in self.arch.plan.iter().zip(&trace.caches).rev() {
            grad = match (layer, cache) {
                (LayerPlan::Skip { first, projection, .. }, LayerCache::Skip(c)) => {
                    let p = self.arch.skip_params(layer, &self.params);
                    let g = skip_block_backward(c, &p, &grad)?;
                    grads[*first] = g.conv1_weight;
                    grads[first + 1] = g.conv1_bias;
                    grads[first + 2] = g.conv2_weight;
                    grads[first + 3] = g.conv2_bias;
                    if *projection {
                        let (w, b) = g.projection.expect("projection gradient");
                        grads[first + 4] = w;
                        grads[first + 5] = b;
                    }
                    g.input
                }
                (LayerPlan::Pool(_), LayerCache::Pool(c)) => pool2x2_backward(c, &grad)?,
                _ => unreachable!("layer plan and cache out of step"),
            };
        }
        Ok((loss * scale, grads))
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
