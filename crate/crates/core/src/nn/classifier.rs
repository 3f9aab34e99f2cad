//! Flatten -> linear -> softmax classifier and the cross-entropy loss.

/// Logits for one flattened feature vector. `weight` is `(classes, features)`.
pub fn linear_forward(features: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_features = features.len();
    debug_assert_eq!(weight.len(), bias.len() * n_features);
    bias.iter()
        .enumerate()
        .map(|(k, &b)| {
            let row = &weight[k * n_features..(k + 1) * n_features];
            b + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Class probabilities for one flattened feature vector.
pub fn classifier_forward(features: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    softmax(&linear_forward(features, weight, bias))
}

/// Loss `-ln p[label]` and its gradient with respect to the logits, `p - onehot(label)`.
pub fn cross_entropy(probabilities: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = -probabilities[label].ln();
    let mut grad = probabilities.to_vec();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Accumulates the linear-layer gradients for one sample into `grad_weight`
/// and `grad_bias`; returns the gradient with respect to the features.
pub fn linear_backward(
    features: &[f64],
    weight: &[f64],
    grad_logits: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Vec<f64> {
    let n_features = features.len();
    let mut grad_features = vec![0.0; n_features];
    for (k, &g) in grad_logits.iter().enumerate() {
        grad_bias[k] += g;
        if g == 0.0 {
            continue;
        }
        let row = &weight[k * n_features..(k + 1) * n_features];
        let grow = &mut grad_weight[k * n_features..(k + 1) * n_features];
        for ((gw, gf), (&x, &w)) in grow.iter_mut().zip(grad_features.iter_mut()).zip(features.iter().zip(row)) {
            *gw += g * x;
            *gf += g * w;
        }
    }
    grad_features
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_grad_close, numeric_grad, random_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let k = 10;
        let p = classifier_forward(&[0.3, -1.2, 4.0], &vec![0.0; k * 3], &vec![0.0; k]);
        for &pi in &p {
            assert!((pi - 0.1).abs() < 1e-15);
        }
        let (loss, _) = cross_entropy(&p, 3);
        assert!((loss - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalises_wide_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let n = rng.gen_range(2..20);
            let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let total: f64 = softmax(&logits).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let logits = random_vec(&mut rng, 7);
        let label = 4;
        let (_, grad) = cross_entropy(&softmax(&logits), label);
        let num = numeric_grad(&logits, |z| cross_entropy(&softmax(z), label).0);
        assert_grad_close(&grad, &num, 1e-4);
    }

    #[test]
    fn linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (f, k) = (6, 4);
        let x = random_vec(&mut rng, f);
        let w = random_vec(&mut rng, k * f);
        let b = random_vec(&mut rng, k);
        let label = 1;
        let loss = |x: &[f64], w: &[f64], b: &[f64]| cross_entropy(&classifier_forward(x, w, b), label).0;
        let (_, gl) = cross_entropy(&classifier_forward(&x, &w, &b), label);
        let (mut gw, mut gb) = (vec![0.0; k * f], vec![0.0; k]);
        let gx = linear_backward(&x, &w, &gl, &mut gw, &mut gb);
        assert_grad_close(&gx, &numeric_grad(&x, |v| loss(v, &w, &b)), 1e-4);
        assert_grad_close(&gw, &numeric_grad(&w, |v| loss(&x, v, &b)), 1e-4);
        assert_grad_close(&gb, &numeric_grad(&b, |v| loss(&x, &w, v)), 1e-4);
    }
}
