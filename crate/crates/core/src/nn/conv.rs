//! 3x3 same-padded and 1x1 convolutions (cross-correlation, unit stride).

use super::{NnError, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

fn check_params(x: &Tensor4, weight: &[f64], bias: &[f64], c_out: usize, taps: usize) -> Result<(), NnError> {
    let expected = c_out * x.channels() * taps;
    if weight.len() != expected {
        return Err(NnError::ShapeMismatch {
            what: "convolution weights",
            expected: format!("{expected} ({c_out}x{}x{taps})", x.channels()),
            got: weight.len().to_string(),
        });
    }
    if bias.len() != c_out {
        return Err(NnError::ShapeMismatch {
            what: "convolution bias",
            expected: c_out.to_string(),
            got: bias.len().to_string(),
        });
    }
    Ok(())
}

/// Row and column ranges of output positions whose shifted input stays in
/// bounds for a tap offset `d` in {-1, 0, 1}.
#[inline]
fn valid_range(d: isize, len: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize) as usize;
    (lo, hi)
}

/// Weights are laid out `(c_out, c_in, 3, 3)`.
pub fn conv3x3_forward(x: &Tensor4, weight: &[f64], bias: &[f64], c_out: usize) -> Result<Tensor4, NnError> {
    check_params(x, weight, bias, c_out, 9)?;
    let [n_batch, c_in, h, w] = x.dims();
    let mut out = Tensor4::zeros([n_batch, c_out, h, w]);
    for n in 0..n_batch {
        for co in 0..c_out {
            let out_plane = out.plane_mut(n, co);
            out_plane.fill(bias[co]);
            for ci in 0..c_in {
                let in_plane = x.plane(n, ci);
                let kernel = &weight[(co * c_in + ci) * 9..(co * c_in + ci + 1) * 9];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = valid_range(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = valid_range(dx, w);
                        let wv = kernel[ky * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in y0..y1 {
                            let src_row = (y as isize + dy) as usize * w;
                            let src = &in_plane[(src_row as isize + x0 as isize + dx) as usize..][..x1 - x0];
                            let dst = &mut out_plane[y * w + x0..y * w + x1];
                            for (o, &i) in dst.iter_mut().zip(src) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv3x3_backward(x: &Tensor4, weight: &[f64], grad_out: &Tensor4) -> Result<ConvGrads, NnError> {
    let [n_batch, c_in, h, w] = x.dims();
    let c_out = grad_out.channels();
    if grad_out.dims() != [n_batch, c_out, h, w] {
        return Err(NnError::ShapeMismatch {
            what: "convolution output gradient",
            expected: format!("[{n_batch}, {c_out}, {h}, {w}]"),
            got: format!("{:?}", grad_out.dims()),
        });
    }
    check_params(x, weight, &vec![0.0; c_out], c_out, 9)?;

    let mut grad_in = Tensor4::zeros(x.dims());
    let mut grad_w = vec![0.0; weight.len()];
    let mut grad_b = vec![0.0; c_out];
    for n in 0..n_batch {
        for co in 0..c_out {
            let g_plane = grad_out.plane(n, co);
            grad_b[co] += g_plane.iter().sum::<f64>();
            for ci in 0..c_in {
                let base = (co * c_in + ci) * 9;
                let in_plane = x.plane(n, ci);
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = valid_range(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = valid_range(dx, w);
                        let wv = weight[base + ky * 3 + kx];
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let src_start = ((y as isize + dy) as usize * w) as isize + x0 as isize + dx;
                            let src = &in_plane[src_start as usize..][..x1 - x0];
                            let g = &g_plane[y * w + x0..y * w + x1];
                            for (&gv, &iv) in g.iter().zip(src) {
                                acc += gv * iv;
                            }
                        }
                        grad_w[base + ky * 3 + kx] += acc;
                        if wv == 0.0 {
                            continue;
                        }
                        let gi_plane = grad_in.plane_mut(n, ci);
                        for y in y0..y1 {
                            let dst_start = ((y as isize + dy) as usize * w) as isize + x0 as isize + dx;
                            let dst = &mut gi_plane[dst_start as usize..][..x1 - x0];
                            let g = &g_plane[y * w + x0..y * w + x1];
                            for (d, &gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

/// Weights are laid out `(c_out, c_in)`.
pub fn conv1x1_forward(x: &Tensor4, weight: &[f64], bias: &[f64], c_out: usize) -> Result<Tensor4, NnError> {
    check_params(x, weight, bias, c_out, 1)?;
    let [n_batch, c_in, h, w] = x.dims();
    let mut out = Tensor4::zeros([n_batch, c_out, h, w]);
    for n in 0..n_batch {
        for co in 0..c_out {
            let out_plane = out.plane_mut(n, co);
            out_plane.fill(bias[co]);
            for ci in 0..c_in {
                let wv = weight[co * c_in + ci];
                for (o, &i) in out_plane.iter_mut().zip(x.plane(n, ci)) {
                    *o += wv * i;
                }
            }
        }
    }
    Ok(out)
}

pub fn conv1x1_backward(x: &Tensor4, weight: &[f64], grad_out: &Tensor4) -> Result<ConvGrads, NnError> {
    let [n_batch, c_in, h, w] = x.dims();
    let c_out = grad_out.channels();
    if grad_out.dims() != [n_batch, c_out, h, w] || weight.len() != c_out * c_in {
        return Err(NnError::ShapeMismatch {
            what: "1x1 convolution gradient",
            expected: format!("[{n_batch}, {c_out}, {h}, {w}] with {} weights", c_out * c_in),
            got: format!("{:?} with {} weights", grad_out.dims(), weight.len()),
        });
    }
    let mut grad_in = Tensor4::zeros(x.dims());
    let mut grad_w = vec![0.0; weight.len()];
    let mut grad_b = vec![0.0; c_out];
    for n in 0..n_batch {
        for co in 0..c_out {
            let g_plane = grad_out.plane(n, co);
            grad_b[co] += g_plane.iter().sum::<f64>();
            for ci in 0..c_in {
                let wv = weight[co * c_in + ci];
                grad_w[co * c_in + ci] += g_plane.iter().zip(x.plane(n, ci)).map(|(g, i)| g * i).sum::<f64>();
                for (d, &g) in grad_in.plane_mut(n, ci).iter_mut().zip(g_plane) {
                    *d += wv * g;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{assert_grad_close, numeric_grad, random_tensor, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, [2, 1, 5, 4]);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let y = conv3x3_forward(&x, &k, &[0.0], 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor4::filled([1, 1, 3, 3], 1.0);
        let y = conv3x3_forward(&x, &[1.0; 9], &[0.0], 1).unwrap();
        let expected = [4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = Tensor4::zeros([1, 2, 3, 3]);
        assert!(matches!(
            conv3x3_forward(&x, &[0.0; 9], &[0.0], 1),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn conv3x3_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, [2, 3, 4, 4]);
        let w = random_vec(&mut rng, 4 * 3 * 9);
        let b = random_vec(&mut rng, 4);
        let probe = random_tensor(&mut rng, [2, 4, 4, 4]);
        let loss = |x: &Tensor4, w: &[f64], b: &[f64]| -> f64 {
            let y = conv3x3_forward(x, w, b, 4).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum()
        };
        let grads = conv3x3_backward(&x, &w, &probe).unwrap();
        let num_x = numeric_grad(x.data(), |v| loss(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &w, &b));
        let num_w = numeric_grad(&w, |v| loss(&x, v, &b));
        let num_b = numeric_grad(&b, |v| loss(&x, &w, v));
        assert_grad_close(grads.input.data(), &num_x, 1e-4);
        assert_grad_close(&grads.weight, &num_w, 1e-4);
        assert_grad_close(&grads.bias, &num_b, 1e-4);
    }

    #[test]
    fn conv1x1_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_tensor(&mut rng, [2, 3, 2, 3]);
        let w = random_vec(&mut rng, 5 * 3);
        let b = random_vec(&mut rng, 5);
        let probe = random_tensor(&mut rng, [2, 5, 2, 3]);
        let loss = |x: &Tensor4, w: &[f64], b: &[f64]| -> f64 {
            let y = conv1x1_forward(x, w, b, 5).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum()
        };
        let grads = conv1x1_backward(&x, &w, &probe).unwrap();
        let num_x = numeric_grad(x.data(), |v| loss(&Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(), &w, &b));
        assert_grad_close(grads.input.data(), &num_x, 1e-4);
        assert_grad_close(&grads.weight, &numeric_grad(&w, |v| loss(&x, v, &b)), 1e-4);
        assert_grad_close(&grads.bias, &numeric_grad(&b, |v| loss(&x, &w, v)), 1e-4);
    }
}
