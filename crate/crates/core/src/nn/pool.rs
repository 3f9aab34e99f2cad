use super::{NnError, Tensor4};
use crate::genome::PoolKind;

/// What pooling backward needs from the forward pass.
#[derive(Debug, Clone)]
pub struct PoolCache {
    kind: PoolKind,
    input_dims: [usize; 4],
    /// Flat input offset of each output's winner (max pooling only).
    argmax: Vec<usize>,
}

pub fn pool2x2_forward(x: &Tensor4, kind: PoolKind) -> Result<(Tensor4, PoolCache), NnError> {
    let [n_batch, channels, h, w] = x.dims();
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(NnError::OddDimension { height: h, width: w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([n_batch, channels, oh, ow]);
    let mut argmax = Vec::new();
    if kind == PoolKind::Max {
        argmax.reserve(out.len());
    }
    let data = x.data();
    let mut o = 0;
    for n in 0..n_batch {
        for c in 0..channels {
            let base = x.offset(n, c, 0, 0);
            for y in 0..oh {
                for xx in 0..ow {
                    let cells = [
                        base + 2 * y * w + 2 * xx,
                        base + 2 * y * w + 2 * xx + 1,
                        base + (2 * y + 1) * w + 2 * xx,
                        base + (2 * y + 1) * w + 2 * xx + 1,
                    ];
                    out.data_mut()[o] = match kind {
                        PoolKind::Max => {
                            // first-found wins ties
                            let mut best = cells[0];
                            for &cell in &cells[1..] {
                                if data[cell] > data[best] {
                                    best = cell;
                                }
                            }
                            argmax.push(best);
                            data[best]
                        }
                        PoolKind::Average => cells.iter().map(|&i| data[i]).sum::<f64>() * 0.25,
                    };
                    o += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolCache {
            kind,
            input_dims: x.dims(),
            argmax,
        },
    ))
}

pub fn pool2x2_backward(cache: &PoolCache, grad_out: &Tensor4) -> Result<Tensor4, NnError> {
    let [n_batch, channels, h, w] = cache.input_dims;
    if grad_out.dims() != [n_batch, channels, h / 2, w / 2] {
        return Err(NnError::ShapeMismatch {
            what: "pooling output gradient",
            expected: format!("[{n_batch}, {channels}, {}, {}]", h / 2, w / 2),
            got: format!("{:?}", grad_out.dims()),
        });
    }
    let mut grad_in = Tensor4::zeros(cache.input_dims);
    match cache.kind {
        PoolKind::Max => {
            let gi = grad_in.data_mut();
            for (&cell, &g) in cache.argmax.iter().zip(grad_out.data()) {
                gi[cell] += g;
            }
        }
        PoolKind::Average => {
            let (oh, ow) = (h / 2, w / 2);
            for n in 0..n_batch {
                for c in 0..channels {
                    let g_plane = grad_out.plane(n, c);
                    let gi = grad_in.plane_mut(n, c);
                    for y in 0..oh {
                        for x in 0..ow {
                            let g = 0.25 * g_plane[y * ow + x];
                            gi[2 * y * w + 2 * x] += g;
                            gi[2 * y * w + 2 * x + 1] += g;
                            gi[(2 * y + 1) * w + 2 * x] += g;
                            gi[(2 * y + 1) * w + 2 * x + 1] += g;
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}
