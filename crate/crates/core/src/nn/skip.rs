//! Residual skip block: conv3x3 -> ReLU -> conv3x3, plus a shortcut that is
//! the identity when channel counts agree and a 1x1 projection otherwise,
//! followed by a final ReLU.

use super::conv::{conv1x1_backward, conv1x1_forward, conv3x3_backward, conv3x3_forward};
use super::{NnError, Tensor4};

/// Borrowed parameters of one skip block.
#[derive(Debug, Clone, Copy)]
pub struct SkipParams<'a> {
    pub filters_1: usize,
    pub filters_2: usize,
    pub conv1_weight: &'a [f64],
    pub conv1_bias: &'a [f64],
    pub conv2_weight: &'a [f64],
    pub conv2_bias: &'a [f64],
    /// Present iff input channels differ from `filters_2`.
    pub projection: Option<(&'a [f64], &'a [f64])>,
}

#[derive(Debug, Clone)]
pub struct SkipCache {
    input: Tensor4,
    hidden_pre: Tensor4,
    hidden: Tensor4,
    output_pre: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGrads {
    pub input: Tensor4,
    pub conv1_weight: Vec<f64>,
    pub conv1_bias: Vec<f64>,
    pub conv2_weight: Vec<f64>,
    pub conv2_bias: Vec<f64>,
    pub projection: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn needs_projection(c_in: usize, filters_2: usize) -> bool {
    c_in != filters_2
}

pub fn skip_block_forward(x: &Tensor4, p: &SkipParams<'_>) -> Result<(Tensor4, SkipCache), NnError> {
    if needs_projection(x.channels(), p.filters_2) != p.projection.is_some() {
        return Err(NnError::ShapeMismatch {
            what: "skip block projection",
            expected: format!(
                "projection {} for {} -> {} channels",
                if needs_projection(x.channels(), p.filters_2) { "present" } else { "absent" },
                x.channels(),
                p.filters_2
            ),
            got: format!("projection {}", if p.projection.is_some() { "present" } else { "absent" }),
        });
    }
    let hidden_pre = conv3x3_forward(x, p.conv1_weight, p.conv1_bias, p.filters_1)?;
    let hidden = hidden_pre.relu();
    let mut output_pre = conv3x3_forward(&hidden, p.conv2_weight, p.conv2_bias, p.filters_2)?;
    match p.projection {
        Some((w, b)) => {
            let shortcut = conv1x1_forward(x, w, b, p.filters_2)?;
            add_assign(&mut output_pre, &shortcut);
        }
        None => add_assign(&mut output_pre, x),
    }
    let out = output_pre.relu();
    Ok((
        out,
        SkipCache {
            input: x.clone(),
            hidden_pre,
            hidden,
            output_pre,
        },
    ))
}

pub fn skip_block_backward(cache: &SkipCache, p: &SkipParams<'_>, grad_out: &Tensor4) -> Result<SkipGrads, NnError> {
    let grad_pre = relu_backward(&cache.output_pre, grad_out);
    let conv2 = conv3x3_backward(&cache.hidden, p.conv2_weight, &grad_pre)?;
    let grad_hidden_pre = relu_backward(&cache.hidden_pre, &conv2.input);
    let conv1 = conv3x3_backward(&cache.input, p.conv1_weight, &grad_hidden_pre)?;
    let mut grad_input = conv1.input;
    let projection = match p.projection {
        Some((w, _)) => {
            let proj = conv1x1_backward(&cache.input, w, &grad_pre)?;
            add_assign(&mut grad_input, &proj.input);
            Some((proj.weight, proj.bias))
        }
        None => {
            add_assign(&mut grad_input, &grad_pre);
            None
        }
    };
    Ok(SkipGrads {
        input: grad_input,
        conv1_weight: conv1.weight,
        conv1_bias: conv1.bias,
        conv2_weight: conv2.weight,
        conv2_bias: conv2.bias,
        projection,
    })
}

fn add_assign(a: &mut Tensor4, b: &Tensor4) {
    debug_assert_eq!(a.dims(), b.dims());
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

fn relu_backward(pre: &Tensor4, grad: &Tensor4) -> Tensor4 {
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::from_vec(pre.dims(), data).expect("same dims")
}
