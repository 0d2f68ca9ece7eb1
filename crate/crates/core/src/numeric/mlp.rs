use serde::{Deserialize, Serialize};

use super::matrix::{add_outer, sigmoid, DenseMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// One dense layer: `activation(W·x + b)` with `W` of shape `out × in`.
#[derive(Clone, Copy, Debug)]
pub struct LayerRef<'a> {
    pub weights: &'a DenseMatrix,
    pub bias: &'a [f64],
    pub activation: Activation,
}

#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    /// Input of each layer.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn check_layers(input: usize, layers: &[LayerRef<'_>]) -> Result<()> {
    let mut width = input;
    for (i, l) in layers.iter().enumerate() {
        if l.weights.cols() != width {
            return Err(Error::Config(format!(
                "mlp layer {i} expects input width {}, previous width is {width}",
                l.weights.cols()
            )));
        }
        if l.bias.len() != l.weights.rows() {
            return Err(Error::Config(format!(
                "mlp layer {i} bias has {} entries for {} units",
                l.bias.len(),
                l.weights.rows()
            )));
        }
        width = l.weights.rows();
    }
    if width != 1 {
        return Err(Error::Config(format!(
            "mlp final width must be 1, got {width}"
        )));
    }
    Ok(())
}

/// Runs the stack and returns the scalar output of the last (width 1) layer.
pub fn mlp_forward(x: &[f64], layers: &[LayerRef<'_>]) -> Result<(f64, MlpCache)> {
    check_layers(x.len(), layers)?;
    let mut cache = MlpCache::default();
    let mut cur = x.to_vec();
    for l in layers {
        let mut z = l.weights.matvec(&cur);
        for (zi, b) in z.iter_mut().zip(l.bias) {
            *zi += b;
        }
        let a: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
        cache.inputs.push(std::mem::replace(&mut cur, a.clone()));
        cache.pre.push(z);
        cache.post.push(a);
    }
    let logit = cur[0];
    if !logit.is_finite() {
        return Err(Error::NonFinite { row: 0 });
    }
    Ok((logit, cache))
}

/// Accumulates parameter gradients for `d_logit` and returns the input gradient.
///
/// `grads[i]` holds `(dW, db)` buffers for layer `i`.
pub fn mlp_backward(
    layers: &[LayerRef<'_>],
    cache: &MlpCache,
    d_logit: f64,
    grads: &mut [(&mut [f64], &mut [f64])],
) -> Vec<f64> {
    let mut d_out = vec![d_logit];
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(cache.pre[i].iter().zip(&cache.post[i]))
            .map(|(g, (&z, &a))| g * l.activation.derivative(z, a))
            .collect();
        let (gw, gb) = &mut grads[i];
        add_outer(gw, &d_pre, &cache.inputs[i]);
        for (b, d) in gb.iter_mut().zip(&d_pre) {
            *b += d;
        }
        d_out = l.weights.matvec_t(&d_pre);
    }
    d_out
}
