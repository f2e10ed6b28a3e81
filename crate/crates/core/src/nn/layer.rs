use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::loss::softmax_in_place;
use crate::tensor::ensure_finite;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    Relu,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }
}

/// Fully connected layer `activation(W x + b)` with `W` stored `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

/// Values recorded by a forward pass that the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::InvalidShape(alloc::format!(
                "weights must be rank 2, got {:?}",
                weights.shape()
            )));
        }
        let out = weights.shape()[0];
        if bias.shape() != [out] {
            return Err(Error::ShapeMismatch {
                context: "layer bias",
                expected: out,
                actual: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(
            inputs > 0 && outputs > 0,
            "layer dimensions must be positive"
        );
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weights: Tensor::new(vec![outputs, inputs], data).expect("consistent shape"),
            bias: Tensor::from_vec(vec![0.0; outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn parameters_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.data_mut(), self.bias.data_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<LayerCache> {
        if input.len() != self.inputs() {
            return Err(Error::ShapeMismatch {
                context: "dense layer input",
                expected: self.inputs(),
                actual: input.len(),
            });
        }
        ensure_finite(input, "dense layer input")?;
        let n_in = self.inputs();
        let w = self.weights.data();
        let pre: Vec<f64> = self
            .bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + dot(&w[o * n_in..(o + 1) * n_in], input))
            .collect();
        let mut output = pre.clone();
        match self.activation {
            Activation::Linear => {}
            Activation::Relu => output.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => softmax_in_place(&mut output),
        }
        Ok(LayerCache {
            input: input.to_vec(),
            pre_activation: pre,
            output,
        })
    }

    /// Backpropagates `grad_pre` (gradient w.r.t. the pre-activation)
    /// through the affine part, accumulating into `grad_w`/`grad_b`, and
    /// returns the gradient w.r.t. the layer input.
    pub(crate) fn backward_affine(
        &self,
        cache: &LayerCache,
        grad_pre: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Vec<f64> {
        let n_in = self.inputs();
        let w = self.weights.data();
        let mut grad_in = vec![0.0; n_in];
        for (o, &g) in grad_pre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_b[o] += g;
            let row = o * n_in..(o + 1) * n_in;
            for ((gw, &x), (gi, &wv)) in grad_w[row.clone()]
                .iter_mut()
                .zip(&cache.input)
                .zip(grad_in.iter_mut().zip(&w[row]))
            {
                *gw += g * x;
                *gi += g * wv;
            }
        }
        grad_in
    }
}

/// Applies `layer` to `input`, returning the output tensor together with the
/// cache the backward pass consumes.
pub fn dense_forward(input: &Tensor, layer: &DenseLayer) -> Result<(Tensor, LayerCache)> {
    let cache = layer.forward(input.data())?;
    Ok((Tensor::from_vec(cache.output.clone()), cache))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: &[&[f64]], b: &[f64], act: Activation) -> DenseLayer {
        let out = w.len();
        let inp = w[0].len();
        let data = w.iter().flat_map(|r| r.iter().copied()).collect();
        DenseLayer::new(
            Tensor::new(vec![out, inp], data).unwrap(),
            Tensor::from_vec(b.to_vec()),
            act,
        )
        .unwrap()
    }

    fn run(l: &DenseLayer, x: &[f64]) -> Vec<f64> {
        dense_forward(&Tensor::from_vec(x.to_vec()), l)
            .unwrap()
            .0
            .into_vec()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let l = layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], Activation::Linear);
        assert_eq!(run(&l, &[3.0, -1.0]), [3.0, -1.0]);
    }

    #[test]
    fn relu_clamps_negative_pre_activation() {
        let l = layer(&[&[1.0, 1.0]], &[0.5], Activation::Relu);
        let (out, cache) = dense_forward(&Tensor::from_vec(vec![-2.0, 1.0]), &l).unwrap();
        assert_eq!(out.data(), [0.0]);
        assert_eq!(cache.pre_activation, [-0.5]);
    }

    #[test]
    fn affine_arithmetic() {
        let l = layer(&[&[2.0, 0.0], &[0.0, 2.0]], &[1.0, 1.0], Activation::Linear);
        assert_eq!(run(&l, &[1.0, 2.0]), [3.0, 5.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let l = layer(&[&[1.0, 1.0]], &[0.0], Activation::Linear);
        assert!(matches!(
            l.forward(&[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            l.forward(&[1.0, f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = crate::rng::stream_rng(1, 0);
        let l = DenseLayer::glorot(10, 14, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(l.weights().data().iter().all(|w| w.abs() < limit));
        assert!(l.bias().data().iter().all(|&b| b == 0.0));
        assert_eq!((l.inputs(), l.outputs()), (10, 14));
    }

    #[test]
    fn linear_layer_without_bias_is_linear() {
        let l = layer(
            &[&[0.3, -1.2, 2.0], &[1.5, 0.25, -0.75]],
            &[0.0, 0.0],
            Activation::Linear,
        );
        let x = [0.2, -0.4, 1.1];
        let y = [-1.0, 0.5, 0.3];
        let (a, b) = (1.7, -0.6);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = run(&l, &combo);
        let fx = run(&l, &x);
        let fy = run(&l, &y);
        for i in 0..2 {
            assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-12);
        }
    }
}
