use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::layer::{Activation, DenseLayer, LayerCache};
use crate::{Error, Result};

/// A feed-forward chain of dense layers. Softmax may only appear on the last
/// layer. Equality compares parameters only.
#[derive(Debug, Clone)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
    // Bumped on every mutable parameter access so that caches taken before
    // an update are rejected by `backward`.
    generation: u64,
}

impl PartialEq for DenseStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackCache {
    layers: Vec<LayerCache>,
    generation: u64,
}

impl StackCache {
    pub fn output(&self) -> &[f64] {
        self.layers
            .last()
            .map(|c| c.output.as_slice())
            .unwrap_or(&[])
    }

    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }
}

/// Gradient entering the network from above.
#[derive(Debug, Clone, Copy)]
pub enum OutputGrad<'a> {
    /// Gradient w.r.t. the network output (after the final activation).
    Activation(&'a [f64]),
    /// Gradient w.r.t. the final pre-activation. Used with softmax outputs,
    /// where softmax and cross-entropy are differentiated jointly.
    Logits(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Weight and bias gradients, shape-congruent with a [`DenseStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStore {
    pub layers: Vec<LayerGrad>,
}

impl GradientStore {
    pub fn zeros_like(stack: &DenseStack) -> Self {
        Self {
            layers: stack
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.inputs() * l.outputs()],
                    bias: vec![0.0; l.outputs()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.values_mut() {
            *g *= factor;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_congruent(&self, stack: &DenseStack) -> bool {
        self.layers.len() == stack.layers.len()
            && self.layers.iter().zip(&stack.layers).all(|(g, l)| {
                g.weights.len() == l.inputs() * l.outputs() && g.bias.len() == l.outputs()
            })
    }
}

impl DenseStack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch {
                    context: "stacked layer input",
                    expected: pair[0].outputs(),
                    actual: pair[1].inputs(),
                });
            }
            if pair[0].activation() == Activation::Softmax {
                return Err(Error::InvalidShape(alloc::format!(
                    "softmax on layer {i} is not the final layer"
                )));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// `depth` hidden ReLU layers of `width` units followed by an output
    /// layer with `output_activation`, Glorot-initialized.
    pub fn mlp<R: Rng + ?Sized>(
        inputs: usize,
        width: usize,
        depth: usize,
        outputs: usize,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(depth + 1);
        let mut fan_in = inputs;
        for _ in 0..depth {
            layers.push(DenseLayer::glorot(fan_in, width, Activation::Relu, rng));
            fan_in = width;
        }
        layers.push(DenseLayer::glorot(fan_in, outputs, output_activation, rng));
        Self::new(layers).expect("mlp dimensions chain")
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Mutable `(weights, bias)` per layer. Invalidates outstanding caches.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = (&mut [f64], &mut [f64])> {
        self.generation += 1;
        self.layers.iter_mut().map(DenseLayer::parameters_mut)
    }

    /// Flat parameter addressing: layer by layer, weights then bias.
    pub fn parameter(&self, mut index: usize) -> f64 {
        for l in &self.layers {
            let (w, b) = (l.weights().data(), l.bias().data());
            if index < w.len() {
                return w[index];
            }
            index -= w.len();
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_parameter(&mut self, mut index: usize, value: f64) {
        for (w, b) in self.parameters_mut() {
            if index < w.len() {
                w[index] = value;
                return;
            }
            index -= w.len();
            if index < b.len() {
                b[index] = value;
                return;
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, input: &[f64]) -> Result<StackCache> {
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = caches.last().map_or(input, |c| c.output.as_slice());
            let cache = layer.forward(x)?;
            caches.push(cache);
        }
        Ok(StackCache {
            layers: caches,
            generation: self.generation,
        })
    }

    /// Reverse-mode pass. Returns fresh parameter gradients and the gradient
    /// w.r.t. the network input.
    pub fn backward(
        &self,
        cache: &StackCache,
        grad: OutputGrad<'_>,
    ) -> Result<(GradientStore, Vec<f64>)> {
        let mut store = GradientStore::zeros_like(self);
        let grad_in = self.backward_into(cache, grad, &mut store)?;
        Ok((store, grad_in))
    }

    /// As [`backward`](Self::backward) but accumulates into `store`.
    pub fn backward_into(
        &self,
        cache: &StackCache,
        grad: OutputGrad<'_>,
        store: &mut GradientStore,
    ) -> Result<Vec<f64>> {
        if cache.layers.len() != self.layers.len() || self.layers.is_empty() {
            return Err(Error::MissingCache);
        }
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if !store.is_congruent(self) {
            return Err(Error::ShapeMismatch {
                context: "gradient store layers",
                expected: self.layers.len(),
                actual: store.layers.len(),
            });
        }
        let last = self.layers.len() - 1;
        let upstream = match grad {
            OutputGrad::Activation(g) | OutputGrad::Logits(g) => g,
        };
        if upstream.len() != self.outputs() {
            return Err(Error::ShapeMismatch {
                context: "output gradient",
                expected: self.outputs(),
                actual: upstream.len(),
            });
        }
        let mut g = match grad {
            OutputGrad::Logits(g) => g.to_vec(),
            OutputGrad::Activation(g) => {
                activation_backward(&self.layers[last], &cache.layers[last], g)
            }
        };
        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            let lg = &mut store.layers[i];
            let grad_in =
                layer.backward_affine(&cache.layers[i], &g, &mut lg.weights, &mut lg.bias);
            if i == 0 {
                return Ok(grad_in);
            }
            g = activation_backward(&self.layers[i - 1], &cache.layers[i - 1], &grad_in);
        }
        unreachable!()
    }
}

fn activation_backward(layer: &DenseLayer, cache: &LayerCache, grad_out: &[f64]) -> Vec<f64> {
    match layer.activation() {
        Activation::Linear => grad_out.to_vec(),
        Activation::Relu => grad_out
            .iter()
            .zip(&cache.pre_activation)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            let p = &cache.output;
            let inner: f64 = grad_out.iter().zip(p).map(|(g, p)| g * p).sum();
            grad_out
                .iter()
                .zip(p)
                .map(|(g, p)| p * (g - inner))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn scalar_layer(w: f64, act: Activation) -> DenseLayer {
        DenseLayer::new(
            Tensor::new(vec![1, 1], vec![w]).unwrap(),
            Tensor::from_vec(vec![0.0]),
            act,
        )
        .unwrap()
    }

    #[test]
    fn linear_scalar_gradient_is_input() {
        let stack = DenseStack::new(vec![scalar_layer(3.0, Activation::Linear)]).unwrap();
        let cache = stack.forward(&[2.0]).unwrap();
        let (g, gx) = stack
            .backward(&cache, OutputGrad::Activation(&[1.0]))
            .unwrap();
        assert_eq!(g.layers[0].weights, [2.0]);
        assert_eq!(g.layers[0].bias, [1.0]);
        assert_eq!(gx, [3.0]);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_pre_activation() {
        let stack = DenseStack::new(vec![
            scalar_layer(-1.0, Activation::Relu),
            scalar_layer(2.0, Activation::Linear),
        ])
        .unwrap();
        let cache = stack.forward(&[1.0]).unwrap();
        let (g, gx) = stack
            .backward(&cache, OutputGrad::Activation(&[1.0]))
            .unwrap();
        assert_eq!(g.layers[0].weights, [0.0]);
        assert_eq!(gx, [0.0]);
    }

    #[test]
    fn softmax_must_be_last() {
        let r = DenseStack::new(vec![
            scalar_layer(1.0, Activation::Softmax),
            scalar_layer(1.0, Activation::Linear),
        ]);
        assert!(matches!(r, Err(Error::InvalidShape(_))));
    }

    #[test]
    fn stale_and_missing_caches_are_rejected() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let mut stack = DenseStack::mlp(3, 4, 1, 2, Activation::Softmax, &mut rng);
        let cache = stack.forward(&[0.1, 0.2, 0.3]).unwrap();
        let other = DenseStack::mlp(3, 4, 2, 2, Activation::Softmax, &mut rng);
        assert_eq!(
            other
                .backward(&cache, OutputGrad::Logits(&[0.0, 0.0]))
                .unwrap_err(),
            Error::MissingCache
        );
        stack.set_parameter(0, 1.0);
        assert_eq!(
            stack
                .backward(&cache, OutputGrad::Logits(&[0.0, 0.0]))
                .unwrap_err(),
            Error::StaleCache
        );
    }

    #[test]
    fn flat_parameter_addressing_covers_everything() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let mut stack = DenseStack::mlp(3, 4, 1, 2, Activation::Linear, &mut rng);
        assert_eq!(stack.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
        let last = stack.parameter_count() - 1;
        stack.set_parameter(last, 9.0);
        assert_eq!(stack.layers()[1].bias().data()[1], 9.0);
        assert_eq!(stack.parameter(last), 9.0);
    }
}
