//! Dense multilayer perceptrons with hand-derived backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed from the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Elu => {
                if pre >= 0.0 {
                    1.0
                } else {
                    pre.exp()
                }
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// out_dim x in_dim
    pub weight: Matrix,
    pub bias: Vector,
}

/// A fully connected network. Hidden layers share one activation; the final
/// layer is linear. Head semantics (logit, mean/log-variance pairs, class
/// logits) are the caller's interpretation of the output vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Per-layer intermediate values kept from a forward pass for backprop.
pub struct ForwardCache {
    /// input followed by each layer's post-activation output
    inputs: Vec<Vector>,
    /// pre-activation values per layer
    pre: Vec<Vector>,
}

impl Mlp {
    /// Uniform fan-scaled initialization (range +/- sqrt(6/(fan_in+fan_out))),
    /// biases zero.
    pub fn init<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for v in weight.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
            });
        }
        Mlp { layers, activation }
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vector> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.weight.matvec(&cur)?;
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            if li < last {
                for p in pre.iter_mut() {
                    *p = self.activation.apply(*p);
                }
            }
            cur = pre;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<(Vector, ForwardCache)> {
        self.check_input(input)?;
        let mut inputs = vec![input.to_vec()];
        let mut pres = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.weight.matvec(inputs.last().unwrap())?;
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            pres.push(pre.clone());
            if li < last {
                for p in pre.iter_mut() {
                    *p = self.activation.apply(*p);
                }
            }
            inputs.push(pre);
        }
        let out = inputs.last().unwrap().clone();
        Ok((out, ForwardCache { inputs, pre: pres }))
    }

    /// Backprop `grad_out` (d loss / d output) through the network.
    /// Parameter gradients are accumulated into `grads`; the gradient with
    /// respect to the input is returned.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        grads: &mut Mlp,
    ) -> Result<Vector> {
        debug_assert_eq!(grads.layers.len(), self.layers.len());
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            if li < last {
                for (d, p) in delta.iter_mut().zip(&cache.pre[li]) {
                    *d *= self.activation.derivative(*p);
                }
            }
            let layer = &self.layers[li];
            let input = &cache.inputs[li];
            let glayer = &mut grads.layers[li];
            for (i, di) in delta.iter().enumerate() {
                let grow = glayer.weight.row_mut(i);
                for (g, x) in grow.iter_mut().zip(input) {
                    *g += di * x;
                }
                glayer.bias[i] += di;
            }
            delta = layer.weight.matvec_t(&delta)?;
        }
        Ok(delta)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn read_flat(&mut self, flat: &[f64], offset: &mut usize) {
        for l in &mut self.layers {
            let wd = l.weight.data_mut();
            wd.copy_from_slice(&flat[*offset..*offset + wd.len()]);
            *offset += wd.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[*offset..*offset + n]);
            *offset += n;
        }
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "mlp expects input of length {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }
}
