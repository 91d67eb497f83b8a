//! Fully connected layers with hand-written backward passes.

use ndarray::Axis;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{random_normal_matrix, Matrix, ParamTensor, Parameterized};
use crate::{Error, Result};

/// `y = x W^T + b` for a row batch `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out × in`
    pub weight: ParamTensor,
    /// `1 × out`
    pub bias: ParamTensor,
}

impl Linear {
    /// Xavier-normal weights, zero bias.
    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = (2.0 / (input + output) as f64).sqrt();
        Self {
            weight: ParamTensor::new(random_normal_matrix(output, input, std, rng)),
            bias: ParamTensor::new(Matrix::zeros((1, output))),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: ParamTensor::new(Matrix::eye(dim)),
            bias: ParamTensor::new(Matrix::zeros((1, dim))),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        x.dot(&self.weight.value.t()) + &self.bias.value
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Matrix, grad_out: &Matrix) -> Matrix {
        self.weight.grad += &grad_out.t().dot(x);
        self.bias.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        grad_out.dot(&self.weight.value)
    }
}

impl Parameterized for Linear {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut Matrix) {
        if let Activation::Tanh = self {
            m.mapv_inplace(f64::tanh);
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, out: &Matrix, grad: &mut Matrix) {
        if let Activation::Tanh = self {
            ndarray::Zip::from(grad)
                .and(out)
                .for_each(|g, &y| *g *= 1.0 - y * y);
        }
    }
}

/// A stack of linear layers with a fixed activation between consecutive
/// layers (none after the last one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Inputs to each layer, recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`; needs at least two entries.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid MLP dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::random(w[0], w[1], rng))
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].output_dim(),
                    w[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "MLP expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                self.activation.apply(&mut h);
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward(&h);
            if i < last {
                self.activation.apply(&mut next);
            }
            inputs.push(h);
            h = next;
        }
        Ok((h, MlpCache { inputs }))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, cache: &MlpCache, grad_out: &Matrix) -> Matrix {
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &cache.inputs[i];
            let dx = self.layers[i].backward(input, &grad);
            if i > 0 {
                grad = dx;
                // input[i] is the activation output of layer i-1
                self.activation.grad_from_output(input, &mut grad);
            } else {
                return dx;
            }
        }
        unreachable!("MLP has at least one layer")
    }

    /// `θ ← m θ + (1 - m) θ_src`, elementwise over every parameter.
    pub fn ema_from(&mut self, src: &Mlp, momentum: f64) {
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.weight.value.zip_mut_with(&s.weight.value, |d, &v| {
                *d = momentum * *d + (1.0 - momentum) * v
            });
            dst.bias.value.zip_mut_with(&s.bias.value, |d, &v| {
                *d = momentum * *d + (1.0 - momentum) * v
            });
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.shape() == b.weight.shape() && a.bias.shape() == b.bias.shape()
            })
    }
}

impl Parameterized for Mlp {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
