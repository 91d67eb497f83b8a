use serde::{Deserialize, Serialize};

use super::Matrix;

/// A trainable tensor with its accumulated gradient.
///
/// Only the value is serialized; a deserialized tensor starts with a zero
/// gradient of matching shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StoredParam", into = "StoredParam")]
pub struct ParamTensor {
    pub value: Matrix,
    pub grad: Matrix,
}

#[derive(Serialize, Deserialize)]
struct StoredParam {
    value: Matrix,
}

impl From<StoredParam> for ParamTensor {
    fn from(s: StoredParam) -> Self {
        ParamTensor::new(s.value)
    }
}

impl From<ParamTensor> for StoredParam {
    fn from(p: ParamTensor) -> Self {
        StoredParam { value: p.value }
    }
}

impl ParamTensor {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        if self.grad.raw_dim() != self.value.raw_dim() {
            self.grad = Matrix::zeros(self.value.raw_dim());
        } else {
            self.grad.fill(0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

/// Anything that owns trainable parameters in a stable order.
///
/// The order returned by `params_mut` must be identical on every call; the
/// optimizers key their moment estimates on it.
pub trait Parameterized {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }
}

impl Parameterized for ParamTensor {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![self]
    }
}

impl Parameterized for Vec<ParamTensor> {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.iter_mut().collect()
    }
}

impl<A: Parameterized, B: Parameterized> Parameterized for (A, B) {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = self.0.params_mut();
        out.extend(self.1.params_mut());
        out
    }
}
