use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng::Philox;

/// Fully connected layer, row-vector convention `Y = X·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Option<Vec<f64>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.cols() {
                return Err(Error::shape("DenseLayer bias", weight.cols(), b.len()));
            }
        }
        Ok(Self { weight, bias })
    }

    /// Kaiming-uniform weights (`U(±√(6/fan_in))`), zero bias.
    pub fn kaiming(input: usize, output: usize, bias: bool, rng: &mut Philox) -> Self {
        let bound = (6.0 / input as f64).sqrt();
        Self {
            weight: Matrix::random_uniform(input, output, bound, rng),
            bias: bias.then(|| vec![0.0; output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = matmul(x, &self.weight)?;
        if let Some(b) = &self.bias {
            y.add_row_vector(b);
        }
        Ok(y)
    }

    /// Returns `(dX, [dW, db?])`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let dw = matmul_tn(x, dy)?;
        let dx = matmul_nt(dy, &self.weight)?;
        let mut grads = vec![dw.into_vec()];
        if self.bias.is_some() {
            grads.push(dy.column_sums());
        }
        Ok((dx, grads))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = vec![self.weight.data()];
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = vec![self.weight.data_mut()];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = vec!["weight".to_string()];
        if self.bias.is_some() {
            n.push("bias".into());
        }
        n
    }
}

/// Elementwise `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}
