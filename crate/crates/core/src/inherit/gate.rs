use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, softmax_in_place, Matrix};

/// What the gate reads: the shared `r`-dim code or the raw layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateInput {
    #[default]
    Code,
    Input,
}

/// Softmax gate `G(v) = softmax(v·W_g + b_g)`, one probability vector per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: GateInput,
}

impl Gate {
    /// All-zero parameters: exactly uniform mixing.
    pub fn zeros(input_dim: usize, heads: usize, input: GateInput) -> Self {
        Self {
            weight: Matrix::zeros(input_dim, heads),
            bias: vec![0.0; heads],
            input,
        }
    }

    pub fn heads(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    pub fn logits(&self, v: &Matrix) -> Result<Matrix> {
        if v.cols() != self.input_dim() {
            return Err(Error::shape("gate input", self.input_dim(), v.cols()));
        }
        let mut l = matmul(v, &self.weight)?;
        l.add_row_vector(&self.bias);
        Ok(l)
    }

    pub fn probs(&self, v: &Matrix) -> Result<Matrix> {
        let mut p = self.logits(v)?;
        for i in 0..p.rows() {
            softmax_in_place(p.row_mut(i));
        }
        Ok(p)
    }

    /// Given `dL/dG` per row, returns `(dL/dv, dW_g, db_g)`.
    pub fn backward(&self, v: &Matrix, probs: &Matrix, dprobs: &Matrix) -> Result<(Matrix, Matrix, Vec<f64>)> {
        let dlogits = softmax_backward(probs, dprobs);
        let dw = matmul_tn(v, &dlogits)?;
        let db = dlogits.column_sums();
        let dv = matmul_nt(&dlogits, &self.weight)?;
        Ok((dv, dw, db))
    }
}

/// Row-wise softmax Jacobian-vector product: `p ⊙ (d − ⟨p, d⟩)`.
pub fn softmax_backward(probs: &Matrix, dprobs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let d = dprobs.row(i);
        let inner: f64 = p.iter().zip(d).map(|(a, b)| a * b).sum();
        for (o, (pk, dk)) in out.row_mut(i).iter_mut().zip(p.iter().zip(d)) {
            *o = pk * (dk - inner);
        }
    }
    out
}

/// Uniform `1/H` mixing weights for `rows` samples.
pub fn uniform_probs(rows: usize, heads: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, heads);
    m.data_mut().fill(1.0 / heads as f64);
    m
}
