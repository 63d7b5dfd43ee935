use serde::{Deserialize, Serialize};

use super::gate::{uniform_probs, Gate, GateInput};
use super::{row_dots, scale_rows, Combiner};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};

/// Many downs, one up: `y = (Σ_h G_h(x)·x·W_down_h)·W_up + b`.
///
/// The gated aggregate is formed in the `r`-dim code space before the single
/// shared expansion. The gate always reads the layer input, since there is no
/// single shared code to read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseLayer {
    /// `H` matrices, each `m x r`.
    pub downs: Vec<Matrix>,
    /// `r x n`.
    pub w_up: Matrix,
    pub gate: Option<Gate>,
    pub combiner: Combiner,
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct InverseCache {
    pub x: Matrix,
    pub codes: Vec<Matrix>,
    pub aggregate: Matrix,
    pub probs: Matrix,
}

impl InverseLayer {
    pub fn validate(&self) -> Result<()> {
        if self.downs.is_empty() {
            return Err(Error::range("heads", 0, ">= 1"));
        }
        let (m, r) = self.downs[0].shape();
        let n = self.w_up.cols();
        if self.w_up.rows() != r {
            return Err(Error::shape("inverse up", r, self.w_up.rows()));
        }
        if self.downs.iter().any(|d| d.shape() != (m, r)) {
            return Err(Error::shape("inverse downs", format!("{m}x{r}"), "mismatched"));
        }
        if let Some(g) = &self.gate {
            if g.input != GateInput::Input || g.input_dim() != m || g.heads() != self.downs.len() {
                return Err(Error::shape("inverse gate", format!("input-gated {m}x{}", self.downs.len()), format!("{:?} {}x{}", g.input, g.weight.rows(), g.weight.cols())));
            }
        }
        if let Some(b) = &self.bias {
            if b.len() != n {
                return Err(Error::shape("bias", n, b.len()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.downs[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_up.cols()
    }

    pub fn rank(&self) -> usize {
        self.w_up.rows()
    }

    pub fn num_heads(&self) -> usize {
        self.downs.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, InverseCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("inverse input", self.input_dim(), x.cols()));
        }
        let probs = match &self.gate {
            Some(g) => g.probs(x)?,
            None => uniform_probs(x.rows(), self.num_heads()),
        };
        let mut aggregate = Matrix::zeros(x.rows(), self.rank());
        let mut codes = Vec::with_capacity(self.num_heads());
        for (h, d) in self.downs.iter().enumerate() {
            let z = matmul(x, d)?;
            for i in 0..x.rows() {
                let g = probs.get(i, h);
                for (o, v) in aggregate.row_mut(i).iter_mut().zip(z.row(i)) {
                    *o += g * v;
                }
            }
            codes.push(z);
        }
        let mut y = matmul(&aggregate, &self.w_up)?;
        if let Some(b) = &self.bias {
            y.add_row_vector(b);
        }
        Ok((
            y,
            InverseCache {
                x: x.clone(),
                codes,
                aggregate,
                probs,
            },
        ))
    }

    pub fn backward(&self, cache: &InverseCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let dup = matmul_tn(&cache.aggregate, dy)?;
        let dagg = matmul_nt(dy, &self.w_up)?;
        let mut dx = Matrix::zeros(cache.x.rows(), self.input_dim());
        let mut ddowns = Vec::with_capacity(self.num_heads());
        let mut dprobs = Matrix::zeros(dy.rows(), self.num_heads());
        for (h, d) in self.downs.iter().enumerate() {
            let w: Vec<f64> = (0..dy.rows()).map(|i| cache.probs.get(i, h)).collect();
            let dz = scale_rows(&dagg, &w);
            ddowns.push(matmul_tn(&cache.x, &dz)?.into_vec());
            dx.add_assign(&matmul_nt(&dz, d)?)?;
            for (i, v) in row_dots(&dagg, &cache.codes[h]).into_iter().enumerate() {
                dprobs.set(i, h, v);
            }
        }
        let mut grads = ddowns;
        grads.push(dup.into_vec());
        if let Some(g) = &self.gate {
            let (dgin, dw, db) = g.backward(&cache.x, &cache.probs, &dprobs)?;
            dx.add_assign(&dgin)?;
            grads.push(dw.into_vec());
            grads.push(db);
        }
        if self.bias.is_some() {
            grads.push(dy.column_sums());
        }
        Ok((dx, grads))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p: Vec<&[f64]> = self.downs.iter().map(|m| m.data()).collect();
        p.push(self.w_up.data());
        if let Some(g) = &self.gate {
            p.push(g.weight.data());
            p.push(&g.bias);
        }
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p: Vec<&mut [f64]> = self.downs.iter_mut().map(|m| m.data_mut()).collect();
        p.push(self.w_up.data_mut());
        if let Some(g) = &mut self.gate {
            p.push(g.weight.data_mut());
            p.push(&mut g.bias);
        }
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n: Vec<String> = (0..self.num_heads()).map(|h| format!("down.{h}")).collect();
        n.push("up".into());
        if self.gate.is_some() {
            n.push("gate.weight".into());
            n.push("gate.bias".into());
        }
        if self.bias.is_some() {
            n.push("bias".into());
        }
        n
    }
}
