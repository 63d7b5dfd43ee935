use serde::{Deserialize, Serialize};

use super::gate::{uniform_probs, Gate, GateInput};
use super::{row_dots, scale_rows, Combiner};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};

/// Paired branches, each with its own down and up:
/// `y = Σ_h G_h(x)·x·W_down_h·W_up_h + b` (LoRA-style mixture).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricLayer {
    pub downs: Vec<Matrix>,
    pub ups: Vec<Matrix>,
    pub gate: Option<Gate>,
    pub combiner: Combiner,
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SymmetricCache {
    pub x: Matrix,
    pub codes: Vec<Matrix>,
    pub branch_outputs: Vec<Matrix>,
    pub probs: Matrix,
}

impl SymmetricLayer {
    pub fn validate(&self) -> Result<()> {
        if self.downs.is_empty() || self.downs.len() != self.ups.len() {
            return Err(Error::shape("symmetric branches", self.downs.len(), self.ups.len()));
        }
        let (m, r) = self.downs[0].shape();
        let n = self.ups[0].cols();
        for (d, u) in self.downs.iter().zip(&self.ups) {
            if d.shape() != (m, r) || u.shape() != (r, n) {
                return Err(Error::shape("symmetric branch", format!("{m}x{r} / {r}x{n}"), "mismatched"));
            }
        }
        if let Some(g) = &self.gate {
            if g.input != GateInput::Input || g.input_dim() != m || g.heads() != self.downs.len() {
                return Err(Error::shape("symmetric gate", m, g.input_dim()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.downs[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.ups[0].cols()
    }

    pub fn rank(&self) -> usize {
        self.downs[0].cols()
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

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, SymmetricCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("symmetric input", self.input_dim(), x.cols()));
        }
        let probs = match &self.gate {
            Some(g) => g.probs(x)?,
            None => uniform_probs(x.rows(), self.num_heads()),
        };
        let mut y = Matrix::zeros(x.rows(), self.output_dim());
        let mut codes = Vec::new();
        let mut outs = Vec::new();
        for (h, (d, u)) in self.downs.iter().zip(&self.ups).enumerate() {
            let z = matmul(x, d)?;
            let f = matmul(&z, u)?;
            for i in 0..x.rows() {
                let g = probs.get(i, h);
                for (o, v) in y.row_mut(i).iter_mut().zip(f.row(i)) {
                    *o += g * v;
                }
            }
            codes.push(z);
            outs.push(f);
        }
        if let Some(b) = &self.bias {
            y.add_row_vector(b);
        }
        Ok((
            y,
            SymmetricCache {
                x: x.clone(),
                codes,
                branch_outputs: outs,
                probs,
            },
        ))
    }

    pub fn backward(&self, cache: &SymmetricCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let mut dx = Matrix::zeros(cache.x.rows(), self.input_dim());
        let mut ddowns = Vec::new();
        let mut dups = Vec::new();
        let mut dprobs = Matrix::zeros(dy.rows(), self.num_heads());
        for (h, (d, u)) in self.downs.iter().zip(&self.ups).enumerate() {
            let w: Vec<f64> = (0..dy.rows()).map(|i| cache.probs.get(i, h)).collect();
            let dyh = scale_rows(dy, &w);
            dups.push(matmul_tn(&cache.codes[h], &dyh)?.into_vec());
            let dz = matmul_nt(&dyh, u)?;
            ddowns.push(matmul_tn(&cache.x, &dz)?.into_vec());
            dx.add_assign(&matmul_nt(&dz, d)?)?;
            for (i, v) in row_dots(dy, &cache.branch_outputs[h]).into_iter().enumerate() {
                dprobs.set(i, h, v);
            }
        }
        let mut grads = ddowns;
        grads.extend(dups);
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
        p.extend(self.ups.iter().map(|m| m.data()));
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
        p.extend(self.ups.iter_mut().map(|m| m.data_mut()));
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
        n.extend((0..self.num_heads()).map(|h| format!("up.{h}")));
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
