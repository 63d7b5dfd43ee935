use serde::{Deserialize, Serialize};

use super::gate::{uniform_probs, Gate, GateInput};
use super::{row_dots, scale_rows, Combiner};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};

/// One shared down-projection feeding `H` gated expert up-projections:
/// `y = Σ_h G_h(·)·(x·W_down·W_up_h + b_h) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InherNetLayer {
    /// `m x r`.
    pub w_down: Matrix,
    /// `H` matrices, each `r x n`.
    pub heads: Vec<Matrix>,
    /// Optional per-head output offsets, each of length `n`.
    pub head_bias: Option<Vec<Vec<f64>>>,
    /// `None` mixes heads uniformly and carries no gate parameters.
    pub gate: Option<Gate>,
    pub combiner: Combiner,
    /// Output bias carried over from the teacher layer.
    pub bias: Option<Vec<f64>>,
}

/// Intermediates from one forward pass.
#[derive(Debug, Clone)]
pub struct InherNetCache {
    pub x: Matrix,
    pub code: Matrix,
    pub head_outputs: Vec<Matrix>,
    pub probs: Matrix,
}

impl InherNetLayer {
    pub fn new(
        w_down: Matrix,
        heads: Vec<Matrix>,
        gate: Option<Gate>,
        combiner: Combiner,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        let layer = Self {
            w_down,
            heads,
            head_bias: None,
            gate,
            combiner,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, r) = self.w_down.shape();
        if self.heads.is_empty() {
            return Err(Error::range("heads", 0, ">= 1"));
        }
        let n = self.heads[0].cols();
        if r == 0 || r > m.min(n) {
            return Err(Error::range("rank", r, format!("1..={}", m.min(n))));
        }
        for (h, up) in self.heads.iter().enumerate() {
            if up.shape() != (r, n) {
                return Err(Error::shape(format!("head {h}"), format!("{r}x{n}"), format!("{}x{}", up.rows(), up.cols())));
            }
        }
        if let Some(hb) = &self.head_bias {
            if hb.len() != self.heads.len() || hb.iter().any(|b| b.len() != n) {
                return Err(Error::shape("head_bias", format!("{} x {n}", self.heads.len()), "mismatched"));
            }
        }
        if let Some(g) = &self.gate {
            let want = match g.input {
                GateInput::Code => r,
                GateInput::Input => m,
            };
            if g.input_dim() != want || g.heads() != self.heads.len() || g.weight.cols() != self.heads.len() {
                return Err(Error::shape(
                    "gate",
                    format!("{want}x{}", self.heads.len()),
                    format!("{}x{}", g.weight.rows(), g.weight.cols()),
                ));
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
        self.w_down.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads[0].cols()
    }

    pub fn rank(&self) -> usize {
        self.w_down.cols()
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn gate_input<'a>(&self, x: &'a Matrix, code: &'a Matrix) -> &'a Matrix {
        match self.gate.as_ref().map(|g| g.input) {
            Some(GateInput::Input) => x,
            _ => code,
        }
    }

    /// Per-sample mixing weights for a batch.
    pub fn gate_probs(&self, x: &Matrix) -> Result<Matrix> {
        let code = matmul(x, &self.w_down)?;
        match &self.gate {
            Some(g) => g.probs(self.gate_input(x, &code)),
            None => Ok(uniform_probs(x.rows(), self.num_heads())),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, InherNetCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("inher input", self.input_dim(), x.cols()));
        }
        let code = matmul(x, &self.w_down)?;
        let probs = match &self.gate {
            Some(g) => g.probs(self.gate_input(x, &code))?,
            None => uniform_probs(x.rows(), self.num_heads()),
        };
        let mut head_outputs = Vec::with_capacity(self.num_heads());
        let mut y = Matrix::zeros(x.rows(), self.output_dim());
        for (h, up) in self.heads.iter().enumerate() {
            let mut f = matmul(&code, up)?;
            if let Some(hb) = &self.head_bias {
                f.add_row_vector(&hb[h]);
            }
            for i in 0..x.rows() {
                let g = probs.get(i, h);
                for (o, v) in y.row_mut(i).iter_mut().zip(f.row(i)) {
                    *o += g * v;
                }
            }
            head_outputs.push(f);
        }
        if let Some(b) = &self.bias {
            y.add_row_vector(b);
        }
        Ok((
            y,
            InherNetCache {
                x: x.clone(),
                code,
                head_outputs,
                probs,
            },
        ))
    }

    pub fn backward(&self, cache: &InherNetCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        self.backward_impl(cache, dy, false)
    }

    /// Backward pass with the gate treated as a constant.
    ///
    /// Gate parameter gradients are reported as zero and no gradient flows
    /// through the gate's input.
    pub fn backward_detached_gate(&self, cache: &InherNetCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        self.backward_impl(cache, dy, true)
    }

    fn backward_impl(&self, cache: &InherNetCache, dy: &Matrix, detach_gate: bool) -> Result<(Matrix, Vec<Vec<f64>>)> {
        if dy.shape() != (cache.x.rows(), self.output_dim()) {
            return Err(Error::shape("inher backward dy", format!("{}x{}", cache.x.rows(), self.output_dim()), format!("{}x{}", dy.rows(), dy.cols())));
        }
        let h_count = self.num_heads();
        let mut dcode = Matrix::zeros(cache.code.rows(), self.rank());
        let mut dprobs = Matrix::zeros(dy.rows(), h_count);
        let mut dheads = Vec::with_capacity(h_count);
        let mut dhead_bias = Vec::new();
        for (h, up) in self.heads.iter().enumerate() {
            let w: Vec<f64> = (0..dy.rows()).map(|i| cache.probs.get(i, h)).collect();
            let dyh = scale_rows(dy, &w);
            dheads.push(matmul_tn(&cache.code, &dyh)?.into_vec());
            if self.head_bias.is_some() {
                dhead_bias.push(dyh.column_sums());
            }
            dcode.add_assign(&matmul_nt(&dyh, up)?)?;
            for (i, d) in row_dots(dy, &cache.head_outputs[h]).into_iter().enumerate() {
                dprobs.set(i, h, d);
            }
        }
        let mut dx = Matrix::zeros(cache.x.rows(), self.input_dim());
        let mut gate_grads = None;
        if let Some(g) = &self.gate {
            if detach_gate {
                gate_grads = Some((vec![0.0; g.weight.rows() * g.weight.cols()], vec![0.0; g.heads()]));
            } else {
                let gin = self.gate_input(&cache.x, &cache.code);
                let (dgin, dw, db) = g.backward(gin, &cache.probs, &dprobs)?;
                match g.input {
                    GateInput::Code => dcode.add_assign(&dgin)?,
                    GateInput::Input => dx.add_assign(&dgin)?,
                }
                gate_grads = Some((dw.into_vec(), db));
            }
        }
        let ddown = matmul_tn(&cache.x, &dcode)?;
        dx.add_assign(&matmul_nt(&dcode, &self.w_down)?)?;

        let mut grads = vec![ddown.into_vec()];
        grads.extend(dheads);
        grads.extend(dhead_bias);
        if let Some((dw, db)) = gate_grads {
            grads.push(dw);
            grads.push(db);
        }
        if self.bias.is_some() {
            grads.push(dy.column_sums());
        }
        Ok((dx, grads))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = vec![self.w_down.data()];
        p.extend(self.heads.iter().map(|m| m.data()));
        if let Some(hb) = &self.head_bias {
            p.extend(hb.iter().map(|b| b.as_slice()));
        }
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
        let mut p = vec![self.w_down.data_mut()];
        p.extend(self.heads.iter_mut().map(|m| m.data_mut()));
        if let Some(hb) = &mut self.head_bias {
            p.extend(hb.iter_mut().map(|b| b.as_mut_slice()));
        }
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
        let mut n = vec!["down".to_string()];
        n.extend((0..self.num_heads()).map(|h| format!("head.{h}")));
        if self.head_bias.is_some() {
            n.extend((0..self.num_heads()).map(|h| format!("head_bias.{h}")));
        }
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
