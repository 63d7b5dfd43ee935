//! Channel-decomposed convolution: a shared `r`-channel spatial conv followed
//! by `H` gated 1x1 convs back to `N` channels.

use serde::{Deserialize, Serialize};

use super::gate::{uniform_probs, Gate, GateInput};
use super::Combiner;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Tensor4D};
use crate::nn::Conv2DLayer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InherConvLayer {
    /// Spatial stage, kernel `(r, c, kh, kw)`, no bias.
    pub spatial: Conv2DLayer,
    /// 1x1 stages, each kernel `(N, r, 1, 1)`.
    pub heads: Vec<Tensor4D>,
    /// Reads the spatial mean of the code map (`Code`) or of the input (`Input`).
    pub gate: Option<Gate>,
    pub combiner: Combiner,
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct InherConvCache {
    pub x: Matrix,
    pub code: Matrix,
    pub gate_in: Matrix,
    pub head_outputs: Vec<Matrix>,
    pub probs: Matrix,
}

impl InherConvLayer {
    pub fn validate(&self) -> Result<()> {
        let r = self.rank();
        if self.heads.is_empty() {
            return Err(Error::range("heads", 0, ">= 1"));
        }
        let n = self.heads[0].dims()[0];
        for h in &self.heads {
            if h.dims() != [n, r, 1, 1] {
                return Err(Error::shape("1x1 head", format!("{:?}", [n, r, 1, 1]), format!("{:?}", h.dims())));
            }
        }
        if let Some(g) = &self.gate {
            let want = match g.input {
                GateInput::Code => r,
                GateInput::Input => self.spatial.in_channels(),
            };
            if g.input_dim() != want || g.heads() != self.heads.len() {
                return Err(Error::shape("conv gate", want, g.input_dim()));
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.spatial.out_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.heads[0].dims()[0]
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spatial.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        let (oh, ow) = self.spatial.output_hw();
        self.out_channels() * oh * ow
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn head_matrix(&self, h: usize) -> Matrix {
        self.heads[h].to_matrix()
    }

    fn pooled(&self, x: &Matrix, code: &Matrix) -> Matrix {
        let (channels, src) = match self.gate.as_ref().map(|g| g.input) {
            Some(GateInput::Input) => (self.spatial.in_channels(), x),
            _ => (self.rank(), code),
        };
        let spatial = src.cols() / channels;
        Matrix::from_fn(src.rows(), channels, |s, c| {
            src.row(s)[c * spatial..(c + 1) * spatial].iter().sum::<f64>() / spatial as f64
        })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, InherConvCache)> {
        let code = self.spatial.forward(x)?;
        let r = self.rank();
        let n = self.out_channels();
        let (oh, ow) = self.spatial.output_hw();
        let p = oh * ow;
        let gate_in = self.pooled(x, &code);
        let probs = match &self.gate {
            Some(g) => g.probs(&gate_in)?,
            None => uniform_probs(x.rows(), self.num_heads()),
        };
        let mut y = Matrix::zeros(x.rows(), n * p);
        let mut head_outputs = Vec::with_capacity(self.num_heads());
        for h in 0..self.num_heads() {
            let k = self.head_matrix(h);
            let mut f = Matrix::zeros(x.rows(), n * p);
            for s in 0..x.rows() {
                let c = Matrix::from_vec(r, p, code.row(s).to_vec())?;
                let o = k.matmul(&c)?;
                f.row_mut(s).copy_from_slice(o.data());
                let g = probs.get(s, h);
                for (acc, v) in y.row_mut(s).iter_mut().zip(o.data()) {
                    *acc += g * v;
                }
            }
            head_outputs.push(f);
        }
        if let Some(b) = &self.bias {
            for s in 0..x.rows() {
                let row = y.row_mut(s);
                for (c, &bc) in b.iter().enumerate() {
                    for v in &mut row[c * p..(c + 1) * p] {
                        *v += bc;
                    }
                }
            }
        }
        Ok((
            y,
            InherConvCache {
                x: x.clone(),
                code,
                gate_in,
                head_outputs,
                probs,
            },
        ))
    }

    pub fn backward(&self, cache: &InherConvCache, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let r = self.rank();
        let n = self.out_channels();
        let (oh, ow) = self.spatial.output_hw();
        let p = oh * ow;
        let batch = cache.x.rows();
        let mut dcode = Matrix::zeros(batch, r * p);
        let mut dheads: Vec<Matrix> = (0..self.num_heads()).map(|_| Matrix::zeros(n, r)).collect();
        let mut dprobs = Matrix::zeros(batch, self.num_heads());
        let mut db = vec![0.0; n];
        for s in 0..batch {
            let d = Matrix::from_vec(n, p, dy.row(s).to_vec())?;
            let c = Matrix::from_vec(r, p, cache.code.row(s).to_vec())?;
            for (ch, acc) in db.iter_mut().enumerate() {
                *acc += d.row(ch).iter().sum::<f64>();
            }
            let mut dc = Matrix::zeros(r, p);
            for h in 0..self.num_heads() {
                let g = cache.probs.get(s, h);
                dprobs.set(s, h, dot(dy.row(s), cache.head_outputs[h].row(s)));
                let gd = d.scale(g);
                dheads[h].add_assign(&crate::linalg::matmul_nt(&gd, &c)?)?;
                dc.add_assign(&crate::linalg::matmul_tn(&self.head_matrix(h), &gd)?)?;
            }
            dcode.row_mut(s).copy_from_slice(dc.data());
        }
        let mut dx_gate = None;
        let mut gate_grads = None;
        if let Some(g) = &self.gate {
            let (dgin, dw, dgb) = g.backward(&cache.gate_in, &cache.probs, &dprobs)?;
            match g.input {
                GateInput::Code => {
                    for s in 0..batch {
                        let row = dcode.row_mut(s);
                        for j in 0..r {
                            let v = dgin.get(s, j) / p as f64;
                            for e in &mut row[j * p..(j + 1) * p] {
                                *e += v;
                            }
                        }
                    }
                }
                GateInput::Input => {
                    let c = self.spatial.in_channels();
                    let hw = cache.x.cols() / c;
                    let mut dxg = Matrix::zeros(batch, cache.x.cols());
                    for s in 0..batch {
                        let row = dxg.row_mut(s);
                        for ch in 0..c {
                            let v = dgin.get(s, ch) / hw as f64;
                            for e in &mut row[ch * hw..(ch + 1) * hw] {
                                *e += v;
                            }
                        }
                    }
                    dx_gate = Some(dxg);
                }
            }
            gate_grads = Some((dw.into_vec(), dgb));
        }
        let (mut dx, spatial_grads) = self.spatial.backward(&cache.x, &dcode)?;
        if let Some(dxg) = dx_gate {
            dx.add_assign(&dxg)?;
        }
        let mut grads = spatial_grads;
        grads.extend(dheads.into_iter().map(Matrix::into_vec));
        if let Some((dw, dgb)) = gate_grads {
            grads.push(dw);
            grads.push(dgb);
        }
        if self.bias.is_some() {
            grads.push(db);
        }
        Ok((dx, grads))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.spatial.params();
        p.extend(self.heads.iter().map(|h| h.data()));
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
        let mut p = self.spatial.params_mut();
        p.extend(self.heads.iter_mut().map(|h| h.data_mut()));
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
        let mut n: Vec<String> = self.spatial.param_names().into_iter().map(|s| format!("spatial.{s}")).collect();
        n.extend((0..self.num_heads()).map(|h| format!("head.{h}")));
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
