//! 2-D convolution via im2col + matmul.
//!
//! Batches are matrices with one flattened `(channels, height, width)` image
//! per row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, Matrix, Tensor4D};
use crate::rng::Philox;

/// Geometry shared by the im2col helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> Result<(usize, usize)> {
        let ph = self.height + 2 * self.padding;
        let pw = self.width + 2 * self.padding;
        if self.stride == 0 || ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::shape(
                "conv output size",
                "positive output spatial dims",
                format!(
                    "input {}x{} pad {} kernel {}x{} stride {}",
                    self.height, self.width, self.padding, self.kernel_h, self.kernel_w, self.stride
                ),
            ));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }
}

/// Patch matrix of one image: `(out_h·out_w) x (c·kh·kw)`.
pub fn im2col(img: &[f64], g: &ConvGeometry) -> Result<Matrix> {
    let (oh, ow) = g.out_hw()?;
    let mut out = Matrix::zeros(oh * ow, g.patch_len());
    for oy in 0..oh {
        for ox in 0..ow {
            let row = out.row_mut(oy * ow + ox);
            let mut col = 0;
            for c in 0..g.channels {
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < g.height && (ix as usize) < g.width {
                            row[col] = img[(c * g.height + iy as usize) * g.width + ix as usize];
                        }
                        col += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scatter-add a patch-gradient matrix back onto an image gradient.
pub fn col2im(cols: &Matrix, g: &ConvGeometry, out: &mut [f64]) -> Result<()> {
    let (oh, ow) = g.out_hw()?;
    for oy in 0..oh {
        for ox in 0..ow {
            let row = cols.row(oy * ow + ox);
            let mut col = 0;
            for c in 0..g.channels {
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < g.height && (ix as usize) < g.width {
                            out[(c * g.height + iy as usize) * g.width + ix as usize] += row[col];
                        }
                        col += 1;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Convolution with kernel `(out_channels, in_channels, kernel_h, kernel_w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2DLayer {
    pub kernel: Tensor4D,
    pub bias: Option<Vec<f64>>,
    pub stride: usize,
    pub padding: usize,
    /// Spatial size `(height, width)` of the input feature map.
    pub input_hw: (usize, usize),
}

impl Conv2DLayer {
    pub fn new(
        kernel: Tensor4D,
        bias: Option<Vec<f64>>,
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
    ) -> Result<Self> {
        let layer = Self {
            kernel,
            bias,
            stride,
            padding,
            input_hw,
        };
        if let Some(b) = &layer.bias {
            if b.len() != layer.out_channels() {
                return Err(Error::shape("Conv2DLayer bias", layer.out_channels(), b.len()));
            }
        }
        if layer.kernel.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite conv kernel".into()));
        }
        layer.geometry().out_hw()?;
        Ok(layer)
    }

    pub fn kaiming(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
        rng: &mut Philox,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let dims = [out_channels, in_channels, kernel, kernel];
        let data = (0..dims.iter().product::<usize>())
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Self::new(
            Tensor4D::from_vec(dims, data)?,
            Some(vec![0.0; out_channels]),
            stride,
            padding,
            input_hw,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dims()[1]
    }

    pub fn geometry(&self) -> ConvGeometry {
        let d = self.kernel.dims();
        ConvGeometry {
            channels: d[1],
            height: self.input_hw.0,
            width: self.input_hw.1,
            kernel_h: d[2],
            kernel_w: d[3],
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn output_hw(&self) -> (usize, usize) {
        self.geometry().out_hw().expect("validated at construction")
    }

    pub fn input_dim(&self) -> usize {
        self.geometry().input_len()
    }

    pub fn output_dim(&self) -> usize {
        let (oh, ow) = self.output_hw();
        self.out_channels() * oh * ow
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.data().len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let g = self.geometry();
        if x.cols() != g.input_len() {
            return Err(Error::shape("conv2d input", g.input_len(), x.cols()));
        }
        let k = self.kernel.to_matrix();
        let n = self.out_channels();
        let (oh, ow) = g.out_hw()?;
        let spatial = oh * ow;
        let mut y = Matrix::zeros(x.rows(), n * spatial);
        for s in 0..x.rows() {
            let cols = im2col(x.row(s), &g)?;
            // (N x ckk)·(P x ckk)ᵀ = N x P, already channel-major.
            let o = matmul_nt(&k, &cols)?;
            let row = y.row_mut(s);
            row.copy_from_slice(o.data());
            if let Some(b) = &self.bias {
                for (c, &bc) in b.iter().enumerate() {
                    for v in &mut row[c * spatial..(c + 1) * spatial] {
                        *v += bc;
                    }
                }
            }
        }
        Ok(y)
    }

    /// Returns `(dX, [dK, db?])`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let g = self.geometry();
        let k = self.kernel.to_matrix();
        let n = self.out_channels();
        let (oh, ow) = g.out_hw()?;
        let spatial = oh * ow;
        let mut dk = Matrix::zeros(n, g.patch_len());
        let mut db = vec![0.0; n];
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        for s in 0..x.rows() {
            let cols = im2col(x.row(s), &g)?;
            let d = Matrix::from_vec(n, spatial, dy.row(s).to_vec())?;
            dk.add_assign(&matmul(&d, &cols)?)?;
            for (c, acc) in db.iter_mut().enumerate() {
                *acc += d.row(c).iter().sum::<f64>();
            }
            let dcols = crate::linalg::matmul_tn(&d, &k)?;
            col2im(&dcols, &g, dx.row_mut(s))?;
        }
        let mut grads = vec![dk.into_vec()];
        if self.bias.is_some() {
            grads.push(db);
        }
        Ok((dx, grads))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = vec![self.kernel.data()];
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = vec![self.kernel.data_mut()];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = vec!["kernel".to_string()];
        if self.bias.is_some() {
            n.push("bias".into());
        }
        n
    }
}
