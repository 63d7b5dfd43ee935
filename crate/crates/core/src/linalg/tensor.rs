use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Dense row-major 4-D array. Convolution kernels use
/// `(out_channels, in_channels, kernel_h, kernel_w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4D {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4D {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n || dims.contains(&0) {
            return Err(Error::shape(
                "Tensor4D::from_vec",
                format!("{n} elements for dims {dims:?} (all positive)"),
                data.len(),
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.dims[1] + b) * self.dims[2] + c) * self.dims[3] + d
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[self.index(a, b, c, d)]
    }

    /// Reshape to `dims[0] x (dims[1]·dims[2]·dims[3])`, the flattening used
    /// for channel decomposition.
    pub fn to_matrix(&self) -> Matrix {
        let cols = self.dims[1] * self.dims[2] * self.dims[3];
        Matrix::from_vec(self.dims[0], cols, self.data.clone()).expect("dims consistent")
    }

    /// Inverse of [`to_matrix`](Self::to_matrix).
    pub fn from_matrix(m: &Matrix, dims: [usize; 4]) -> Result<Self> {
        if m.rows() != dims[0] || m.cols() != dims[1] * dims[2] * dims[3] {
            return Err(Error::shape(
                "Tensor4D::from_matrix",
                format!("{}x{}", dims[0], dims[1] * dims[2] * dims[3]),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        Self::from_vec(dims, m.data().to_vec())
    }
}
