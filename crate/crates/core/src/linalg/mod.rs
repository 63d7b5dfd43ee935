//! Dense real linear algebra: products, norms, softmax and SVD.

mod matrix;
mod svd;
mod tensor;

pub use matrix::{
    dot, frobenius_norm, log_softmax, matmul, matmul_nt, matmul_tn, matmul_with, softmax,
    softmax_in_place, Matrix,
};
pub use svd::{
    condition_number, condition_number_of_spectrum, singular_values, svd, truncated_svd,
    SvdFactorization, MAX_SWEEPS, OFF_DIAGONAL_TOL, RANK_TOL,
};
pub use tensor::Tensor4D;
