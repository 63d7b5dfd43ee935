//! Network inheritance: compress a trained teacher into gated low-rank layers.
//!
//! A teacher weight `W` is factorized by truncated SVD; the factors seed one
//! shared down-projection and `H` expert up-projections whose outputs are mixed
//! by a per-sample softmax gate. The crate also carries the numerical substrate
//! (dense linear algebra, a small reverse-mode network core, SGD with
//! distillation losses) and closed-form parameter/spectral accounting used to
//! check the construction.

pub mod data;
pub mod error;
pub mod experiments;
pub mod inherit;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod parallel;
pub mod rng;
pub mod theory;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactorization, Tensor4D};
pub use nn::{Gradients, Layer, Network};
