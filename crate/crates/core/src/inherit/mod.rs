//! Teacher-to-InherNet construction.
//!
//! Each teacher weight is factorized by truncated SVD. The left factor
//! `U_r Σ_r^½` becomes one shared down-projection, the right factor
//! `Σ_r^½ V_rᵀ` seeds every expert head, and a zero-initialized softmax gate
//! mixes the heads per sample. Variants cover the mirrored many-downs layer,
//! a paired-branch layer and the ablations without SVD or without the gate.

mod build;
mod conv;
mod decomposition;
mod gate;
mod inverse;
mod layer;
mod symmetric;

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};

pub use build::{
    build_inverse, build_symmetric, inherit_conv, inherit_conv_layer, inherit_dense,
    inherit_dense_layer, inherit_network, make_variant, resolve_rank, symmetric_rank,
    InheritOptions, RankPolicy,
};
pub use conv::{InherConvCache, InherConvLayer};
pub use decomposition::{gradient_decomposition_check, DecompositionReport};
pub use gate::{softmax_backward, uniform_probs, Gate, GateInput};
pub use inverse::{InverseCache, InverseLayer};
pub use layer::{InherNetCache, InherNetLayer};
pub use symmetric::{SymmetricCache, SymmetricLayer};

/// How the right factor is split across heads at initialization.
///
/// `ConvexExact` gives every head the full `Σ_r^½ V_rᵀ`, so a uniform convex
/// mix reproduces `W_r` exactly. `PaperLiteral` scales each head by `1/H`,
/// which under the same convex mix yields `W_r / H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    #[default]
    ConvexExact,
    PaperLiteral,
}

impl Combiner {
    pub(crate) fn head_scale(self, heads: usize) -> f64 {
        match self {
            Combiner::ConvexExact => 1.0,
            Combiner::PaperLiteral => 1.0 / heads as f64,
        }
    }
}

/// Layer architecture produced from one teacher layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Standard,
    /// Same shapes as `Standard`, random Kaiming-uniform init.
    NoSvd,
    /// `Standard` with mixing frozen uniform and no gate parameters.
    NoGate,
    /// Two gated down/up branches, rank matched to the `Standard` budget.
    Symmetric,
    /// Many downs, one shared up.
    Inverse,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "standard" => Variant::Standard,
            "no-svd" => Variant::NoSvd,
            "no-gate" => Variant::NoGate,
            "symmetric" => Variant::Symmetric,
            "inverse" => Variant::Inverse,
            other => return Err(format!("unknown variant `{other}`")),
        })
    }
}

/// Multiply row `i` of `m` by `w[i]`.
pub(crate) fn scale_rows(m: &Matrix, w: &[f64]) -> Matrix {
    let mut out = m.clone();
    for (i, &s) in w.iter().enumerate() {
        for v in out.row_mut(i) {
            *v *= s;
        }
    }
    out
}

/// Row-wise inner products of two equally shaped matrices.
pub(crate) fn row_dots(a: &Matrix, b: &Matrix) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), b.row(i))).collect()
}
