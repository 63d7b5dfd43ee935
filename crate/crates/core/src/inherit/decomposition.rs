//! Term-by-term assembly of the gated-layer gradient.
//!
//! For a sample with output gradient `d = ∂ℓ/∂y`, each head's parameters
//! receive `G_h · ∇_{θ_h}ℓ`, where `∇_{θ_h}ℓ` is the gradient the head would
//! get if its output were the layer output. The gate receives
//! `Σ_h Δ_h ∇_{θ_g} G_h` with `Δ_h = ⟨d, f_h⟩`. The shared down-projection
//! collects both. Per-sample terms are summed; the loss gradient already
//! carries the batch mean.

use super::gate::GateInput;
use super::layer::InherNetLayer;
use crate::error::Result;
use crate::linalg::{dot, Matrix};
use crate::nn::Objective;

/// Outcome of [`gradient_decomposition_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// Largest `|assembled − backward|` over all parameters.
    pub max_deviation: f64,
    /// Same, restricted to head parameters.
    pub head_term_deviation: f64,
    /// Same, restricted to gate parameters (0 when detached or ungated).
    pub gate_term_deviation: f64,
    pub loss: f64,
}

fn outer_add(acc: &mut Matrix, a: &[f64], b: &[f64], s: f64) {
    for (i, &ai) in a.iter().enumerate() {
        let row = acc.row_mut(i);
        for (v, &bj) in row.iter_mut().zip(b) {
            *v += s * ai * bj;
        }
    }
}

/// `v · Mᵀ` for a row vector `v` of length `M.cols()`.
fn times_transpose(v: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compare the assembled gradient against the layer's own backward pass.
///
/// With `detach_gate` the gate is held constant: its term is dropped from the
/// assembly and the comparison uses the detached backward.
pub fn gradient_decomposition_check(
    layer: &InherNetLayer,
    x: &Matrix,
    objective: &Objective<'_>,
    detach_gate: bool,
) -> Result<DecompositionReport> {
    let (y, cache) = layer.forward_cached(x)?;
    let (loss, dy) = objective.evaluate(&y)?;
    let (_, backward) = if detach_gate {
        layer.backward_detached_gate(&cache, &dy)?
    } else {
        layer.backward(&cache, &dy)?
    };

    let (m, r) = layer.w_down.shape();
    let n = layer.output_dim();
    let hc = layer.num_heads();
    let mut d_down = Matrix::zeros(m, r);
    let mut d_heads = vec![Matrix::zeros(r, n); hc];
    let mut d_head_bias = vec![vec![0.0; n]; hc];
    let mut d_gate_w = layer.gate.as_ref().map(|g| Matrix::zeros(g.input_dim(), hc));
    let mut d_gate_b = vec![0.0; hc];
    let mut d_bias = vec![0.0; n];

    for i in 0..x.rows() {
        let xi = x.row(i);
        let zi = cache.code.row(i);
        let di = dy.row(i);
        let g: Vec<f64> = (0..hc).map(|h| cache.probs.get(i, h)).collect();

        // Head term: G_h times the single-head gradient.
        for h in 0..hc {
            outer_add(&mut d_heads[h], zi, di, g[h]);
            for (acc, v) in d_head_bias[h].iter_mut().zip(di) {
                *acc += g[h] * v;
            }
            let dz = times_transpose(di, &layer.heads[h]);
            outer_add(&mut d_down, xi, &dz, g[h]);
        }
        for (acc, v) in d_bias.iter_mut().zip(di) {
            *acc += v;
        }

        // Gate term: Σ_h Δ_h ∂G_h/∂logits, then through the gate's affine map.
        if let (Some(gate), Some(dw), false) = (&layer.gate, d_gate_w.as_mut(), detach_gate) {
            let delta: Vec<f64> = (0..hc).map(|h| dot(di, cache.head_outputs[h].row(i))).collect();
            let mut dlogit = vec![0.0; hc];
            for (h, &dh) in delta.iter().enumerate() {
                for (k, acc) in dlogit.iter_mut().enumerate() {
                    let jac = if h == k { g[h] * (1.0 - g[h]) } else { -g[h] * g[k] };
                    *acc += dh * jac;
                }
            }
            let gin = match gate.input {
                GateInput::Code => zi,
                GateInput::Input => xi,
            };
            outer_add(dw, gin, &dlogit, 1.0);
            for (acc, v) in d_gate_b.iter_mut().zip(&dlogit) {
                *acc += v;
            }
            if gate.input == GateInput::Code {
                let dz = times_transpose(&dlogit, &gate.weight);
                outer_add(&mut d_down, xi, &dz, 1.0);
            }
        }
    }

    let mut assembled: Vec<Vec<f64>> = vec![d_down.into_vec()];
    let head_start = assembled.len();
    assembled.extend(d_heads.into_iter().map(Matrix::into_vec));
    if layer.head_bias.is_some() {
        assembled.extend(d_head_bias);
    }
    let head_end = assembled.len();
    if let Some(dw) = d_gate_w {
        assembled.push(dw.into_vec());
        assembled.push(d_gate_b);
    }
    let gate_end = assembled.len();
    if layer.bias.is_some() {
        assembled.push(d_bias);
    }

    let devs: Vec<f64> = assembled.iter().zip(&backward).map(|(a, b)| max_diff(a, b)).collect();
    let max_over = |lo: usize, hi: usize| devs[lo..hi].iter().copied().fold(0.0, f64::max);
    let max_deviation = if assembled.len() == backward.len() {
        max_over(0, devs.len())
    } else {
        f64::INFINITY
    };
    Ok(DecompositionReport {
        max_deviation,
        head_term_deviation: max_over(head_start, head_end),
        gate_term_deviation: max_over(head_end, gate_end),
        loss,
    })
}
