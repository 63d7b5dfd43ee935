//! Central finite differences, the oracle for every backward pass.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::{Gradients, Network, Objective};

/// `(f(x+h) − f(x−h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference estimate of `∂loss/∂θ` for every parameter of `net`.
pub fn finite_difference_grad(
    net: &Network,
    objective: &Objective<'_>,
    x: &Matrix,
    step: f64,
) -> Result<Gradients> {
    let mut probe = net.clone();
    let base = net.flat_params();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.set_flat_params(&flat)?;
        let plus = objective.evaluate(&probe.forward(x)?)?.0;
        flat[i] = base[i] - step;
        probe.set_flat_params(&flat)?;
        let minus = objective.evaluate(&probe.forward(x)?)?.0;
        flat[i] = base[i];
        out.push((plus - minus) / (2.0 * step));
    }
    // Reshape to the per-layer layout.
    let mut off = 0;
    let layers = net
        .params()
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| {
                    let v = out[off..off + p.len()].to_vec();
                    off += p.len();
                    v
                })
                .collect()
        })
        .collect();
    Ok(Gradients { layers })
}

/// Largest `|a − b| / max(|a|, |b|)` over entries where either exceeds `floor`.
pub fn max_relative_deviation(a: &Gradients, b: &Gradients, floor: f64) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .filter(|(x, y)| x.abs() > floor || y.abs() > floor)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()))
        .fold(0.0, f64::max)
}
