//! Closed-form parameter and spectral accounting for inherited networks.

mod gains;
mod report;

pub use gains::{head_marginal_gains, MarginalGains};
pub use report::{analyze, LayerReport, TheoryReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inherit::{GateInput, InherNetLayer};

/// Closed-form ratio `m·n / (h·r·(m+n) + h·(r+1))`, which counts one
/// down-projection per head.
pub fn compression_ratio_paper(m: usize, n: usize, r: usize, h: usize) -> f64 {
    (m * n) as f64 / paper_denominator(m, n, r, h) as f64
}

/// Denominator of [`compression_ratio_paper`]: `h·r·(m+n) + h·(r+1)`.
pub fn paper_denominator(m: usize, n: usize, r: usize, h: usize) -> usize {
    h * r * (m + n) + h * (r + 1)
}

/// Parameter count of an inherited layer with shape `(m, n, r, h)`: shared
/// down `m·r`, heads `h·r·n`, gate (if any) and output bias (if any).
pub fn param_count_formula(m: usize, n: usize, r: usize, h: usize, gate: Option<GateInput>, bias: bool) -> usize {
    let gate = match gate {
        Some(GateInput::Code) => r * h + h,
        Some(GateInput::Input) => m * h + h,
        None => 0,
    };
    m * r + h * r * n + gate + if bias { n } else { 0 }
}

/// Exact count by enumerating the layer's trainable tensors.
pub fn param_count_actual(layer: &InherNetLayer) -> usize {
    layer.parameter_count()
}

fn validate_spectrum(spectrum: &[f64]) -> Result<f64> {
    if spectrum.is_empty() {
        return Err(Error::shape("spectrum", "at least one value", 0));
    }
    if spectrum.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Degenerate("spectrum must be finite and nonnegative".into()));
    }
    if spectrum.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Degenerate("spectrum must be nonincreasing".into()));
    }
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("all-zero spectrum".into()));
    }
    Ok(total)
}

/// `Σ_{i>r} σ_i²`.
pub fn residual_energy(spectrum: &[f64], r: usize) -> f64 {
    spectrum.iter().skip(r).map(|s| s * s).sum()
}

/// Fraction of `Σσ²` kept by the top `r` values.
pub fn spectral_energy(spectrum: &[f64], r: usize) -> Result<f64> {
    let total = validate_spectrum(spectrum)?;
    if r > spectrum.len() {
        return Err(Error::range("rank", r, format!("0..={}", spectrum.len())));
    }
    let kept: f64 = spectrum[..r].iter().map(|s| s * s).sum();
    Ok(kept / total)
}

/// Smallest `r ≥ 1` whose residual energy is at most `ε` of the total.
///
/// Compares the tail sum directly, so `eckart_young_error(s, r)² ≤ ε·Σσ²`
/// holds for the returned rank without rounding slack.
pub fn rank_for_energy(spectrum: &[f64], epsilon: f64) -> Result<usize> {
    let total = validate_spectrum(spectrum)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::range("epsilon", epsilon, "(0, 1)"));
    }
    let budget = epsilon * total;
    Ok((1..=spectrum.len())
        .find(|&r| residual_energy(spectrum, r) <= budget)
        .unwrap_or(spectrum.len()))
}

/// `‖W − W_r‖_F = sqrt(Σ_{i>r} σ_i²)`.
pub fn eckart_young_error(spectrum: &[f64], r: usize) -> f64 {
    residual_energy(spectrum, r).sqrt()
}

/// Per-layer influence weights, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInfluence {
    alpha: Vec<f64>,
}

impl LayerInfluence {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Degenerate("influence weights must be nonnegative and non-empty".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Err(Error::Degenerate("influence weights sum to zero".into()));
        }
        Ok(Self {
            alpha: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(layers: usize) -> Result<Self> {
        Self::new(vec![1.0; layers])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// `1 − Σ_l α_l·(1 − energy_l(r_l))`.
pub fn preservation_bound(influences: &LayerInfluence, spectra: &[Vec<f64>], ranks: &[usize]) -> Result<f64> {
    let l = influences.alpha.len();
    if spectra.len() != l || ranks.len() != l {
        return Err(Error::shape(
            "preservation_bound",
            format!("{l} spectra and ranks"),
            format!("{} spectra, {} ranks", spectra.len(), ranks.len()),
        ));
    }
    let mut loss = 0.0;
    for ((a, s), &r) in influences.alpha.iter().zip(spectra).zip(ranks) {
        loss += a * (1.0 - spectral_energy(s, r.min(s.len()))?);
    }
    Ok(1.0 - loss)
}
