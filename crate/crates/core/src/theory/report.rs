use serde::{Deserialize, Serialize};

use super::{
    compression_ratio_paper, eckart_young_error, paper_denominator, preservation_bound, residual_energy,
    spectral_energy, LayerInfluence,
};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, condition_number_of_spectrum, dot, singular_values, Matrix};
use crate::nn::{Layer, Network};

/// Accounting for one teacher/inherited layer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub teacher_kind: String,
    pub inherited_kind: String,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub heads: usize,
    /// Residual energy fraction `Σ_{i>r}σ²/Σσ²`.
    pub epsilon: f64,
    pub spectral_energy_ratio: f64,
    pub eckart_young_error: f64,
    pub kappa_teacher: f64,
    /// Condition number of the inherited down factor (or spatial kernel).
    pub kappa_down: f64,
    pub param_count_teacher: usize,
    pub param_count_actual: usize,
    /// `h·r·(m+n) + h·(r+1)`, one down per head.
    pub param_count_per_head_down: usize,
    pub rho_paper: f64,
    pub rho_actual: f64,
}

/// Network-level summary plus per-layer rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    /// Closed form with one down-projection per head, pooled over layers.
    pub rho_paper: f64,
    /// Enumerated parameters of the inherited network (shared down).
    pub param_count_actual: usize,
    pub param_count_teacher: usize,
    /// `param_count_teacher / param_count_actual`.
    pub rho_actual: f64,
    /// Kept energy over all inherited layers, `Σ kept / Σ total`.
    pub spectral_energy_ratio: f64,
    /// Frobenius error over all inherited layers stacked.
    pub eckart_young_error: f64,
    /// Largest per-layer residual energy fraction.
    pub epsilon: f64,
    /// Largest teacher condition number.
    pub kappa: f64,
    pub preservation_lower_bound: f64,
    pub per_layer_breakdown: Vec<LayerReport>,
    /// Which parameter accounting each ratio uses.
    pub accounting: Vec<String>,
    /// Mean cosine similarity of teacher vs inherited outputs on probe inputs.
    /// An empirical diagnostic, not the similarity in the preservation bound.
    pub empirical_output_cosine: Option<f64>,
}

impl TheoryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn teacher_weight(layer: &Layer) -> Option<Matrix> {
    match layer {
        Layer::Dense(d) => Some(d.weight.clone()),
        Layer::Conv2d(c) => Some(c.kernel.to_matrix()),
        _ => None,
    }
}

/// `(rank, heads, down factor)` of an inherited layer.
fn inherited_shape(layer: &Layer) -> Option<(usize, usize, Matrix)> {
    match layer {
        Layer::Inher(l) => Some((l.rank(), l.num_heads(), l.w_down.clone())),
        Layer::InherConv(l) => Some((l.rank(), l.num_heads(), l.spatial.kernel.to_matrix())),
        Layer::Inverse(l) => Some((l.rank(), l.num_heads(), l.w_up.clone())),
        Layer::Symmetric(l) => Some((l.rank(), l.num_heads(), l.downs[0].clone())),
        _ => None,
    }
}

fn mean_cosine(a: &Matrix, b: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let (x, y) = (a.row(i), b.row(i));
        let den = dot(x, x).sqrt() * dot(y, y).sqrt();
        total += if den == 0.0 { 1.0 } else { dot(x, y) / den };
    }
    total / a.rows().max(1) as f64
}

/// Compare a teacher with a network produced by inheritance.
///
/// Layers are paired by position. `influences` defaults to uniform weights
/// over the inherited layers; `probe` enables the output-cosine diagnostic.
pub fn analyze(
    teacher: &Network,
    inherited: &Network,
    influences: Option<&LayerInfluence>,
    probe: Option<&Matrix>,
) -> Result<TheoryReport> {
    if teacher.layers().len() != inherited.layers().len() {
        return Err(Error::shape("analyze layer count", teacher.layers().len(), inherited.layers().len()));
    }
    let mut rows = Vec::new();
    let mut spectra = Vec::new();
    let mut ranks = Vec::new();
    let (mut resid, mut total, mut mn_sum, mut den_sum) = (0.0, 0.0, 0usize, 0usize);
    for (i, (t, s)) in teacher.layers().iter().zip(inherited.layers()).enumerate() {
        let (Some(w), Some((r, h, down))) = (teacher_weight(t), inherited_shape(s)) else {
            continue;
        };
        let spectrum = singular_values(&w)?;
        let (m, n) = w.shape();
        let energy = spectral_energy(&spectrum, r.min(spectrum.len()))?;
        let tot: f64 = spectrum.iter().map(|v| v * v).sum();
        resid += residual_energy(&spectrum, r);
        total += tot;
        mn_sum += m * n;
        den_sum += paper_denominator(m, n, r, h);
        let actual = s.parameter_count();
        rows.push(LayerReport {
            index: i,
            teacher_kind: t.kind().into(),
            inherited_kind: s.kind().into(),
            m,
            n,
            rank: r,
            heads: h,
            epsilon: 1.0 - energy,
            spectral_energy_ratio: energy,
            eckart_young_error: eckart_young_error(&spectrum, r),
            kappa_teacher: condition_number_of_spectrum(&spectrum)?,
            kappa_down: condition_number(&down)?,
            param_count_teacher: t.parameter_count(),
            param_count_actual: actual,
            param_count_per_head_down: paper_denominator(m, n, r, h),
            rho_paper: compression_ratio_paper(m, n, r, h),
            rho_actual: t.parameter_count() as f64 / actual as f64,
        });
        spectra.push(spectrum);
        ranks.push(r);
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("no inherited layers to analyze".into()));
    }
    let uniform;
    let alpha = match influences {
        Some(a) => a,
        None => {
            uniform = LayerInfluence::uniform(rows.len())?;
            &uniform
        }
    };
    let cosine = match probe {
        Some(x) => Some(mean_cosine(&teacher.forward(x)?, &inherited.forward(x)?)),
        None => None,
    };
    let param_count_actual = inherited.parameter_count();
    let param_count_teacher = teacher.parameter_count();
    Ok(TheoryReport {
        rho_paper: mn_sum as f64 / den_sum as f64,
        param_count_actual,
        param_count_teacher,
        rho_actual: param_count_teacher as f64 / param_count_actual as f64,
        spectral_energy_ratio: 1.0 - resid / total,
        eckart_young_error: resid.sqrt(),
        epsilon: rows.iter().map(|r| r.epsilon).fold(0.0, f64::max),
        kappa: rows.iter().map(|r| r.kappa_teacher).fold(0.0, f64::max),
        preservation_lower_bound: preservation_bound(alpha, &spectra, &ranks)?,
        per_layer_breakdown: rows,
        accounting: vec![
            "rho_paper: teacher weights over h*r*(m+n) + h*(r+1), one down-projection per head".into(),
            "rho_actual: all teacher parameters over all enumerated inherited parameters, one shared down-projection".into(),
        ],
        empirical_output_cosine: cosine,
    })
}
