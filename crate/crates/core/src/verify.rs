//! Runnable property suites behind the `verify` command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::energy_rank_approximation;
use crate::inherit::{
    gradient_decomposition_check, inherit_conv_layer, inherit_dense, Combiner, GateInput,
};
use crate::io::load_checkpoint;
use crate::linalg::{matmul, softmax, svd, truncated_svd, Matrix, Tensor4D};
use crate::nn::{finite_difference_grad, max_relative_deviation, Conv2DLayer, Layer, Network, Objective};
use crate::rng::{domain, Philox};
use crate::theory::{
    compression_ratio_paper, eckart_young_error, param_count_formula, paper_denominator, preservation_bound,
    rank_for_energy, residual_energy, LayerInfluence,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Svd,
    Gradients,
    Theory,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "svd" => Suite::Svd,
            "gradients" => Suite::Gradients,
            "theory" => Suite::Theory,
            "all" => Suite::All,
            other => return Err(format!("unknown suite `{other}` (svd, gradients, theory, all)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.suite.len() + c.name.len() + 1).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let label = format!("{}/{}", c.suite, c.name);
            out.push_str(&format!(
                "{:<w$}  {}  {}\n",
                label,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            ));
        }
        out
    }

    fn record(&mut self, suite: &str, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check {
            suite: suite.into(),
            name: name.into(),
            passed,
            detail,
        });
    }
}

fn random(rows: usize, cols: usize, rng: &mut Philox) -> Matrix {
    Matrix::random_normal(rows, cols, rng)
}

fn eckart_young(trials: usize) -> Result<(bool, String)> {
    let mut rng = Philox::derived(7, domain::TEST, 100);
    let mut worst: f64 = 0.0;
    let mut dominated = true;
    for t in 0..trials {
        let m = 4 + rng.below(40);
        let n = 4 + rng.below(40);
        let r = 1 + rng.below(m.min(n).min(8));
        let w = random(m, n, &mut rng);
        let f = truncated_svd(&w, r)?;
        let err = w.sub(&f.reconstruct())?.frobenius_norm();
        let tail = eckart_young_error(&f.full_spectrum, r);
        if tail > 0.0 {
            worst = worst.max((err - tail).abs() / tail);
        }
        for _ in 0..20 {
            let ab = matmul(&random(m, r, &mut rng), &random(r, n, &mut rng))?;
            if w.sub(&ab)?.frobenius_norm() < err {
                dominated = false;
            }
        }
        let _ = t;
    }
    Ok((worst < 1e-8 && dominated, format!("{trials} matrices, max rel error {worst:.2e}, beats random: {dominated}")))
}

fn orthonormality() -> Result<(bool, String)> {
    let mut rng = Philox::derived(7, domain::TEST, 101);
    let mut worst: f64 = 0.0;
    for &(m, n) in &[(64, 48), (17, 33), (50, 50)] {
        let f = svd(&random(m, n, &mut rng))?;
        for q in [&f.u, &f.v] {
            let g = crate::linalg::matmul_tn(q, q)?;
            worst = worst.max(g.max_abs_diff(&Matrix::identity(g.rows()))?);
        }
    }
    Ok((worst < 1e-8, format!("max |QᵀQ − I| {worst:.2e}")))
}

fn energy_identity() -> Result<(bool, String)> {
    let mut rng = Philox::derived(7, domain::TEST, 102);
    let w = random(30, 20, &mut rng);
    let s = svd(&w)?.full_spectrum;
    let e: f64 = s.iter().map(|v| v * v).sum();
    let f = w.frobenius_norm().powi(2);
    let rel = (e - f).abs() / f;
    Ok((rel < 1e-8, format!("relative gap {rel:.2e}")))
}

fn softmax_simplex() -> Result<(bool, String)> {
    let mut rng = Philox::derived(7, domain::TEST, 103);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v: Vec<f64> = (0..8).map(|_| rng.uniform(-1e6, 1e6)).collect();
        let p = softmax(&v)?;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    Ok((worst < 1e-12, format!("max |Σp − 1| {worst:.2e}")))
}

fn mlp_gradcheck() -> Result<(bool, String)> {
    let mut net = Network::mlp(&[5, 7, 6, 3], 11)?;
    let mut rng = Philox::derived(11, domain::TEST, 0);
    let x = random(4, 5, &mut rng);
    let y = random(4, 3, &mut rng);
    let obj = Objective::Mse(&y);
    let out = net.forward_train(&x)?;
    let (_, g) = obj.evaluate(&out)?;
    let analytic = net.backward(&g)?;
    let numeric = finite_difference_grad(&net, &obj, &x, 1e-5)?;
    let dev = max_relative_deviation(&analytic, &numeric, 1e-6);
    Ok((dev < 1e-4, format!("max relative deviation {dev:.2e}")))
}

fn decomposition(seeds: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = Philox::derived(seed, domain::TEST, 200);
        let gi = if seed % 2 == 0 { GateInput::Code } else { GateInput::Input };
        let mut layer = inherit_dense(&random(6, 5, &mut rng), 3, 1 + (seed as usize % 4), Combiner::ConvexExact, gi)?;
        for h in &mut layer.heads {
            h.data_mut().iter_mut().for_each(|v| *v += 0.3 * rng.normal());
        }
        if let Some(g) = &mut layer.gate {
            g.weight.data_mut().iter_mut().for_each(|v| *v = rng.normal());
            g.bias.iter_mut().for_each(|v| *v = rng.normal());
        }
        layer.bias = Some((0..5).map(|_| rng.normal()).collect());
        let x = random(7, 6, &mut rng);
        let y = random(7, 5, &mut rng);
        let rep = gradient_decomposition_check(&layer, &x, &Objective::Mse(&y), false)?;
        worst = worst.max(rep.max_deviation);
    }
    Ok((worst < 1e-8, format!("{seeds} layers, max deviation {worst:.2e}")))
}

fn inherited_conv_gradcheck() -> Result<(bool, String)> {
    let mut rng = Philox::derived(3, domain::TEST, 300);
    let teacher = Conv2DLayer::kaiming(4, 2, 3, 1, 1, (5, 5), &mut rng)?;
    let mut layer = inherit_conv_layer(&teacher, 3, 2, Combiner::ConvexExact, GateInput::Code)?;
    if let Some(g) = &mut layer.gate {
        g.weight.data_mut().iter_mut().for_each(|v| *v = rng.normal());
    }
    for h in &mut layer.heads {
        h.data_mut().iter_mut().for_each(|v| *v += 0.2 * rng.normal());
    }
    let mut net = Network::new(vec![Layer::InherConv(layer)])?;
    let x = random(2, 50, &mut rng);
    let y = random(2, 100, &mut rng);
    let obj = Objective::Mse(&y);
    let out = net.forward_train(&x)?;
    let analytic = net.backward(&obj.evaluate(&out)?.1)?;
    let numeric = finite_difference_grad(&net, &obj, &x, 1e-5)?;
    let dev = max_relative_deviation(&analytic, &numeric, 1e-6);
    Ok((dev < 1e-4, format!("max relative deviation {dev:.2e}")))
}

fn compression_arithmetic() -> Result<(bool, String)> {
    let rho = compression_ratio_paper(100, 100, 5, 3);
    let count = param_count_formula(100, 100, 5, 3, Some(GateInput::Code), false);
    let den = paper_denominator(100, 100, 5, 3);
    let ok = rho == 10000.0 / 3018.0 && count == 2018 && den == 3018 && count != den;
    Ok((ok, format!("rho_paper {rho:.6}, actual count {count}, per-head-down count {den}")))
}

fn spectral_chain(trials: usize) -> Result<(bool, String)> {
    let mut rng = Philox::derived(5, domain::TEST, 400);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let len = 1 + rng.below(30);
        let mut s: Vec<f64> = (0..len).map(|_| rng.uniform(0.0, 10.0)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        if s[0] == 0.0 {
            continue;
        }
        let eps = rng.uniform(1e-6, 0.99);
        let total: f64 = s.iter().map(|v| v * v).sum();
        let r = rank_for_energy(&s, eps)?;
        let err2 = eckart_young_error(&s, r).powi(2);
        if err2 > eps * total {
            return Ok((false, format!("bound violated: {err2} > {}", eps * total)));
        }
        worst = worst.max((err2 - residual_energy(&s, r)).abs());
    }
    Ok((worst <= 1e-12, format!("{trials} spectra, max slack mismatch {worst:.2e}")))
}

fn preservation() -> Result<(bool, String)> {
    let b = preservation_bound(&LayerInfluence::uniform(1)?, &[vec![3.0, 2.0, 1.0]], &[2])?;
    let full = preservation_bound(&LayerInfluence::uniform(2)?, &[vec![3.0, 1.0], vec![2.0]], &[2, 1])?;
    let ok = (b - 13.0 / 14.0).abs() < 1e-15 && full == 1.0;
    Ok((ok, format!("single layer {b:.6}, full rank {full}")))
}

fn init_fidelity() -> Result<(bool, String)> {
    let mut rng = Philox::derived(9, domain::TEST, 500);
    let w = random(12, 9, &mut rng);
    let layer = inherit_dense(&w, 4, 3, Combiner::ConvexExact, GateInput::Code)?;
    let x = random(50, 12, &mut rng);
    let want = matmul(&x, &truncated_svd(&w, 4)?.reconstruct())?;
    let dense = layer.forward(&x)?.max_abs_diff(&want)?;

    let kernel = Tensor4D::from_vec([6, 3, 3, 3], (0..162).map(|_| rng.normal()).collect())?;
    let teacher = Conv2DLayer::new(kernel.clone(), None, 1, 0, (8, 8))?;
    let inherited = inherit_conv_layer(&teacher, 4, 3, Combiner::ConvexExact, GateInput::Code)?;
    let k_r = Tensor4D::from_matrix(&truncated_svd(&kernel.to_matrix(), 4)?.reconstruct(), [6, 3, 3, 3])?;
    let oracle = Conv2DLayer::new(k_r, None, 1, 0, (8, 8))?;
    let imgs = random(5, 192, &mut rng);
    let conv = inherited.forward(&imgs)?.max_abs_diff(&oracle.forward(&imgs)?)?;
    Ok((dense < 1e-6 && conv < 1e-6, format!("dense {dense:.2e}, conv {conv:.2e}")))
}

fn energy_rank_proxy() -> Result<(bool, String)> {
    let row = energy_rank_approximation(&[16, 32, 32, 4], 1e-6, 1, 200, 1)?;
    let ok = row.output_mse <= 1e-4 && row.param_count_actual < row.param_count_teacher;
    Ok((
        ok,
        format!(
            "ranks {:?}, output MSE {:.2e}, params {} < {}",
            row.ranks, row.output_mse, row.param_count_actual, row.param_count_teacher
        ),
    ))
}

/// Run the requested suite(s). `checkpoint`, when given, adds a load check.
pub fn run(suite: Suite, checkpoint: Option<&Path>) -> VerifyReport {
    let mut rep = VerifyReport::default();
    if matches!(suite, Suite::Svd | Suite::All) {
        rep.record("svd", "eckart_young", eckart_young(20));
        rep.record("svd", "orthonormality", orthonormality());
        rep.record("svd", "energy_identity", energy_identity());
        rep.record("svd", "softmax_simplex", softmax_simplex());
    }
    if matches!(suite, Suite::Gradients | Suite::All) {
        rep.record("gradients", "mlp_finite_differences", mlp_gradcheck());
        rep.record("gradients", "gradient_decomposition", decomposition(20));
        rep.record("gradients", "inherited_conv_finite_differences", inherited_conv_gradcheck());
    }
    if matches!(suite, Suite::Theory | Suite::All) {
        rep.record("theory", "compression_arithmetic", compression_arithmetic());
        rep.record("theory", "spectral_energy_chain", spectral_chain(100));
        rep.record("theory", "preservation_bound", preservation());
        rep.record("theory", "init_fidelity", init_fidelity());
        rep.record("theory", "energy_rank_approximation", energy_rank_proxy());
    }
    if let Some(p) = checkpoint {
        let outcome = load_checkpoint(p).map(|net| (true, format!("{} layers, {} parameters", net.layers().len(), net.parameter_count())));
        rep.record("checkpoint", "load", outcome);
    }
    rep
}
