//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use inhernet::experiments::{energy_rank_approximation, insight1, insight2, insight3, ClassificationSetup, ConvergenceSetup};
use inhernet::inherit::{
    gradient_decomposition_check, inherit_conv_layer, inherit_dense, inherit_network, Combiner, GateInput, InheritOptions,
    RankPolicy, Variant,
};
use inhernet::io::{gen_synthetic, Checkpoint, SyntheticTask, TaskKind};
use inhernet::linalg::{matmul, truncated_svd, Matrix, Tensor4D};
use inhernet::nn::{finite_difference_grad, max_relative_deviation, Conv2DLayer, Layer, Network, Objective};
use inhernet::rng::{domain, Philox};
use inhernet::theory::{
    compression_ratio_paper, eckart_young_error, paper_denominator, param_count_actual, param_count_formula, rank_for_energy,
    residual_energy,
};
use inhernet::train::{train, LossKind, Schedule, TrainConfig};
use inhernet::Result;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn rng(idx: u32) -> Philox {
    Philox::derived(2024, domain::TEST, idx)
}

fn normal(rows: usize, cols: usize, rng: &mut Philox) -> Matrix {
    Matrix::random_normal(rows, cols, rng)
}

fn eckart_young() -> Result<(bool, String)> {
    let mut g = rng(1);
    let (mut worst, mut beaten) = (0.0f64, 0);
    for _ in 0..50 {
        let (m, n) = (2 + g.below(63), 2 + g.below(95));
        let r = 1 + g.below(8.min(m.min(n)));
        let w = normal(m, n, &mut g);
        let f = truncated_svd(&w, r)?;
        let err = w.sub(&f.reconstruct())?.frobenius_norm();
        let tail = eckart_young_error(&f.full_spectrum, r);
        if tail > 0.0 {
            worst = worst.max((err - tail).abs() / tail);
        }
        for _ in 0..100 {
            let ab = matmul(&normal(m, r, &mut g), &normal(r, n, &mut g))?;
            if w.sub(&ab)?.frobenius_norm() <= err {
                beaten += 1;
            }
        }
    }
    Ok((worst < 1e-8 && beaten == 0, format!("max rel error {worst:.2e}, random factorizations at or below: {beaten}")))
}

fn init_fidelity() -> Result<(bool, String)> {
    let mut g = rng(2);
    let x = normal(50, 12, &mut g);
    let w = normal(12, 9, &mut g);
    let layer = inherit_dense(&w, 4, 3, Combiner::ConvexExact, GateInput::Code)?;
    let dense = layer.forward(&x)?.max_abs_diff(&matmul(&x, &truncated_svd(&w, 4)?.reconstruct())?)?;
    let exact_w = matmul(&normal(12, 4, &mut g), &normal(4, 9, &mut g))?;
    let layer = inherit_dense(&exact_w, 4, 3, Combiner::ConvexExact, GateInput::Input)?;
    let dense_exact = layer.forward(&x)?.max_abs_diff(&matmul(&x, &exact_w)?)?;

    let imgs = normal(50, 3 * 8 * 8, &mut g);
    let conv_err = |kernel: Tensor4D, want: Tensor4D| -> Result<f64> {
        let teacher = Conv2DLayer::new(kernel, None, 1, 1, (8, 8))?;
        let inherited = inherit_conv_layer(&teacher, 4, 3, Combiner::ConvexExact, GateInput::Code)?;
        let oracle = Conv2DLayer::new(want, None, 1, 1, (8, 8))?;
        inherited.forward(&imgs)?.max_abs_diff(&oracle.forward(&imgs)?)
    };
    let dims = [6, 3, 3, 3];
    let k = normal(6, 27, &mut g);
    let conv = conv_err(
        Tensor4D::from_matrix(&k, dims)?,
        Tensor4D::from_matrix(&truncated_svd(&k, 4)?.reconstruct(), dims)?,
    )?;
    let k_exact = Tensor4D::from_matrix(&matmul(&normal(6, 4, &mut g), &normal(4, 27, &mut g))?, dims)?;
    let conv_exact = conv_err(k_exact.clone(), k_exact)?;
    let ok = dense < 1e-6 && conv < 1e-6 && dense_exact < 1e-10 && conv_exact < 1e-10;
    Ok((ok, format!("dense {dense:.1e}, conv {conv:.1e}, exact-rank dense {dense_exact:.1e}, conv {conv_exact:.1e}")))
}

fn decomposition() -> Result<(bool, String)> {
    let (mut assembly, mut fd) = (0.0f64, 0.0f64);
    for k in 0..20u32 {
        let mut g = rng(300 + k);
        let (m, n) = (3 + g.below(6), 2 + g.below(6));
        let r = 1 + g.below(m.min(n));
        let h = 1 + g.below(4);
        let gi = if k % 2 == 0 { GateInput::Code } else { GateInput::Input };
        let mode = if k % 3 == 0 { Combiner::PaperLiteral } else { Combiner::ConvexExact };
        let mut layer = inherit_dense(&normal(m, n, &mut g), r, h, mode, gi)?;
        for head in &mut layer.heads {
            head.data_mut().iter_mut().for_each(|v| *v += 0.3 * g.normal());
        }
        if let Some(gate) = &mut layer.gate {
            gate.weight.data_mut().iter_mut().for_each(|v| *v = g.normal());
            gate.bias.iter_mut().for_each(|v| *v = 0.5 * g.normal());
        }
        if k % 4 == 1 {
            layer.head_bias = Some((0..h).map(|_| (0..n).map(|_| g.normal()).collect()).collect());
        }
        layer.bias = Some((0..n).map(|_| g.normal()).collect());
        let x = normal(6, m, &mut g);
        let y = normal(6, n, &mut g);
        let obj = Objective::Mse(&y);
        assembly = assembly.max(gradient_decomposition_check(&layer, &x, &obj, false)?.max_deviation);

        let mut net = Network::new(vec![Layer::Inher(layer)])?;
        let out = net.forward_train(&x)?;
        let analytic = net.backward(&obj.evaluate(&out)?.1)?;
        let numeric = finite_difference_grad(&net, &obj, &x, 1e-5)?;
        fd = fd.max(max_relative_deviation(&analytic, &numeric, 1e-6));
    }
    Ok((assembly < 1e-8 && fd < 1e-4, format!("assembly {assembly:.1e}, finite differences {fd:.1e} relative")))
}

fn compression() -> Result<(bool, String)> {
    let rho = compression_ratio_paper(100, 100, 5, 3);
    let count = param_count_formula(100, 100, 5, 3, Some(GateInput::Code), false);
    let layer = inherit_dense(&Matrix::from_fn(100, 100, |i, j| ((i * 7 + j * 3) % 11) as f64), 5, 3, Combiner::ConvexExact, GateInput::Code)?;
    let actual = param_count_actual(&layer);
    let per_head = paper_denominator(100, 100, 5, 3);
    let ok = rho == 10000.0 / 3018.0 && count == 2018 && actual == 2018 && per_head != actual;
    Ok((ok, format!("ratio {rho:.6}, shared-down count {actual}, per-head-down count {per_head}")))
}

fn spectral_chain() -> Result<(bool, String)> {
    let mut g = rng(5);
    let (mut slack, mut violated) = (0.0f64, 0);
    for _ in 0..100 {
        let mut s: Vec<f64> = (0..1 + g.below(40)).map(|_| g.uniform(0.0, 10.0)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let eps = g.uniform(1e-6, 0.99);
        let total: f64 = s.iter().map(|v| v * v).sum();
        let r = rank_for_energy(&s, eps)?;
        let err2 = eckart_young_error(&s, r).powi(2);
        if err2 > eps * total {
            violated += 1;
        }
        slack = slack.max((err2 - residual_energy(&s, r)).abs());
    }
    Ok((violated == 0 && slack <= 1e-12, format!("bound violations {violated}, slack mismatch {slack:.1e}")))
}

fn insight_3() -> Result<(bool, String)> {
    let r = insight3(&ConvergenceSetup::default(), &SEEDS)?;
    Ok((r.svd_faster(), r.summary().trim().replace('\n', "; ")))
}

fn insight_1() -> Result<(bool, String)> {
    let r = insight1(&ClassificationSetup::default(), &[2, 4, 8, 16], 3, &SEEDS)?;
    Ok((r.kd_helps_smallest() && r.kd_not_helping_largest(), r.summary().trim().replace('\n', "; ")))
}

fn insight_2() -> Result<(bool, String)> {
    let r = insight2(&ClassificationSetup::head_sweep(), &[2, 4, 8, 16], 3, &[1, 2, 3, 4], 4, &SEEDS)?;
    let ok = r.rank_range() > r.head_range() && r.more_heads_not_worse(1, 3);
    Ok((ok, r.summary().trim().replace('\n', "; ")))
}

fn proxy() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 1..=3 {
        let row = energy_rank_approximation(&[32, 64, 64, 8], 1e-6, 1, 500, seed)?;
        ok &= row.output_mse <= 1e-4 && row.param_count_actual < row.param_count_teacher;
        parts.push(format!(
            "ranks {:?} mse {:.1e} params {}/{}",
            row.ranks, row.output_mse, row.param_count_actual, row.param_count_teacher
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn determinism() -> Result<(bool, String)> {
    let split = gen_synthetic(&SyntheticTask {
        kind: TaskKind::Classification { separation: 1.0 },
        seed: 3,
        samples: 300,
        input_dim: 8,
        output_dim: 4,
    })?;
    let teacher = Network::mlp(&[8, 16, 4], 3)?;
    let config = TrainConfig {
        base_lr: 0.05,
        epochs: 4,
        seed: 9,
        loss: LossKind::CrossEntropyKd,
        ..TrainConfig::default()
    };
    let run = || -> Result<String> {
        let mut net = inherit_network(&teacher, &InheritOptions { rank: RankPolicy::Fixed(3), gate_init_std: 0.3, ..Default::default() })?;
        Ok(train(&mut net, &split, &config, Some(&teacher))?.to_csv(false))
    };
    let logs_equal = run()? == run()?;

    let mut bad = Vec::new();
    for variant in [Variant::Standard, Variant::NoSvd, Variant::NoGate, Variant::Symmetric, Variant::Inverse] {
        let opts = InheritOptions { rank: RankPolicy::Fixed(3), variant, seed: 4, gate_init_std: 0.2, ..Default::default() };
        let mut net = inherit_network(&teacher, &opts)?;
        // Train a little so the parameters are not just the construction.
        train(&mut net, &split, &TrainConfig { epochs: 1, schedule: Schedule::Constant, ..config.clone() }, Some(&teacher))?;
        if !round_trip(net)? {
            bad.push(format!("{variant:?}"));
        }
    }
    let mut g = rng(10);
    let conv = Network::new(vec![Layer::Conv2d(Conv2DLayer::kaiming(4, 2, 3, 2, 1, (6, 6), &mut g)?), Layer::Relu])?;
    for opts in [InheritOptions { rank: RankPolicy::Fixed(2), gate_init_std: 0.5, ..Default::default() }, InheritOptions { rank: RankPolicy::Fixed(2), variant: Variant::NoGate, ..Default::default() }] {
        if !round_trip(inherit_network(&conv, &opts)?)? {
            bad.push(format!("conv {:?}", opts.variant));
        }
    }
    if !round_trip(teacher.clone())? {
        bad.push("teacher".into());
    }
    Ok((logs_equal && bad.is_empty(), format!("run logs identical: {logs_equal}, round-trip failures: {bad:?}")))
}

fn round_trip(network: Network) -> Result<bool> {
    let ckpt = Checkpoint { network, seed: Some(7), config: serde_json::json!({ "note": "acceptance" }) };
    let bytes = ckpt.to_bytes()?;
    let back = Checkpoint::from_bytes(&bytes)?;
    let bits = |n: &Network| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    Ok(bits(&back.network) == bits(&ckpt.network) && back == ckpt && back.to_bytes()? == bytes)
}

type Criterion = (&'static str, fn() -> Result<(bool, String)>, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 eckart-young optimality", eckart_young, Duration::from_secs(30)),
        ("2 initialization fidelity", init_fidelity, Duration::from_secs(10)),
        ("3 gradient decomposition", decomposition, Duration::from_secs(60)),
        ("4 compression arithmetic", compression, Duration::MAX),
        ("5 spectral-energy chain", spectral_chain, Duration::MAX),
        ("6 faster convergence from svd init", insight_3, Duration::from_secs(600)),
        ("7 distillation regime flip", insight_1, Duration::from_secs(900)),
        ("8 rank dominates head count", insight_2, Duration::from_secs(900)),
        ("9 energy-rank constructive proxy", proxy, Duration::from_secs(120)),
        ("10 determinism and persistence", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let took = start.elapsed();
        let ok = ok && took <= budget;
        failed += usize::from(!ok);
        println!("{} {name} ({:.1}s): {detail}", if ok { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
