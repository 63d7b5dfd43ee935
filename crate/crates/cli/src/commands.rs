use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inhernet::data::Split;
use inhernet::experiments::{insight1, insight2, insight3, ClassificationSetup, ConvergenceSetup, Insight1, Insight2, Insight3};
use inhernet::inherit::{inherit_network, RankPolicy, Variant};
use inhernet::io::{load_checkpoint_full, save_checkpoint_full, write_atomic, Checkpoint};
use inhernet::theory::{self, LayerInfluence, TheoryReport};
use inhernet::train::{evaluate, LossKind, RunLog, TrainConfig};
use inhernet::{verify as suites, Network};
use serde::Serialize;
use serde_json::json;

use crate::plot::{line_chart, Series};
use crate::{AnalyzeArgs, DistillArgs, EvalArgs, InheritArgs, InsightArgs, LogArgs, TrainCmdArgs, TrainTeacherArgs, VerifyArgs};

fn print_config(command: &str, config: &impl Serialize) -> Result<()> {
    println!("{command} config:\n{}", serde_json::to_string_pretty(config)?);
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<Checkpoint> {
    load_checkpoint_full(path).with_context(|| format!("loading {}", path.display()))
}

fn save(path: &Path, network: Network, seed: u64, config: serde_json::Value) -> Result<()> {
    ensure_parent(path)?;
    let ckpt = Checkpoint {
        network,
        seed: Some(seed),
        config,
    };
    save_checkpoint_full(&ckpt, path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn task_loss(split: &Split) -> LossKind {
    if split.train.is_classification() {
        LossKind::CrossEntropy
    } else {
        LossKind::Mse
    }
}

fn check_io(net: &Network, split: &Split, what: &str) -> Result<()> {
    if net.input_dim() != Some(split.train.input_dim()) || net.output_dim() != Some(split.train.output_dim()) {
        bail!(
            "{what} maps {:?} -> {:?} but the data has {} inputs and {} outputs",
            net.input_dim(),
            net.output_dim(),
            split.train.input_dim(),
            split.train.output_dim()
        );
    }
    Ok(())
}

fn write_log(log: &RunLog, out: &Path, args: &LogArgs, title: &str) -> Result<()> {
    let path = args.log.clone().unwrap_or_else(|| out.with_extension("csv"));
    write_file(&path, log.to_csv(true).as_bytes())?;
    println!("wrote {}", path.display());
    if args.plot {
        let curve = |f: fn(&inhernet::train::EpochRecord) -> f64| {
            log.records.iter().map(|r| (r.epoch as f64, f(r))).collect::<Vec<_>>()
        };
        let svg = line_chart(
            title,
            "epoch",
            "loss",
            &[Series::new("train", curve(|r| r.train_loss)), Series::new("eval", curve(|r| r.eval_loss))],
        );
        let svg_path = path.with_extension("svg");
        write_file(&svg_path, svg.as_bytes())?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn report_run(log: &RunLog) {
    if let Some(last) = log.records.last() {
        let acc = last.eval_acc.map(|a| format!(", eval acc {a:.4}")).unwrap_or_default();
        println!("epoch {}: train loss {:.6}, eval loss {:.6}{acc}", last.epoch, last.train_loss, last.eval_loss);
    }
    if let Some(t) = log.threshold {
        match log.epochs_to_threshold {
            Some(e) => println!("reached eval loss {t:.6} at epoch {e}"),
            None => println!("did not reach eval loss {t:.6}"),
        }
    }
}

fn run_training(net: &mut Network, split: &Split, cfg: &TrainConfig, teacher: Option<&Network>) -> Result<RunLog> {
    inhernet::train::train(net, split, cfg, teacher).context("training")
}

pub fn train_teacher(a: TrainTeacherArgs) -> Result<bool> {
    let source = a.data.resolve(None)?;
    let split = source.load()?;
    let cfg = a.train.config(task_loss(&split));
    let mut dims = vec![split.train.input_dim()];
    dims.extend(&a.hidden);
    dims.push(split.train.output_dim());
    let config = json!({ "command": "train-teacher", "data": source, "dims": dims, "train": cfg });
    print_config("train-teacher", &config)?;
    let mut net = Network::mlp(&dims, cfg.seed)?;
    let log = run_training(&mut net, &split, &cfg, None)?;
    report_run(&log);
    save(&a.out, net, cfg.seed, config)?;
    write_log(&log, &a.out, &a.log, "teacher training")?;
    Ok(true)
}

fn print_theory(report: &TheoryReport) {
    println!(
        "params: teacher {}, inherited {}; rho paper {:.4}, rho actual {:.4}; kappa {:.4e}",
        report.param_count_teacher, report.param_count_actual, report.rho_paper, report.rho_actual, report.kappa
    );
    for l in &report.per_layer_breakdown {
        println!(
            "  layer {} {} -> {} ({}x{}): rank {}, heads {}, epsilon {:.4e}, kappa {:.4e}, rho paper {:.4}, rho actual {:.4}",
            l.index, l.teacher_kind, l.inherited_kind, l.m, l.n, l.rank, l.heads, l.epsilon, l.kappa_teacher, l.rho_paper, l.rho_actual
        );
    }
    println!(
        "energy kept {:.6}, preservation lower bound {:.6}",
        report.spectral_energy_ratio, report.preservation_lower_bound
    );
    if let Some(c) = report.empirical_output_cosine {
        println!("empirical output cosine {c:.6}");
    }
}

pub fn inherit(a: InheritArgs) -> Result<bool> {
    let teacher = load(&a.teacher)?;
    let opts = a.options();
    if let RankPolicy::Energy(eps) = opts.rank {
        if !(eps > 0.0 && eps < 1.0) {
            bail!("--energy must lie in (0, 1), got {eps}");
        }
    }
    let config = json!({
        "command": "inherit",
        "teacher": a.teacher,
        "data": teacher.config.get("data"),
        "inherit": opts,
    });
    print_config("inherit", &config)?;
    let net = inherit_network(&teacher.network, &opts).with_context(|| format!("inheriting {}", a.teacher.display()))?;
    let report = theory::analyze(&teacher.network, &net, None, None)?;
    print_theory(&report);
    if let Some(path) = &a.report {
        write_file(path, report.to_json()?.as_bytes())?;
        println!("wrote {}", path.display());
    }
    save(&a.out, net, a.seed, config)?;
    Ok(true)
}

pub fn train(a: TrainCmdArgs) -> Result<bool> {
    let model = load(&a.model)?;
    let source = a.data.resolve(Some(&model.config))?;
    let split = source.load()?;
    check_io(&model.network, &split, "model")?;
    let cfg = a.train.config(task_loss(&split));
    let config = json!({ "command": "train", "model": a.model, "data": source, "train": cfg });
    print_config("train", &config)?;
    let mut net = model.network;
    let log = run_training(&mut net, &split, &cfg, None)?;
    report_run(&log);
    save(&a.out, net, cfg.seed, config)?;
    write_log(&log, &a.out, &a.log, "fine-tuning")?;
    Ok(true)
}

pub fn distill(a: DistillArgs) -> Result<bool> {
    let teacher = load(&a.teacher)?;
    let student = load(&a.student)?;
    let source = a.data.resolve(Some(&student.config)).or_else(|_| a.data.resolve(Some(&teacher.config)))?;
    let split = source.load()?;
    if !split.train.is_classification() {
        bail!("distillation needs a classification task");
    }
    check_io(&student.network, &split, "student")?;
    if teacher.network.output_dim() != student.network.output_dim() {
        bail!(
            "class count mismatch: teacher has {:?} outputs, student {:?}",
            teacher.network.output_dim(),
            student.network.output_dim()
        );
    }
    let cfg = TrainConfig {
        lambda_kd: a.lambda_kd,
        lambda_ce: a.lambda_ce,
        temperature: a.tau,
        ..a.train.config(LossKind::CrossEntropyKd)
    };
    let config = json!({
        "command": "distill",
        "teacher": a.teacher,
        "student": a.student,
        "data": source,
        "train": cfg,
    });
    print_config("distill", &config)?;
    let mut net = student.network;
    let log = run_training(&mut net, &split, &cfg, Some(&teacher.network))?;
    report_run(&log);
    save(&a.out, net, cfg.seed, config)?;
    write_log(&log, &a.out, &a.log, "distillation")?;
    Ok(true)
}

#[derive(Serialize)]
struct EvalReport {
    model: PathBuf,
    samples: usize,
    loss: f64,
    accuracy: Option<f64>,
    parameters: usize,
}

pub fn eval(a: EvalArgs) -> Result<bool> {
    let model = load(&a.model)?;
    let source = a.data.resolve(Some(&model.config))?;
    print_config("eval", &json!({ "model": a.model, "data": source }))?;
    let split = source.load()?;
    check_io(&model.network, &split, "model")?;
    let (loss, accuracy) = evaluate(&model.network, &split.eval)?;
    let report = EvalReport {
        model: a.model,
        samples: split.eval.len(),
        loss,
        accuracy,
        parameters: model.network.parameter_count(),
    };
    let acc = accuracy.map(|v| format!(", accuracy {v:.4}")).unwrap_or_default();
    println!("eval loss {loss:.6}{acc} on {} samples", report.samples);
    if let Some(path) = &a.out {
        write_file(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

pub fn analyze(a: AnalyzeArgs) -> Result<bool> {
    let teacher = load(&a.teacher)?;
    let model = load(&a.model)?;
    let source = a.data.resolve(Some(&model.config)).ok();
    print_config(
        "analyze",
        &json!({ "teacher": a.teacher, "model": a.model, "alpha": a.alpha, "probe": source }),
    )?;
    let alpha = if a.alpha.is_empty() { None } else { Some(LayerInfluence::new(a.alpha.clone())?) };
    let probe = match &source {
        Some(s) => Some(s.load()?.eval.x),
        None => None,
    };
    let report = theory::analyze(&teacher.network, &model.network, alpha.as_ref(), probe.as_ref())?;
    print_theory(&report);
    if let Some(path) = &a.out {
        write_file(path, report.to_json()?.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

pub fn verify(a: VerifyArgs) -> Result<bool> {
    print_config("verify", &json!({ "suite": a.suite, "checkpoint": a.checkpoint }))?;
    let report = suites::run(a.suite, a.checkpoint.as_deref());
    print!("{}", report.table());
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        return Ok(true);
    }
    let failed: Vec<String> = report.failures().map(|c| format!("{}/{}", c.suite, c.name)).collect();
    eprintln!("failed checks: {}", failed.join(", "));
    Ok(false)
}

fn mean_by<T>(rows: &[T], keys: &[usize], key: impl Fn(&T) -> Option<usize>, value: impl Fn(&T) -> f64) -> Vec<(f64, f64)> {
    keys.iter()
        .map(|&k| {
            let v: Vec<f64> = rows.iter().filter(|r| key(r) == Some(k)).map(&value).collect();
            (k as f64, v.iter().sum::<f64>() / v.len().max(1) as f64)
        })
        .collect()
}

fn insight1_chart(r: &Insight1) -> String {
    let ce = mean_by(&r.rows, &r.ranks, |x| Some(x.rank), |x| x.acc_ce);
    let kd = mean_by(&r.rows, &r.ranks, |x| Some(x.rank), |x| x.acc_kd);
    line_chart(
        &format!("distillation vs rank (H={})", r.heads),
        "rank",
        "mean eval accuracy",
        &[Series::new("CE", ce), Series::new("CE+KD", kd)],
    )
}

fn insight2_chart(r: &Insight2) -> String {
    let by_rank = mean_by(&r.rows, &r.ranks, |x| (x.heads == r.fixed_heads).then_some(x.rank), |x| x.acc);
    let by_heads = mean_by(&r.rows, &r.head_counts, |x| (x.rank == r.fixed_rank).then_some(x.heads), |x| x.acc);
    line_chart(
        "accuracy over rank and heads",
        "rank or heads",
        "mean eval accuracy",
        &[
            Series::new(format!("rank sweep, H={}", r.fixed_heads), by_rank),
            Series::new(format!("head sweep, r={}", r.fixed_rank), by_heads),
        ],
    )
}

fn insight3_chart(r: &Insight3) -> String {
    let censored = (r.epoch_budget + 1) as f64;
    let points = |v: Variant| {
        r.rows
            .iter()
            .filter(|x| x.variant == v)
            .map(|x| (x.seed as f64, x.epochs_to_threshold.map_or(censored, |e| e as f64)))
            .collect()
    };
    line_chart(
        "epochs to threshold",
        "seed",
        "epochs",
        &[Series::new("svd init", points(Variant::Standard)), Series::new("no-svd", points(Variant::NoSvd))],
    )
}

pub fn insight(a: InsightArgs) -> Result<bool> {
    let seeds: Vec<u64> = (1..=a.seeds).collect();
    if seeds.is_empty() {
        bail!("--seeds must be at least 1");
    }
    let (csv, summary, svg) = match a.which {
        1 => {
            let setup = ClassificationSetup::default();
            let ranks = [2, 4, 8, 16];
            print_config("insight 1", &json!({ "setup": setup, "ranks": ranks, "heads": 3, "seeds": seeds }))?;
            let r = insight1(&setup, &ranks, 3, &seeds)?;
            (r.to_csv(), r.summary(), insight1_chart(&r))
        }
        2 => {
            let setup = ClassificationSetup::head_sweep();
            let (ranks, heads) = ([2, 4, 8, 16], [1, 2, 3, 4]);
            print_config(
                "insight 2",
                &json!({ "setup": setup, "ranks": ranks, "fixed_heads": 3, "head_counts": heads, "fixed_rank": 4, "seeds": seeds }),
            )?;
            let r = insight2(&setup, &ranks, 3, &heads, 4, &seeds)?;
            (r.to_csv(), r.summary(), insight2_chart(&r))
        }
        _ => {
            let setup = ConvergenceSetup::default();
            print_config("insight 3", &json!({ "setup": setup, "seeds": seeds }))?;
            let r = insight3(&setup, &seeds)?;
            (r.to_csv(), r.summary(), insight3_chart(&r))
        }
    };
    let base = a.out.join(format!("insight{}", a.which));
    for (ext, body) in [("csv", &csv), ("txt", &format!("{summary}\n"))] {
        let path = base.with_extension(ext);
        write_file(&path, body.as_bytes())?;
        println!("wrote {}", path.display());
    }
    if a.plot {
        let path = base.with_extension("svg");
        write_file(&path, svg.as_bytes())?;
        println!("wrote {}", path.display());
    }
    println!("{summary}");
    Ok(true)
}
