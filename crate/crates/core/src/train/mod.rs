//! Minibatch SGD with schedules, CE/MSE/distillation losses and per-epoch logs.

mod config;
mod kd;
mod log;
mod variance;

pub use config::{LossKind, Schedule, TrainConfig};
pub use kd::kd_loss;
pub use log::{EpochRecord, RunLog, CSV_HEADER};
pub use variance::{gating_grad_variance, VarianceComparison};

use std::time::Instant;

use crate::data::{Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{accuracy, cross_entropy, mse, Network};
use crate::rng::{domain, Philox};

/// `θ ← θ − η_t·g` on a flat parameter slice.
pub fn sgd_step(params: &mut [f64], grads: &[f64], t: usize, config: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("sgd_step", params.len(), grads.len()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            step: t,
            detail: format!("gradient entry {i} is {}", grads[i]),
        });
    }
    let lr = config.learning_rate(t)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Task loss and gradient for one batch of outputs.
pub fn task_loss(pred: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    match targets {
        Targets::Classes { labels, .. } => cross_entropy(pred, labels),
        Targets::Values(y) => mse(pred, y),
    }
}

/// Task loss (CE or MSE) and, for classification, accuracy on a dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, Option<f64>)> {
    if data.is_empty() {
        return Ok((0.0, None));
    }
    let out = net.forward(&data.x)?;
    let (loss, _) = task_loss(&out, &data.targets)?;
    let acc = data.labels().map(|l| accuracy(&out, l));
    Ok((loss, acc))
}

fn batch_targets(targets: &Targets, idx: &[usize]) -> Targets {
    match targets {
        Targets::Classes { labels, num_classes } => Targets::Classes {
            labels: idx.iter().map(|&i| labels[i]).collect(),
            num_classes: *num_classes,
        },
        Targets::Values(y) => Targets::Values(y.select_rows(idx)),
    }
}

fn check_loss_kind(config: &TrainConfig, data: &Dataset, teacher: Option<&Network>) -> Result<()> {
    match (config.loss, data.is_classification()) {
        (LossKind::Mse, false) | (LossKind::CrossEntropy, true) => Ok(()),
        (LossKind::CrossEntropyKd, true) if teacher.is_some() || config.lambda_kd == 0.0 => Ok(()),
        (LossKind::CrossEntropyKd, true) => Err(Error::State("distillation loss requires a teacher network".into())),
        (kind, cls) => Err(Error::State(format!(
            "loss {kind:?} does not fit a {} task",
            if cls { "classification" } else { "regression" }
        ))),
    }
}

/// Train `net` in place.
///
/// Each epoch visits the training set in a permutation drawn from
/// `(seed, epoch)`. The step counter `t` counts optimizer steps from 1.
/// `teacher` supplies logits for the distillation term.
pub fn train(net: &mut Network, split: &Split, config: &TrainConfig, teacher: Option<&Network>) -> Result<RunLog> {
    config.validate()?;
    check_loss_kind(config, &split.train, teacher)?;
    let mut log = RunLog {
        records: Vec::with_capacity(config.epochs),
        threshold: config.threshold,
        epochs_to_threshold: None,
    };
    let n = split.train.len();
    if config.epochs == 0 || n == 0 {
        return Ok(log);
    }
    let mut t = 0usize;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let order = Philox::derived(config.seed, domain::SHUFFLE, epoch as u32).permutation(n);
        let mut loss_sum = 0.0;
        let mut norms = Vec::new();
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            t += 1;
            let x = split.train.x.select_rows(idx);
            let targets = batch_targets(&split.train.targets, idx);
            let out = net.forward_train(&x)?;
            let (loss, grad) = match (&targets, config.loss) {
                (Targets::Classes { labels, .. }, LossKind::CrossEntropyKd) => match teacher {
                    Some(tn) if config.lambda_kd != 0.0 => kd_loss(&out, &tn.forward(&x)?, labels, config)?,
                    _ => {
                        let (l, g) = cross_entropy(&out, labels)?;
                        (config.lambda_ce * l, g.scale(config.lambda_ce))
                    }
                },
                _ => task_loss(&out, &targets)?,
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    step: t,
                    detail: format!(
                        "loss {loss} at epoch {epoch}, batch {b}; lr {:.6e}; output max |y| {:.3e}; last epoch train loss {}",
                        config.learning_rate(t)?,
                        out.max_abs(),
                        log.records.last().map_or("n/a".into(), |r| format!("{:.6e}", r.train_loss)),
                    ),
                });
            }
            let grads = net.backward(&grad)?;
            if !grads.is_finite() {
                return Err(Error::NonFinite {
                    step: t,
                    detail: format!("non-finite gradient at epoch {epoch}, batch {b} (loss {loss:.6e})"),
                });
            }
            norms.push(grads.norm());
            net.apply_update(&grads, config.learning_rate(t)?)?;
            loss_sum += loss * idx.len() as f64;
        }
        let (eval_loss, eval_acc) = evaluate(net, &split.eval)?;
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let var = norms.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / norms.len() as f64;
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            eval_loss,
            eval_acc,
            grad_norm_mean: mean,
            grad_norm_var: var,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if log.epochs_to_threshold.is_none() {
            if let Some(th) = config.threshold {
                if eval_loss <= th {
                    log.epochs_to_threshold = Some(epoch);
                    if config.stop_at_threshold {
                        break;
                    }
                }
            }
        }
    }
    Ok(log)
}
