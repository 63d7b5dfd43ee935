use serde::{Deserialize, Serialize};

use super::{batch_targets, task_loss, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{domain, Philox};

/// Minibatch gradient variance with learned vs uniform mixing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    /// Mean `‖g_b − ḡ‖²` over minibatches, learned gates.
    pub adaptive: f64,
    /// Same with every gate frozen to uniform mixing.
    pub uniform: f64,
    pub batches: usize,
}

fn batch_gradients(net: &Network, data: &Dataset, batches: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let mut net = net.clone();
    let mut out = Vec::with_capacity(batches.len());
    for idx in batches {
        let x = data.x.select_rows(idx);
        let y = net.forward_train(&x)?;
        let (_, g) = task_loss(&y, &batch_targets(&data.targets, idx))?;
        let grads = net.backward(&g)?;
        // Only parameters both configurations share.
        let mut flat = Vec::new();
        for (layer, lg) in net.layers().iter().zip(&grads.layers) {
            for (name, p) in layer.param_names().iter().zip(lg) {
                if !name.starts_with("gate.") {
                    flat.extend_from_slice(p);
                }
            }
        }
        out.push(flat);
    }
    Ok(out)
}

fn spread(grads: &[Vec<f64>]) -> f64 {
    let d = grads[0].len();
    let k = grads.len() as f64;
    let mut mean = vec![0.0; d];
    for g in grads {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / k;
        }
    }
    grads
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / k
}

/// Measure minibatch gradient spread of `net` on `data` under its learned
/// gates and under uniform mixing. Batches come from the epoch-1 shuffle of
/// `config.seed`; gate parameters are excluded from both vectors.
pub fn gating_grad_variance(net: &Network, data: &Dataset, config: &TrainConfig) -> Result<VarianceComparison> {
    config.validate()?;
    let order = Philox::derived(config.seed, domain::SHUFFLE, 1).permutation(data.len());
    let batches: Vec<Vec<usize>> = order
        .chunks(config.batch_size)
        .filter(|c| c.len() == config.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    if batches.len() < 2 {
        return Err(Error::Degenerate("need at least two full minibatches to measure variance".into()));
    }
    let adaptive = spread(&batch_gradients(net, data, &batches)?);
    let mut frozen = net.clone();
    frozen.freeze_gates_uniform();
    let uniform = spread(&batch_gradients(&frozen, data, &batches)?);
    Ok(VarianceComparison {
        adaptive,
        uniform,
        batches: batches.len(),
    })
}
