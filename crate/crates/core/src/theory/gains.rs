use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::inherit::{inherit_network, InheritOptions, RankPolicy};
use crate::nn::{DenseLayer, Layer, Network};
use crate::parallel::par_map;
use crate::train::{train, TrainConfig};

/// Approximation error per head count for one rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalGains {
    pub rank: usize,
    /// `(H, final eval loss)` for `H = 1..=h_max`.
    pub errors: Vec<(usize, f64)>,
    /// `E(r, H) − E(r, H+1)`.
    pub gains: Vec<f64>,
    /// Whether the gains are nonincreasing in `H`. A trend flag, not a bound.
    pub diminishing: bool,
}

/// Inherit `teacher` at rank `r` with `H = 1..=h_max` heads, fine-tune each
/// on `split` under `config`, and tabulate the final eval loss.
///
/// Only `opts.rank` and `opts.heads` are overridden; the runs are independent
/// and fan out in parallel.
pub fn head_marginal_gains(
    teacher: &DenseLayer,
    r: usize,
    h_max: usize,
    opts: &InheritOptions,
    split: &Split,
    config: &TrainConfig,
) -> Result<MarginalGains> {
    if h_max < 2 {
        return Err(Error::range("h_max", h_max, ">= 2"));
    }
    let base = Network::new(vec![Layer::Dense(teacher.clone())])?;
    let runs = par_map((1..=h_max).collect(), |h| -> Result<(usize, f64)> {
        let o = InheritOptions {
            rank: RankPolicy::Fixed(r),
            heads: h,
            ..opts.clone()
        };
        let mut net = inherit_network(&base, &o)?;
        let log = train(&mut net, split, config, None)?;
        let e = match log.final_eval_loss() {
            Some(e) => e,
            None => crate::train::evaluate(&net, &split.eval)?.0,
        };
        Ok((h, e))
    });
    let errors = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let gains: Vec<f64> = errors.windows(2).map(|w| w[0].1 - w[1].1).collect();
    let diminishing = gains.windows(2).all(|g| g[1] <= g[0]);
    Ok(MarginalGains {
        rank: r,
        errors,
        gains,
        diminishing,
    })
}
