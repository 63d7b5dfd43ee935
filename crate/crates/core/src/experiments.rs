//! Seed-swept experiments on synthetic tasks: rank and distillation, rank and
//! head count, convergence of SVD vs random init, and the constructive
//! approximation check on spectrally decaying teachers.
//!
//! Seeds run independently and fan out through [`par_map`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::Result;
use crate::inherit::{inherit_network, Combiner, GateInput, InheritOptions, RankPolicy, Variant};
use crate::io::{gen_synthetic, SyntheticTask, TaskKind};
use crate::linalg::{dot, Matrix};
use crate::nn::{mse, DenseLayer, Layer, Network};
use crate::parallel::par_map;
use crate::rng::{domain, Philox};
use crate::theory::rank_for_energy;
use crate::train::{evaluate, train, LossKind, RunLog, Schedule, TrainConfig};

/// Shared task and teacher settings for the classification experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSetup {
    pub samples: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub teacher_hidden: Vec<usize>,
    pub teacher: TrainConfig,
    pub student: TrainConfig,
    pub gate_input: GateInput,
    pub gate_init_std: f64,
}

impl Default for ClassificationSetup {
    fn default() -> Self {
        Self {
            samples: 1500,
            input_dim: 16,
            classes: 10,
            separation: 0.55,
            teacher_hidden: vec![16, 16],
            teacher: TrainConfig {
                base_lr: 0.2,
                schedule: Schedule::Constant,
                epochs: 10,
                batch_size: 32,
                ..TrainConfig::default()
            },
            student: TrainConfig {
                base_lr: 0.01,
                schedule: Schedule::Constant,
                epochs: 20,
                batch_size: 32,
                ..TrainConfig::default()
            },
            gate_input: GateInput::Code,
            gate_init_std: 0.5,
        }
    }
}

impl ClassificationSetup {
    /// Setup for the head-count sweep: the gate reads the input and students
    /// train to convergence. With code gating or short budgets the extra heads
    /// mostly dilute the per-head step (each head sees roughly `1/H` of the
    /// gradient), which hides any capacity gain.
    pub fn head_sweep() -> Self {
        let base = Self::default();
        Self {
            student: TrainConfig {
                base_lr: 0.03,
                epochs: 60,
                ..base.student.clone()
            },
            gate_input: GateInput::Input,
            ..base
        }
    }

    fn task(&self, seed: u64) -> SyntheticTask {
        SyntheticTask {
            kind: TaskKind::Classification {
                separation: self.separation,
            },
            seed,
            samples: self.samples,
            input_dim: self.input_dim,
            output_dim: self.classes,
        }
    }

    /// Generate the task for `seed` and train its teacher.
    pub fn teacher(&self, seed: u64) -> Result<(Split, Network, RunLog)> {
        let split = gen_synthetic(&self.task(seed))?;
        let mut dims = vec![self.input_dim];
        dims.extend(&self.teacher_hidden);
        dims.push(self.classes);
        let mut net = Network::mlp(&dims, seed)?;
        let cfg = TrainConfig {
            seed,
            loss: LossKind::CrossEntropy,
            ..self.teacher.clone()
        };
        let log = train(&mut net, &split, &cfg, None)?;
        Ok((split, net, log))
    }

    fn student(&self, teacher: &Network, rank: usize, heads: usize, seed: u64) -> Result<Network> {
        inherit_network(
            teacher,
            &InheritOptions {
                rank: RankPolicy::Clamped(rank),
                heads,
                combiner: Combiner::ConvexExact,
                gate_input: self.gate_input,
                variant: Variant::Standard,
                seed,
                gate_init_std: self.gate_init_std,
            },
        )
    }

    /// Fine-tune an inherited student; returns final eval accuracy.
    fn finetune(&self, teacher: &Network, split: &Split, rank: usize, heads: usize, seed: u64, kd: bool) -> Result<f64> {
        let mut net = self.student(teacher, rank, heads, seed)?;
        let cfg = TrainConfig {
            seed,
            loss: if kd { LossKind::CrossEntropyKd } else { LossKind::CrossEntropy },
            ..self.student.clone()
        };
        train(&mut net, split, &cfg, kd.then_some(teacher))?;
        Ok(evaluate(&net, &split.eval)?.1.unwrap_or(0.0))
    }
}

fn majority(flags: impl IntoIterator<Item = bool>) -> bool {
    let (mut yes, mut total) = (0, 0);
    for f in flags {
        total += 1;
        yes += f as usize;
    }
    2 * yes > total
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn range(v: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = v
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi - lo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdRow {
    pub seed: u64,
    pub rank: usize,
    pub acc_ce: f64,
    pub acc_kd: f64,
    pub teacher_acc: f64,
}

/// Accuracy with and without distillation across a rank sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight1 {
    pub ranks: Vec<usize>,
    pub heads: usize,
    pub rows: Vec<KdRow>,
}

impl Insight1 {
    fn deltas_at(&self, rank: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter(move |r| r.rank == rank).map(|r| r.acc_kd - r.acc_ce)
    }

    /// Seed-majority: distillation raises accuracy at the smallest rank.
    pub fn kd_helps_smallest(&self) -> bool {
        majority(self.deltas_at(self.ranks[0]).map(|d| d > 0.0))
    }

    /// Seed-majority: distillation does not raise accuracy at the largest rank.
    pub fn kd_not_helping_largest(&self) -> bool {
        majority(self.deltas_at(*self.ranks.last().expect("ranks")).map(|d| d <= 0.0))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,rank,heads,acc_ce,acc_kd,kd_delta,teacher_acc\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.seed, r.rank, self.heads, r.acc_ce, r.acc_kd, r.acc_kd - r.acc_ce, r.teacher_acc
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mean = |rank| {
            let d: Vec<f64> = self.deltas_at(rank).collect();
            d.iter().sum::<f64>() / d.len().max(1) as f64
        };
        let per_rank: Vec<String> = self.ranks.iter().map(|&r| format!("r={r}: {:+.4}", mean(r))).collect();
        format!(
            "mean KD delta {}; KD helps at smallest rank: {}; KD does not help at largest rank: {}",
            per_rank.join(", "),
            self.kd_helps_smallest(),
            self.kd_not_helping_largest()
        )
    }
}

pub fn insight1(setup: &ClassificationSetup, ranks: &[usize], heads: usize, seeds: &[u64]) -> Result<Insight1> {
    let per_seed = par_map(seeds.to_vec(), |seed| -> Result<Vec<KdRow>> {
        let (split, teacher, _) = setup.teacher(seed)?;
        let teacher_acc = evaluate(&teacher, &split.eval)?.1.unwrap_or(0.0);
        ranks
            .iter()
            .map(|&rank| {
                Ok(KdRow {
                    seed,
                    rank,
                    acc_ce: setup.finetune(&teacher, &split, rank, heads, seed, false)?,
                    acc_kd: setup.finetune(&teacher, &split, rank, heads, seed, true)?,
                    teacher_acc,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(Insight1 {
        ranks: ranks.to_vec(),
        heads,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub seed: u64,
    pub rank: usize,
    pub heads: usize,
    pub acc: f64,
}

/// Rank sweep at fixed heads plus head sweep at fixed rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight2 {
    pub ranks: Vec<usize>,
    pub fixed_heads: usize,
    pub head_counts: Vec<usize>,
    pub fixed_rank: usize,
    pub rows: Vec<GridRow>,
}

impl Insight2 {
    fn mean_acc(&self, rank: usize, heads: usize) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.rank == rank && r.heads == heads)
            .map(|r| r.acc)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// Range of seed-mean accuracy over ranks at the fixed head count.
    pub fn rank_range(&self) -> f64 {
        range(self.ranks.iter().map(|&r| self.mean_acc(r, self.fixed_heads)))
    }

    /// Range of seed-mean accuracy over head counts at the fixed rank.
    pub fn head_range(&self) -> f64 {
        range(self.head_counts.iter().map(|&h| self.mean_acc(self.fixed_rank, h)))
    }

    /// Seed-majority of `acc(H = hi) ≥ acc(H = lo)` at the fixed rank.
    pub fn more_heads_not_worse(&self, lo: usize, hi: usize) -> bool {
        let at = |seed: u64, h: usize| {
            self.rows
                .iter()
                .find(|r| r.seed == seed && r.rank == self.fixed_rank && r.heads == h)
                .map(|r| r.acc)
        };
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        majority(seeds.iter().filter_map(|&s| Some(at(s, hi)? >= at(s, lo)?)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,rank,heads,acc\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.seed, r.rank, r.heads, r.acc);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "accuracy range over rank (H={}): {:.4}; over heads (r={}): {:.4}; H=3 >= H=1 by seed majority: {}",
            self.fixed_heads,
            self.rank_range(),
            self.fixed_rank,
            self.head_range(),
            self.more_heads_not_worse(1, 3)
        )
    }
}

pub fn insight2(
    setup: &ClassificationSetup,
    ranks: &[usize],
    fixed_heads: usize,
    head_counts: &[usize],
    fixed_rank: usize,
    seeds: &[u64],
) -> Result<Insight2> {
    let mut cells: Vec<(usize, usize)> = ranks.iter().map(|&r| (r, fixed_heads)).collect();
    for &h in head_counts {
        if !cells.contains(&(fixed_rank, h)) {
            cells.push((fixed_rank, h));
        }
    }
    let per_seed = par_map(seeds.to_vec(), |seed| -> Result<Vec<GridRow>> {
        let (split, teacher, _) = setup.teacher(seed)?;
        cells
            .iter()
            .map(|&(rank, heads)| {
                Ok(GridRow {
                    seed,
                    rank,
                    heads,
                    acc: setup.finetune(&teacher, &split, rank, heads, seed, false)?,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(Insight2 {
        ranks: ranks.to_vec(),
        fixed_heads,
        head_counts: head_counts.to_vec(),
        fixed_rank,
        rows,
    })
}

/// Regression task and schedule for the convergence comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSetup {
    pub samples: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub truth_hidden: Vec<usize>,
    pub noise: f64,
    pub teacher_hidden: Vec<usize>,
    pub teacher: TrainConfig,
    pub student: TrainConfig,
    pub rank: usize,
    pub heads: usize,
    /// Threshold as a multiple of the teacher's eval loss.
    pub threshold_factor: f64,
}

impl Default for ConvergenceSetup {
    fn default() -> Self {
        Self {
            samples: 4000,
            input_dim: 16,
            output_dim: 4,
            truth_hidden: vec![32, 32],
            noise: 0.1,
            teacher_hidden: vec![64, 64],
            teacher: TrainConfig {
                base_lr: 0.05,
                schedule: Schedule::Constant,
                epochs: 60,
                batch_size: 32,
                loss: LossKind::Mse,
                ..TrainConfig::default()
            },
            student: TrainConfig {
                base_lr: 0.05,
                schedule: Schedule::Constant,
                epochs: 60,
                batch_size: 32,
                loss: LossKind::Mse,
                stop_at_threshold: true,
                ..TrainConfig::default()
            },
            rank: 32,
            heads: 3,
            threshold_factor: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub variant: Variant,
    pub teacher_eval_loss: f64,
    pub threshold: f64,
    /// `None` when the threshold was never reached within the epoch budget.
    pub epochs_to_threshold: Option<usize>,
    pub final_eval_loss: f64,
}

/// Epochs to reach near-teacher loss, SVD init vs random init.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight3 {
    pub epoch_budget: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl Insight3 {
    /// Median epochs to threshold; runs that never reach it count as
    /// `epoch_budget + 1`.
    pub fn median_epochs(&self, variant: Variant) -> f64 {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.epochs_to_threshold.unwrap_or(self.epoch_budget + 1) as f64)
            .collect();
        median(&mut v)
    }

    pub fn svd_faster(&self) -> bool {
        self.median_epochs(Variant::Standard) < self.median_epochs(Variant::NoSvd)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,variant,teacher_eval_loss,threshold,epochs_to_threshold,final_eval_loss\n");
        for r in &self.rows {
            let e = r.epochs_to_threshold.map(|e| e.to_string()).unwrap_or_default();
            let v = match r.variant {
                Variant::Standard => "svd",
                Variant::NoSvd => "no-svd",
                _ => "other",
            };
            let _ = writeln!(s, "{},{},{},{},{},{}", r.seed, v, r.teacher_eval_loss, r.threshold, e, r.final_eval_loss);
        }
        s
    }

    pub fn summary(&self) -> String {
        let (a, b) = (self.median_epochs(Variant::Standard), self.median_epochs(Variant::NoSvd));
        format!(
            "median epochs to threshold: svd init {a}, no-svd {b} (unreached counted as {}); svd init {} faster",
            self.epoch_budget + 1,
            if a < b { "is" } else { "is not" }
        )
    }
}

pub fn insight3(setup: &ConvergenceSetup, seeds: &[u64]) -> Result<Insight3> {
    let per_seed = par_map(seeds.to_vec(), |seed| -> Result<Vec<ConvergenceRow>> {
        let task = SyntheticTask {
            kind: TaskKind::TeacherMimic {
                hidden: setup.truth_hidden.clone(),
                noise: setup.noise,
            },
            seed,
            samples: setup.samples,
            input_dim: setup.input_dim,
            output_dim: setup.output_dim,
        };
        let split = gen_synthetic(&task)?;
        let mut dims = vec![setup.input_dim];
        dims.extend(&setup.teacher_hidden);
        dims.push(setup.output_dim);
        let mut teacher = Network::mlp(&dims, seed)?;
        train(&mut teacher, &split, &TrainConfig { seed, ..setup.teacher.clone() }, None)?;
        let teacher_loss = evaluate(&teacher, &split.eval)?.0;
        let threshold = setup.threshold_factor * teacher_loss;
        [Variant::Standard, Variant::NoSvd]
            .into_iter()
            .map(|variant| {
                let opts = InheritOptions {
                    rank: RankPolicy::Clamped(setup.rank),
                    heads: setup.heads,
                    variant,
                    seed,
                    ..InheritOptions::default()
                };
                let mut net = inherit_network(&teacher, &opts)?;
                let cfg = TrainConfig {
                    seed,
                    threshold: Some(threshold),
                    ..setup.student.clone()
                };
                let log = train(&mut net, &split, &cfg, None)?;
                Ok(ConvergenceRow {
                    seed,
                    variant,
                    teacher_eval_loss: teacher_loss,
                    threshold,
                    epochs_to_threshold: log.epochs_to_threshold,
                    final_eval_loss: evaluate(&net, &split.eval)?.0,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(Insight3 {
        epoch_budget: setup.student.epochs,
        rows,
    })
}

/// Matrix with orthonormal columns from Gram-Schmidt on a Gaussian draw.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut Philox) -> Matrix {
    let mut q = Matrix::from_fn(cols, rows, |_, _| rng.normal());
    for k in 0..cols {
        for _ in 0..2 {
            for j in 0..k {
                let p = dot(q.row(k), q.row(j));
                let qj = q.row(j).to_vec();
                for (a, b) in q.row_mut(k).iter_mut().zip(&qj) {
                    *a -= p * b;
                }
            }
        }
        let norm = dot(q.row(k), q.row(k)).sqrt();
        q.row_mut(k).iter_mut().for_each(|v| *v /= norm);
    }
    q.transpose()
}

/// ReLU MLP whose weights are `Q₁·diag(σ)·Q₂ᵀ` with `σ_i = scale·decay^i`.
pub fn spectral_teacher(dims: &[usize], scale: f64, decay: f64, seed: u64) -> Result<Network> {
    let mut rng = Philox::derived(seed, domain::TEST, 0);
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        if i > 0 {
            layers.push(Layer::Relu);
        }
        let k = w[0].min(w[1]);
        let left = random_orthonormal(w[0], k, &mut rng);
        let right = random_orthonormal(w[1], k, &mut rng);
        let sigma: Vec<f64> = (0..k).map(|j| scale * decay.powi(j as i32)).collect();
        let weight = Matrix::from_fn(w[0], w[1], |a, b| (0..k).map(|j| left.get(a, j) * sigma[j] * right.get(b, j)).sum());
        let bias = (0..w[1]).map(|_| 0.1 * rng.normal()).collect();
        layers.push(Layer::Dense(DenseLayer::new(weight, Some(bias))?));
    }
    Network::new(layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationRow {
    pub seed: u64,
    pub ranks: Vec<usize>,
    pub output_mse: f64,
    pub param_count_actual: usize,
    pub param_count_teacher: usize,
}

/// Inherit a spectrally decaying teacher with per-layer energy-chosen ranks
/// and measure held-out output MSE against the teacher.
pub fn energy_rank_approximation(dims: &[usize], epsilon: f64, heads: usize, samples: usize, seed: u64) -> Result<ApproximationRow> {
    let teacher = spectral_teacher(dims, 2.0, 0.5, seed)?;
    let mut ranks = Vec::new();
    for l in teacher.layers() {
        if let Layer::Dense(d) = l {
            ranks.push(rank_for_energy(&crate::linalg::singular_values(&d.weight)?, epsilon)?);
        }
    }
    let student = inherit_network(
        &teacher,
        &InheritOptions {
            rank: RankPolicy::PerLayer(ranks.clone()),
            heads,
            seed,
            ..InheritOptions::default()
        },
    )?;
    let mut rng = Philox::derived(seed, domain::TEST, 1);
    let x = Matrix::from_fn(samples, dims[0], |_, _| rng.normal());
    let (output_mse, _) = mse(&student.forward(&x)?, &teacher.forward(&x)?)?;
    Ok(ApproximationRow {
        seed,
        ranks,
        output_mse,
        param_count_actual: student.parameter_count(),
        param_count_teacher: teacher.parameter_count(),
    })
}
