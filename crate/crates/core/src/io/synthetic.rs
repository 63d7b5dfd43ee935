//! Seeded desk-scale tasks. Every value comes from Philox streams and basic
//! IEEE-754 arithmetic, so regeneration is bit-identical across platforms.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{DenseLayer, Layer, Network};
use crate::rng::{domain, Philox};

// Stream indices within the DATA domain.
const INPUTS: u32 = 0;
const MODEL: u32 = 1;
const NOISE: u32 = 2;
const CENTERS: u32 = 3;
const ASSIGN: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Regression onto a random ground-truth ReLU MLP with the given hidden
    /// widths, plus Gaussian target noise of standard deviation `noise`.
    TeacherMimic { hidden: Vec<usize>, noise: f64 },
    /// `k` input clusters, each with its own affine map.
    PiecewiseLinear { clusters: usize, noise: f64 },
    /// Isotropic Gaussian blobs, one per class; centers have scale
    /// `separation`, samples spread 1 around them.
    Classification { separation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub seed: u64,
    pub samples: usize,
    pub input_dim: usize,
    /// Target width, or number of classes.
    pub output_dim: usize,
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Philox) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

impl SyntheticTask {
    /// The ground-truth network of a `TeacherMimic` task.
    pub fn ground_truth(&self) -> Result<Network> {
        let TaskKind::TeacherMimic { hidden, .. } = &self.kind else {
            return Err(Error::State("only teacher-mimic tasks have a ground-truth network".into()));
        };
        let mut dims = vec![self.input_dim];
        dims.extend(hidden);
        dims.push(self.output_dim);
        let mut rng = Philox::derived(self.seed, domain::DATA, MODEL);
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            // Variance-preserving scale keeps outputs O(1) at any depth.
            let scale = (2.0 / w[0] as f64).sqrt();
            let weight = normal_matrix(w[0], w[1], scale, &mut rng);
            let bias = (0..w[1]).map(|_| 0.1 * rng.normal()).collect();
            layers.push(Layer::Dense(DenseLayer::new(weight, Some(bias))?));
        }
        Network::new(layers)
    }

    /// The full dataset before splitting.
    pub fn generate(&self) -> Result<Dataset> {
        if self.samples == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::range("task sizes", format!("{self:?}"), "all positive"));
        }
        let (n, d, k) = (self.samples, self.input_dim, self.output_dim);
        let mut inputs = Philox::derived(self.seed, domain::DATA, INPUTS);
        let mut noise = Philox::derived(self.seed, domain::DATA, NOISE);
        match &self.kind {
            TaskKind::TeacherMimic { noise: sd, .. } => {
                let x = normal_matrix(n, d, 1.0, &mut inputs);
                let mut y = self.ground_truth()?.forward(&x)?;
                if *sd > 0.0 {
                    y.data_mut().iter_mut().for_each(|v| *v += sd * noise.normal());
                }
                Dataset::new(x, Targets::Values(y))
            }
            TaskKind::PiecewiseLinear { clusters, noise: sd } => {
                if *clusters == 0 {
                    return Err(Error::range("clusters", 0, ">= 1"));
                }
                let mut model = Philox::derived(self.seed, domain::DATA, MODEL);
                let mut centers = Philox::derived(self.seed, domain::DATA, CENTERS);
                let c = normal_matrix(*clusters, d, 3.0, &mut centers);
                let maps: Vec<Matrix> = (0..*clusters)
                    .map(|_| normal_matrix(d, k, (1.0 / d as f64).sqrt(), &mut model))
                    .collect();
                let offsets: Vec<Vec<f64>> = (0..*clusters)
                    .map(|_| (0..k).map(|_| model.normal()).collect())
                    .collect();
                let mut assign = Philox::derived(self.seed, domain::DATA, ASSIGN);
                let mut x = Matrix::zeros(n, d);
                let mut y = Matrix::zeros(n, k);
                for i in 0..n {
                    let j = assign.below(*clusters);
                    for (t, v) in x.row_mut(i).iter_mut().enumerate() {
                        *v = c.get(j, t) + inputs.normal();
                    }
                    let xi = x.row(i).to_vec();
                    for (o, v) in y.row_mut(i).iter_mut().enumerate() {
                        let lin: f64 = xi.iter().enumerate().map(|(t, a)| a * maps[j].get(t, o)).sum();
                        *v = lin + offsets[j][o] + if *sd > 0.0 { sd * noise.normal() } else { 0.0 };
                    }
                }
                Dataset::new(x, Targets::Values(y))
            }
            TaskKind::Classification { separation } => {
                let mut centers = Philox::derived(self.seed, domain::DATA, CENTERS);
                let c = normal_matrix(k, d, *separation, &mut centers);
                let mut assign = Philox::derived(self.seed, domain::DATA, ASSIGN);
                let mut x = Matrix::zeros(n, d);
                let mut labels = Vec::with_capacity(n);
                for i in 0..n {
                    let j = assign.below(k);
                    for (t, v) in x.row_mut(i).iter_mut().enumerate() {
                        *v = c.get(j, t) + inputs.normal();
                    }
                    labels.push(j);
                }
                Dataset::new(x, Targets::Classes { labels, num_classes: k })
            }
        }
    }
}

/// 80/20 train/eval split by a permutation drawn from `seed`.
pub fn split_dataset(data: &Dataset, seed: u64) -> Split {
    let perm = Philox::derived(seed, domain::SPLIT, 0).permutation(data.len());
    let cut = data.len() * 4 / 5;
    Split {
        train: data.subset(&perm[..cut]),
        eval: data.subset(&perm[cut..]),
    }
}

/// Generate a task and split it.
pub fn gen_synthetic(task: &SyntheticTask) -> Result<Split> {
    Ok(split_dataset(&task.generate()?, task.seed))
}
