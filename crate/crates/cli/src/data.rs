//! Where a command's samples come from: a CSV file or a synthetic task.
//! The resolved source is stored in checkpoint configs so later commands can
//! reuse the teacher's data without repeating flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use inhernet::data::Split;
use inhernet::io::{gen_synthetic, load_csv, split_dataset, CsvSchema, SyntheticTask, TaskKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Mimic,
    Piecewise,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Delimited dataset with a header row; features first, targets last.
    #[arg(long, value_name = "FILE", conflicts_with = "task")]
    pub csv: Option<PathBuf>,
    /// Treat the last CSV column as a class label (count inferred when 0).
    #[arg(long, requires = "csv", conflicts_with = "targets")]
    pub classes: Option<usize>,
    /// Treat the last N CSV columns as regression targets.
    #[arg(long, requires = "csv")]
    pub targets: Option<usize>,
    /// Generate a synthetic task instead of reading a file.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub input_dim: usize,
    /// Target width, or class count for classification.
    #[arg(long, default_value_t = 4)]
    pub output_dim: usize,
    /// Seed for data generation and the train/eval split.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    /// Hidden widths of the ground-truth network for `--task mimic`.
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    pub truth_hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, schema: CsvSchema, split_seed: u64 },
    Synthetic(SyntheticTask),
}

impl DataArgs {
    /// The source named by flags, if any.
    pub fn source(&self) -> Result<Option<DataSource>> {
        if let Some(path) = &self.csv {
            let schema = match (self.classes, self.targets) {
                (_, Some(t)) => CsvSchema::Regression { targets: t },
                (Some(0), None) | (None, None) => CsvSchema::Classification { num_classes: None },
                (Some(k), None) => CsvSchema::Classification { num_classes: Some(k) },
            };
            return Ok(Some(DataSource::Csv {
                path: path.clone(),
                schema,
                split_seed: self.data_seed,
            }));
        }
        let Some(task) = self.task else {
            return Ok(None);
        };
        let kind = match task {
            TaskArg::Classification => TaskKind::Classification {
                separation: self.separation,
            },
            TaskArg::Mimic => TaskKind::TeacherMimic {
                hidden: self.truth_hidden.clone(),
                noise: self.noise,
            },
            TaskArg::Piecewise => TaskKind::PiecewiseLinear {
                clusters: self.clusters,
                noise: self.noise,
            },
        };
        Ok(Some(DataSource::Synthetic(SyntheticTask {
            kind,
            seed: self.data_seed,
            samples: self.samples,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
        })))
    }

    /// Flags first, then the `data` entry of a checkpoint config.
    pub fn resolve(&self, fallback: Option<&serde_json::Value>) -> Result<DataSource> {
        if let Some(s) = self.source()? {
            return Ok(s);
        }
        if let Some(v) = fallback.and_then(|c| c.get("data")) {
            return serde_json::from_value(v.clone()).context("reading the data source stored in the checkpoint");
        }
        bail!("no data source: pass --task or --csv (the checkpoint does not record one)")
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Split> {
        Ok(match self {
            DataSource::Csv { path, schema, split_seed } => {
                let data = load_csv(path, *schema).with_context(|| format!("loading {}", path.display()))?;
                split_dataset(&data, *split_seed)
            }
            DataSource::Synthetic(task) => gen_synthetic(task)?,
        })
    }
}
