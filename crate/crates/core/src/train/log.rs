use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Column order of [`RunLog::to_csv`].
pub const CSV_HEADER: &str = "epoch,train_loss,eval_loss,eval_acc,grad_norm_mean,grad_norm_var,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// Absent for regression tasks.
    pub eval_acc: Option<f64>,
    pub grad_norm_mean: f64,
    pub grad_norm_var: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    pub threshold: Option<f64>,
    pub epochs_to_threshold: Option<usize>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_eval_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.eval_loss)
    }

    pub fn final_eval_acc(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.eval_acc)
    }

    /// CSV with a header row. Floats use the shortest round-trip form; with
    /// `include_wall = false` the wall-time column is left empty so the output
    /// depends only on seed and config.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let acc = r.eval_acc.map(|a| a.to_string()).unwrap_or_default();
            let wall = if include_wall { format!("{:.3}", r.wall_ms) } else { String::new() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.eval_loss, acc, r.grad_norm_mean, r.grad_norm_var, wall
            );
        }
        out
    }
}
