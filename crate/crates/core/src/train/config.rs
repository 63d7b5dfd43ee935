use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size schedule as a function of the optimizer step `t ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `η / √t`.
    InverseSqrt,
    Constant,
    /// Multiply by `factor` once `t` passes each milestone (in steps).
    StepDecay { milestones: Vec<usize>, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
    /// `λ_CE·CE + λ_KD·τ²·KL(teacher‖student)` at temperature `τ`.
    CrossEntropyKd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub lambda_ce: f64,
    pub lambda_kd: f64,
    pub temperature: f64,
    /// Eval loss at or below which `epochs_to_threshold` is recorded.
    pub threshold: Option<f64>,
    /// End the run at the first epoch meeting `threshold`.
    #[serde(default)]
    pub stop_at_threshold: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            schedule: Schedule::InverseSqrt,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            loss: LossKind::CrossEntropy,
            lambda_ce: 1.0,
            lambda_kd: 9.0,
            temperature: 2.0,
            threshold: None,
            stop_at_threshold: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::range("base_lr", self.base_lr, "> 0"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::range("temperature", self.temperature, "> 0"));
        }
        if !(self.lambda_ce >= 0.0) || !(self.lambda_kd >= 0.0) {
            return Err(Error::range("loss weights", format!("{}, {}", self.lambda_ce, self.lambda_kd), ">= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::range("batch_size", 0, ">= 1"));
        }
        if let Schedule::StepDecay { factor, .. } = &self.schedule {
            if !(*factor > 0.0) {
                return Err(Error::range("decay factor", factor, "> 0"));
            }
        }
        Ok(())
    }

    /// `η_t` for optimizer step `t` (1-based).
    pub fn learning_rate(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::range("step", 0, ">= 1"));
        }
        Ok(match &self.schedule {
            Schedule::InverseSqrt => self.base_lr / (t as f64).sqrt(),
            Schedule::Constant => self.base_lr,
            Schedule::StepDecay { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| t > m).count();
                self.base_lr * factor.powi(passed as i32)
            }
        })
    }
}
