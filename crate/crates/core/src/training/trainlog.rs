use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    /// Iterations completed when the check ran.
    pub iteration: usize,
    pub epoch: usize,
    pub overall_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: String,
    pub iterations_per_epoch: usize,
    pub iterations: Vec<IterationRecord>,
    pub validation: Vec<ValidationRecord>,
    pub wall_clock_secs: f64,
}

impl TrainLog {
    /// First validated iteration count at which OA reached `target`.
    pub fn iterations_to_target(&self, target: f64) -> Option<usize> {
        self.validation.iter().find(|v| v.overall_accuracy >= target).map(|v| v.iteration)
    }

    pub fn final_oa(&self) -> Option<f64> {
        self.validation.last().map(|v| v.overall_accuracy)
    }

    /// Mean loss over the last `n` iterations.
    pub fn recent_loss(&self, n: usize) -> Option<f64> {
        let tail = &self.iterations[self.iterations.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,lr\n");
        for r in &self.iterations {
            let _ = writeln!(out, "{},{},{}", r.iteration, r.loss, r.lr);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Compact JSON summary: validation curve and final numbers, no per-iteration rows.
    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            model: self.model.clone(),
            iterations: self.iterations.len(),
            iterations_per_epoch: self.iterations_per_epoch,
            final_loss: self.recent_loss(self.iterations_per_epoch.max(1)),
            final_oa: self.final_oa(),
            validation: self.validation.clone(),
            wall_clock_secs: self.wall_clock_secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub iterations: usize,
    pub iterations_per_epoch: usize,
    /// Mean loss over the last epoch.
    pub final_loss: Option<f64>,
    pub final_oa: Option<f64>,
    pub validation: Vec<ValidationRecord>,
    pub wall_clock_secs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(points: &[(usize, f64)]) -> TrainLog {
        TrainLog {
            validation: points
                .iter()
                .map(|&(iteration, overall_accuracy)| ValidationRecord { iteration, epoch: 0, overall_accuracy })
                .collect(),
            ..TrainLog::default()
        }
    }

    #[test]
    fn target_lookup() {
        let l = log(&[(10, 0.5), (20, 0.7), (30, 0.65), (40, 0.8)]);
        assert_eq!(l.iterations_to_target(0.6), Some(20));
        assert_eq!(l.iterations_to_target(0.75), Some(40));
        assert_eq!(l.iterations_to_target(0.9), None);
        assert_eq!(l.final_oa(), Some(0.8));
    }
}
