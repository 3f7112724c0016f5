use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    /// Linear warmup, then half-cosine decay to zero.
    #[default]
    Cosine,
    /// Linear warmup, then flat at the peak.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_ratio: f64,
    #[serde(default)]
    pub kind: SchedulerKind,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::Hyper(format!("warmup_ratio {} not in [0, 1)", self.warmup_ratio)));
        }
        if self.peak_lr < 0.0 || !self.peak_lr.is_finite() {
            return Err(Error::Hyper(format!("peak_lr {} invalid", self.peak_lr)));
        }
        Ok(())
    }

    /// `round(warmup_ratio × total_steps)`.
    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * self.total_steps as f64).round() as usize
    }
}

/// Learning rate at `step ∈ [0, total_steps]`: `peak·step/warmup` during
/// warmup, then `peak·½(1 + cos(π·progress))` with progress running from 0
/// at the end of warmup to 1 at `total_steps`.
pub fn lr_at(step: usize, cfg: &ScheduleConfig) -> Result<f64> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(Error::Hyper(format!("step {step} beyond schedule of {} steps", cfg.total_steps)));
    }
    let warmup = cfg.warmup_steps();
    if step < warmup {
        return Ok(cfg.peak_lr * step as f64 / warmup as f64);
    }
    match cfg.kind {
        SchedulerKind::Constant => Ok(cfg.peak_lr),
        SchedulerKind::Cosine => {
            let span = cfg.total_steps - warmup;
            if span == 0 {
                return Ok(cfg.peak_lr);
            }
            let progress = (step - warmup) as f64 / span as f64;
            Ok(cfg.peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
        }
    }
}
