//! AdamW, the warmup + cosine learning-rate schedule, and gradient
//! accumulation, wired together by [`TrainLoop`].

mod adamw;
mod schedule;
mod train_loop;

pub use adamw::{clip_grad_norm, AdamW, AdamWConfig};
pub use schedule::{lr_at, ScheduleConfig, SchedulerKind};
pub(crate) use train_loop::mean_grads;
pub use train_loop::{Accumulator, StepEvent, TrainLoop};

/// Reads a clipping threshold where `null` or any non-positive number means
/// no clipping; configuration formats without a null value can write `0`.
pub fn clip_from_number<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let v: Option<f64> = serde::Deserialize::deserialize(d)?;
    Ok(v.filter(|&x| x > 0.0))
}
