use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{Grads, LanguageModel};
use crate::tensor::Element;

use super::adamw::{clip_grad_norm, AdamW};
use super::schedule::{lr_at, ScheduleConfig};

/// Sums gradients of `k` micro-batches and hands back their mean.
#[derive(Debug, Clone)]
pub struct Accumulator<T> {
    k: usize,
    count: usize,
    sum: Grads<T>,
}

impl<T: Element> Accumulator<T> {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Hyper("accumulation steps must be at least 1".into()));
        }
        Ok(Accumulator { k, count: 0, sum: Grads::new() })
    }

    pub fn pending(&self) -> usize {
        self.count
    }

    /// Adds one micro-batch. Returns the averaged gradient once `k` have
    /// been collected.
    pub fn add(&mut self, grads: Grads<T>) -> Result<Option<Grads<T>>> {
        for (name, g) in grads {
            match self.sum.get_mut(&name) {
                Some(acc) => *acc = acc.add(&g)?,
                None => {
                    self.sum.insert(name, g);
                }
            }
        }
        self.count += 1;
        if self.count == self.k {
            Ok(self.take())
        } else {
            Ok(None)
        }
    }

    /// Mean over whatever has been collected, if anything.
    pub fn take(&mut self) -> Option<Grads<T>> {
        if self.count == 0 {
            return None;
        }
        let inv = 1.0 / self.count as f64;
        let out =
            std::mem::take(&mut self.sum).into_iter().map(|(n, g)| (n, g.scale(T::from_f64_lossy(inv)))).collect();
        self.count = 0;
        Some(out)
    }
}

/// One optimizer step as written to the training log:
/// `step=12 lr=1.000000e-3 loss=2.345678 tokens_per_sec=812.3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub tokens_per_sec: f64,
}

impl fmt::Display for StepEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} lr={:.6e} loss={:.6} tokens_per_sec={:.1}",
            self.step, self.lr, self.loss, self.tokens_per_sec
        )
    }
}

impl FromStr for StepEvent {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |why: &str| Error::Hyper(format!("malformed log line `{line}`: {why}"));
        let mut fields = [None; 4];
        for part in line.split_whitespace() {
            let (key, value) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let slot = ["step", "lr", "loss", "tokens_per_sec"]
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| bad("unknown key"))?;
            fields[slot] = Some(value.parse::<f64>().map_err(|_| bad("not a number"))?);
        }
        let get = |i: usize| fields[i].ok_or_else(|| bad("missing key"));
        Ok(StepEvent { step: get(0)? as usize, lr: get(1)?, loss: get(2)?, tokens_per_sec: get(3)? })
    }
}

/// Optimizer, schedule and accumulation state for one run. The schedule
/// advances once per optimizer step; optimizer step `t` (1-based) uses
/// `lr_at(t)`.
#[derive(Debug)]
pub struct TrainLoop<T> {
    opt: AdamW,
    schedule: ScheduleConfig,
    acc: Accumulator<T>,
    clip: Option<f64>,
    step: usize,
    loss_sum: f64,
    tokens: usize,
    started: Instant,
}

impl<T: Element> TrainLoop<T> {
    pub fn new(opt: AdamW, schedule: ScheduleConfig, accumulation: usize, clip: Option<f64>) -> Result<Self> {
        schedule.validate()?;
        if let Some(c) = clip {
            if c <= 0.0 {
                return Err(Error::Hyper(format!("clip norm {c} must be positive")));
            }
        }
        Ok(TrainLoop {
            opt,
            schedule,
            acc: Accumulator::new(accumulation)?,
            clip,
            step: 0,
            loss_sum: 0.0,
            tokens: 0,
            started: Instant::now(),
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn finished(&self) -> bool {
        self.step >= self.schedule.total_steps
    }

    pub fn optimizer(&self) -> &AdamW {
        &self.opt
    }

    /// Feeds one micro-batch. Applies an optimizer step when enough
    /// micro-batches have been accumulated.
    pub fn micro_step<M: LanguageModel<T>>(
        &mut self,
        model: &mut M,
        grads: Grads<T>,
        loss: f64,
        tokens: usize,
    ) -> Result<Option<StepEvent>> {
        self.loss_sum += loss;
        self.tokens += tokens;
        let pending = self.acc.pending() + 1;
        match self.acc.add(grads)? {
            Some(avg) => self.apply(model, avg, pending).map(Some),
            None => Ok(None),
        }
    }

    /// Steps on a trailing partial accumulation, if any.
    pub fn flush<M: LanguageModel<T>>(&mut self, model: &mut M) -> Result<Option<StepEvent>> {
        let pending = self.acc.pending();
        match self.acc.take() {
            Some(avg) if !self.finished() => self.apply(model, avg, pending).map(Some),
            _ => {
                self.loss_sum = 0.0;
                self.tokens = 0;
                Ok(None)
            }
        }
    }

    fn apply<M: LanguageModel<T>>(&mut self, model: &mut M, mut grads: Grads<T>, micro: usize) -> Result<StepEvent> {
        if self.finished() {
            return Err(Error::Hyper(format!("schedule of {} steps exhausted", self.schedule.total_steps)));
        }
        if let Some(c) = self.clip {
            clip_grad_norm(&mut grads, c);
        }
        let lr = lr_at(self.step + 1, &self.schedule)?;
        self.opt.step(model.trainable_mut(), &grads, lr)?;
        self.step += 1;
        let elapsed = self.started.elapsed().as_secs_f64().max(1e-9);
        let event = StepEvent {
            step: self.step,
            lr,
            loss: self.loss_sum / micro as f64,
            tokens_per_sec: self.tokens as f64 / elapsed,
        };
        self.loss_sum = 0.0;
        self.tokens = 0;
        self.started = Instant::now();
        Ok(event)
    }
}

/// Element-wise mean of several gradient maps with identical keys.
pub(crate) fn mean_grads<T: Element>(all: Vec<Grads<T>>) -> Result<Grads<T>> {
    let n = all.len();
    let mut acc = Accumulator::new(n.max(1))?;
    let mut out = None;
    for g in all {
        out = acc.add(g)?;
    }
    Ok(out.unwrap_or_default())
}
