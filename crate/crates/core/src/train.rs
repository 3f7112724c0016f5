//! Pre-training and supervised fine-tuning loops.
//!
//! Both loops compute per-sequence gradients, average them over a batch,
//! and feed the batch mean to [`TrainLoop`] as one micro-batch.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    causal_lm_loss, causal_lm_loss_node, token_loss, AttentionMode, Binding, Grads, LanguageModel, MlmBatch,
    ModelConfig,
};
use crate::optim::{AdamW, AdamWConfig, ScheduleConfig, SchedulerKind, StepEvent, TrainLoop};
use crate::rng::{seeded, Rng};
use crate::tensor::{Element, Graph, NodeId, Reduction};
use crate::tokenizer::{BpeVocab, BOS, EOS};

/// Runs `build` on a fresh graph bound to `model`, backpropagates, and
/// returns the loss with the gradients of every trainable parameter.
pub fn loss_and_grads<T, M, F>(model: &M, build: F) -> Result<(f64, Grads<T>)>
where
    T: Element,
    M: LanguageModel<T>,
    F: FnOnce(&mut Graph<T>, &Binding) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let b = model.bind(&mut g);
    let loss = build(&mut g, &b)?;
    let value = g.value(loss).item().as_f64();
    g.backward(loss)?;
    Ok((value, b.grads(&g)))
}

fn batch_mean<T: Element>(items: Vec<(f64, Grads<T>)>) -> Result<(f64, Grads<T>)> {
    let n = items.len() as f64;
    let loss = items.iter().map(|(l, _)| l).sum::<f64>() / n;
    let grads = crate::optim::mean_grads(items.into_iter().map(|(_, g)| g).collect())?;
    Ok((loss, grads))
}

/// What a finished run reports back.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub events: Vec<StepEvent>,
    /// `(optimizer step, evaluation loss)` pairs.
    pub evals: Vec<(usize, f64)>,
}

impl TrainReport {
    pub fn final_eval(&self) -> Option<f64> {
        self.evals.last().map(|&(_, l)| l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Causal,
    Mlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Windows at random offsets of the concatenated token stream.
    #[default]
    Windows,
    /// Whole documents, each `BOS doc EOS`, truncated to the window.
    Documents,
}

/// Pre-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub objective: Objective,
    pub sampling: Sampling,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub lr: f64,
    pub scheduler: SchedulerKind,
    pub warmup_ratio: f64,
    pub accumulation: usize,
    pub weight_decay: f64,
    #[serde(deserialize_with = "crate::optim::clip_from_number")]
    pub clip_norm: Option<f64>,
    pub mask_rate: f64,
    /// Evaluate on the full stream every this many optimizer steps.
    pub eval_every: usize,
    /// Stop once an evaluation falls below this loss.
    pub target_loss: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            objective: Objective::Causal,
            sampling: Sampling::Windows,
            steps: 2000,
            batch_size: 8,
            seq_len: 64,
            lr: 1e-3,
            scheduler: SchedulerKind::Cosine,
            warmup_ratio: 0.02,
            accumulation: 1,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            mask_rate: 0.15,
            eval_every: 100,
            target_loss: None,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Hyper("steps, batch_size and eval_every must be positive".into()));
        }
        let window = self.window();
        if self.seq_len == 0 || window > model.max_seq_len + 1 {
            return Err(Error::Hyper(format!(
                "seq_len {} does not fit max_seq_len {}",
                self.seq_len, model.max_seq_len
            )));
        }
        if !(0.0..1.0).contains(&self.mask_rate) || self.mask_rate == 0.0 && self.objective == Objective::Mlm {
            return Err(Error::Hyper(format!("mask_rate {} not in (0, 1)", self.mask_rate)));
        }
        Ok(())
    }

    /// Tokens per training sample: causal windows carry one extra token for
    /// the shifted targets.
    fn window(&self) -> usize {
        match self.objective {
            Objective::Causal => self.seq_len + 1,
            Objective::Mlm => self.seq_len,
        }
    }

    fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            peak_lr: self.lr,
            total_steps: self.steps,
            warmup_ratio: self.warmup_ratio,
            kind: self.scheduler,
        }
    }
}

/// Joins documents into one stream, each as `BOS doc EOS`.
pub fn token_stream(docs: &[Vec<u32>]) -> Vec<u32> {
    token_stream_parts(docs).flatten().collect()
}

/// Consecutive windows of `window` tokens with stride `window − 1`, so every
/// token after the first is a causal target exactly once.
fn eval_windows(stream: &[u32], window: usize) -> Vec<&[u32]> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < stream.len() {
        let end = (start + window).min(stream.len());
        out.push(&stream[start..end]);
        start = end - 1;
    }
    out
}

/// Training material in the shape the sampling mode needs.
struct Corpus {
    stream: Vec<u32>,
    /// `BOS doc EOS`, truncated to the window; empty in window mode.
    docs: Vec<Vec<u32>>,
    window: usize,
}

impl Corpus {
    fn new(docs: &[Vec<u32>], cfg: &PretrainConfig) -> Result<Self> {
        let stream = token_stream(docs);
        if docs.is_empty() {
            return Err(Error::Empty("pre-training corpus"));
        }
        let window = cfg.window().min(stream.len());
        let docs = match cfg.sampling {
            Sampling::Windows => Vec::new(),
            Sampling::Documents => token_docs(docs, window),
        };
        Ok(Corpus { stream, docs, window })
    }

    fn sample(&self, rng: &mut Rng) -> &[u32] {
        if self.docs.is_empty() {
            let start = rng.gen_range(0..=self.stream.len() - self.window);
            &self.stream[start..start + self.window]
        } else {
            &self.docs[rng.gen_range(0..self.docs.len())]
        }
    }

    /// Sequences that together cover the corpus once.
    fn units(&self) -> Vec<&[u32]> {
        if self.docs.is_empty() {
            eval_windows(&self.stream, self.window)
        } else {
            self.docs.iter().map(Vec::as_slice).collect()
        }
    }
}

/// Each document as `BOS doc EOS`, cut to at most `window` tokens.
pub fn token_docs(docs: &[Vec<u32>], window: usize) -> Vec<Vec<u32>> {
    token_stream_parts(docs)
        .map(|mut d| {
            d.truncate(window);
            d
        })
        .collect()
}

fn token_stream_parts(docs: &[Vec<u32>]) -> impl Iterator<Item = Vec<u32>> + '_ {
    docs.iter().map(|d| {
        let mut v = Vec::with_capacity(d.len() + 2);
        v.push(BOS);
        v.extend_from_slice(d);
        v.push(EOS);
        v
    })
}

/// Token-weighted mean next-token loss over `units`.
pub fn causal_loss_over<T: Element, M: LanguageModel<T>>(model: &M, units: &[&[u32]]) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for w in units {
        let n = w.len() - 1;
        total += causal_lm_loss(model, w)? * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(total / count as f64)
}

/// Mean next-token loss over every position of `stream`.
pub fn stream_causal_loss<T: Element, M: LanguageModel<T>>(model: &M, stream: &[u32], seq_len: usize) -> Result<f64> {
    causal_loss_over(model, &eval_windows(stream, seq_len + 1))
}

/// Mean masked-token loss over `units`, cut into chunks of `seq_len`, with a
/// fixed corruption seed so repeated evaluations are comparable.
pub fn mlm_loss_over<T: Element, M: LanguageModel<T>>(
    model: &M,
    units: &[&[u32]],
    seq_len: usize,
    mask_rate: f64,
) -> Result<f64> {
    let mut rng = seeded(0x6d6c6d);
    let (mut total, mut count) = (0.0, 0usize);
    for w in units.iter().flat_map(|u| u.chunks(seq_len)) {
        let batch = MlmBatch::corrupt(w, mask_rate, &mut rng)?;
        count += batch.mask_set.iter().filter(|&&m| m).count();
        total += crate::model::mlm_loss(model, &batch, Reduction::Sum)?;
    }
    if count == 0 {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(total / count as f64)
}

/// Loss of `model` on the corpus under `cfg`'s objective and sampling mode;
/// the figure `pretrain` reports at each evaluation.
pub fn corpus_loss<T: Element, M: LanguageModel<T>>(model: &M, docs: &[Vec<u32>], cfg: &PretrainConfig) -> Result<f64> {
    let corpus = Corpus::new(docs, cfg)?;
    evaluate(model, &corpus, cfg)
}

fn evaluate<T: Element, M: LanguageModel<T>>(model: &M, corpus: &Corpus, cfg: &PretrainConfig) -> Result<f64> {
    let units = corpus.units();
    match cfg.objective {
        Objective::Causal => causal_loss_over(model, &units),
        Objective::Mlm => mlm_loss_over(model, &units, cfg.seq_len, cfg.mask_rate),
    }
}

/// Pre-trains every trainable parameter of `model` on tokenized documents.
pub fn pretrain<T: Element, M: LanguageModel<T>>(
    model: &mut M,
    docs: &[Vec<u32>],
    cfg: &PretrainConfig,
    rng: &mut Rng,
    on_step: &mut dyn FnMut(&StepEvent),
) -> Result<TrainReport> {
    cfg.validate(model.config())?;
    let corpus = Corpus::new(docs, cfg)?;
    let opt = AdamW::new(AdamWConfig { weight_decay: cfg.weight_decay, ..Default::default() })?;
    let mut lp = TrainLoop::new(opt, cfg.schedule(), cfg.accumulation, cfg.clip_norm)?;
    let mut report = TrainReport::default();

    while !lp.finished() {
        let mut items = Vec::with_capacity(cfg.batch_size);
        let mut tokens = 0;
        for _ in 0..cfg.batch_size {
            let w = corpus.sample(rng);
            tokens += w.len();
            let item = match cfg.objective {
                Objective::Causal => {
                    loss_and_grads(model, |g, b| causal_lm_loss_node(g, model.config(), b, w, Some(&mut *rng)))?
                }
                Objective::Mlm => {
                    let batch = MlmBatch::corrupt(w, cfg.mask_rate, rng)?;
                    loss_and_grads(model, |g, b| {
                        batch.loss_node(g, model.config(), b, Reduction::Mean, Some(&mut *rng))
                    })?
                }
            };
            items.push(item);
        }
        let (loss, grads) = batch_mean(items)?;
        if let Some(ev) = lp.micro_step(model, grads, loss, tokens)? {
            on_step(&ev);
            report.events.push(ev);
            if ev.step % cfg.eval_every == 0 || lp.finished() {
                let l = evaluate(model, &corpus, cfg)?;
                log::info!("eval step={} loss={l:.6}", ev.step);
                report.evals.push((ev.step, l));
                if cfg.target_loss.is_some_and(|t| l < t) {
                    break;
                }
            }
        }
    }
    report.steps = lp.steps_taken();
    Ok(report)
}

/// Fine-tuning hyperparameters. The defaults are the published SFT recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub scheduler: SchedulerKind,
    pub warmup_ratio: f64,
    pub accumulation: usize,
    pub weight_decay: f64,
    #[serde(deserialize_with = "crate::optim::clip_from_number")]
    pub clip_norm: Option<f64>,
    /// Caps the optimizer steps below what `epochs` implies.
    pub max_steps: Option<usize>,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            epochs: 2,
            batch_size: 1,
            lr: 2e-5,
            scheduler: SchedulerKind::Cosine,
            warmup_ratio: 0.01,
            accumulation: 4,
            weight_decay: 0.01,
            clip_norm: None,
            max_steps: None,
        }
    }
}

impl SftConfig {
    /// Optimizer steps for `n` examples.
    pub fn total_steps(&self, n: usize) -> usize {
        let micro = n.div_ceil(self.batch_size.max(1)) * self.epochs;
        let steps = micro.div_ceil(self.accumulation.max(1));
        self.max_steps.map_or(steps, |m| m.min(steps))
    }
}

/// A tokenized instruction pair. `prompt` starts with BOS and ends with the
/// separator; `response` ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
}

/// `BOS prompt "\n"` and `response EOS`, trimmed to fit `max_len` tokens by
/// dropping the oldest prompt tokens first (BOS is kept), then the tail of
/// the response.
pub fn encode_pair(vocab: &BpeVocab, prompt: &str, response: &str, max_len: usize) -> Result<SftExample> {
    if max_len < 3 {
        return Err(Error::Hyper(format!("max_len {max_len} too small for an example")));
    }
    let mut body = vocab.encode_str(prompt);
    body.extend(vocab.encode_str("\n"));
    let mut resp = vocab.encode_str(response);
    resp.push(EOS);
    resp.truncate(max_len - 2);
    let room = max_len - 1 - resp.len();
    let skip = body.len().saturating_sub(room);
    let mut p = vec![BOS];
    p.extend_from_slice(&body[skip..]);
    Ok(SftExample { prompt: p, response: resp })
}

/// Mean cross-entropy over the response tokens only; prompt positions carry
/// no loss.
pub fn sft_loss_node<T: Element>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    b: &Binding,
    ex: &SftExample,
    rng: Option<&mut Rng>,
) -> Result<NodeId> {
    if ex.prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    if ex.response.is_empty() {
        return Err(Error::Empty("response"));
    }
    let full: Vec<u32> = ex.prompt.iter().chain(&ex.response).copied().collect();
    let input = &full[..full.len() - 1];
    let mask: Vec<bool> = (0..input.len()).map(|i| i + 1 >= ex.prompt.len()).collect();
    token_loss(g, cfg, b, input, &full[1..], &mask, AttentionMode::Causal, Reduction::Mean, rng)
}

/// Supervised fine-tuning of the trainable parameters of `model` (the
/// adapters, for an adapted model). Example order is reshuffled each epoch.
pub fn train_sft<T: Element, M: LanguageModel<T>>(
    model: &mut M,
    data: &[SftExample],
    cfg: &SftConfig,
    rng: &mut Rng,
    on_step: &mut dyn FnMut(&StepEvent),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Empty("sft dataset"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Hyper("epochs and batch_size must be positive".into()));
    }
    let schedule = ScheduleConfig {
        peak_lr: cfg.lr,
        total_steps: cfg.total_steps(data.len()),
        warmup_ratio: cfg.warmup_ratio,
        kind: cfg.scheduler,
    };
    let opt = AdamW::new(AdamWConfig { weight_decay: cfg.weight_decay, ..Default::default() })?;
    let mut lp = TrainLoop::new(opt, schedule, cfg.accumulation, cfg.clip_norm)?;
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            if lp.finished() {
                break 'epochs;
            }
            let mut items = Vec::with_capacity(chunk.len());
            let mut tokens = 0;
            for &i in chunk {
                let ex = &data[i];
                tokens += ex.prompt.len() + ex.response.len();
                items.push(loss_and_grads(model, |g, b| sft_loss_node(g, model.config(), b, ex, Some(&mut *rng)))?);
            }
            let (loss, grads) = batch_mean(items)?;
            if let Some(ev) = lp.micro_step(model, grads, loss, tokens)? {
                on_step(&ev);
                report.events.push(ev);
            }
        }
    }
    if let Some(ev) = lp.flush(model)? {
        on_step(&ev);
        report.events.push(ev);
    }
    report.steps = lp.steps_taken();
    Ok(report)
}

/// Mean response loss over a dataset, without dropout.
pub fn sft_eval_loss<T: Element, M: LanguageModel<T>>(model: &M, data: &[SftExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("sft dataset"));
    }
    let mut total = 0.0;
    for ex in data {
        let mut g = Graph::new();
        let b = model.bind_frozen(&mut g);
        let l = sft_loss_node(&mut g, model.config(), &b, ex, None)?;
        total += g.value(l).item().as_f64();
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_windows_cover_each_target_once() {
        let s: Vec<u32> = (0..10).collect();
        let ws = eval_windows(&s, 4);
        let targets: usize = ws.iter().map(|w| w.len() - 1).sum();
        assert_eq!(targets, 9);
        assert_eq!(ws[0], &[0, 1, 2, 3]);
        assert_eq!(ws[1], &[3, 4, 5, 6]);
    }

    #[test]
    fn sft_defaults_echo_recipe() {
        let c = SftConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.accumulation), (2, 1, 4));
        assert_eq!(c.lr, 2e-5);
        assert_eq!(c.warmup_ratio, 0.01);
        assert_eq!(c.scheduler, SchedulerKind::Cosine);
        assert_eq!(c.total_steps(10), 5);
    }

    #[test]
    fn encode_pair_layout_and_truncation() {
        let vocab = BpeVocab::train(["ab ab ab"], 300).unwrap();
        let ex = encode_pair(&vocab, "ab", "ab", 64).unwrap();
        assert_eq!(ex.prompt[0], BOS);
        assert_eq!(*ex.response.last().unwrap(), EOS);
        let long = encode_pair(&vocab, &"x".repeat(40), &"y".repeat(40), 16).unwrap();
        assert!(long.prompt.len() + long.response.len() <= 16);
        assert_eq!(long.prompt[0], BOS);
    }
}
