//! Direct preference optimization against a frozen reference model.
//!
//! `L = softplus(−β·[(π_c − ρ_c) − (π_r − ρ_r)])`, with `π`/`ρ` the summed
//! response log-probabilities under the policy and the reference.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sequence_logprob, sequence_logprob_node, LanguageModel};
use crate::optim::{AdamW, AdamWConfig, ScheduleConfig, SchedulerKind, StepEvent, TrainLoop};
use crate::rng::Rng;
use crate::tensor::{Element, Graph, NodeId};
use crate::tokenizer::{BpeVocab, BOS, EOS};
use crate::train::{loss_and_grads, TrainReport};

/// One preference record. Serialized with exactly these three keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoTriple {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TripleError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

impl DpoTriple {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (k, v) in [("prompt", &self.prompt), ("chosen", &self.chosen), ("rejected", &self.rejected)] {
            if v.is_empty() {
                return Err(format!("`{k}` is empty"));
            }
        }
        if self.chosen == self.rejected {
            return Err("`chosen` equals `rejected`".into());
        }
        Ok(())
    }
}

/// Parses JSON lines. Blank lines are skipped; anything else must be an
/// object with exactly `prompt`, `chosen` and `rejected`.
pub fn parse_triples(text: &str) -> std::result::Result<Vec<DpoTriple>, TripleError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| TripleError::Line { line: i + 1, reason };
        let t: DpoTriple = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        t.validate().map_err(fail)?;
        out.push(t);
    }
    Ok(out)
}

pub fn triples_to_jsonl(triples: &[DpoTriple]) -> String {
    triples.iter().map(|t| serde_json::to_string(t).expect("strings serialize") + "\n").collect()
}

/// `−log σ(β·margin)` computed as `softplus(−β·margin)`.
pub fn dpo_loss(pc: f64, pr: f64, rc: f64, rr: f64, beta: f64) -> f64 {
    let z = -beta * ((pc - rc) - (pr - rr));
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Graph form of [`dpo_loss`]; the reference terms are constants.
pub fn dpo_loss_node<T: Element>(
    g: &mut Graph<T>,
    policy_chosen: NodeId,
    policy_rejected: NodeId,
    ref_chosen: f64,
    ref_rejected: f64,
    beta: f64,
) -> Result<NodeId> {
    let diff = g.sub(policy_chosen, policy_rejected)?;
    let shift = g.constant(crate::tensor::Tensor::scalar(T::from_f64_lossy(ref_chosen - ref_rejected)));
    let margin = g.sub(diff, shift)?;
    let z = g.scale(margin, T::from_f64_lossy(-beta));
    Ok(g.softplus(z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Caps optimizer steps; otherwise `epochs` passes over the data.
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub accumulation: usize,
    pub scheduler: SchedulerKind,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    #[serde(deserialize_with = "crate::optim::clip_from_number")]
    pub clip_norm: Option<f64>,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.1,
            lr: 5e-4,
            epochs: 1,
            max_steps: None,
            batch_size: 1,
            accumulation: 1,
            scheduler: SchedulerKind::Cosine,
            warmup_ratio: 0.0,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

impl DpoConfig {
    pub fn total_steps(&self, n: usize) -> usize {
        let micro = n.div_ceil(self.batch_size.max(1)) * self.epochs;
        let steps = micro.div_ceil(self.accumulation.max(1));
        self.max_steps.unwrap_or(steps)
    }
}

/// Token form of a triple: `BOS prompt "\n"`, and each response followed by
/// EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTriple {
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
}

pub fn encode_triple(vocab: &BpeVocab, t: &DpoTriple, max_len: usize) -> Result<TokenizedTriple> {
    let mut prompt = vec![BOS];
    prompt.extend(vocab.encode_str(&t.prompt));
    prompt.extend(vocab.encode_str("\n"));
    let resp = |s: &str| {
        let mut r = vocab.encode_str(s);
        r.push(EOS);
        r
    };
    let (chosen, rejected) = (resp(&t.chosen), resp(&t.rejected));
    let longest = prompt.len() + chosen.len().max(rejected.len());
    if longest > max_len + 1 {
        return Err(Error::SequenceTooLong { len: longest - 1, max: max_len });
    }
    Ok(TokenizedTriple { prompt, chosen, rejected })
}

/// Reference log-probabilities, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCache {
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
}

impl ReferenceCache {
    pub fn build<T: Element, R: LanguageModel<T>>(reference: &R, data: &[TokenizedTriple]) -> Result<Self> {
        let mut chosen = Vec::with_capacity(data.len());
        let mut rejected = Vec::with_capacity(data.len());
        for t in data {
            chosen.push(sequence_logprob(reference, &t.prompt, &t.chosen)?);
            rejected.push(sequence_logprob(reference, &t.prompt, &t.rejected)?);
        }
        Ok(ReferenceCache { chosen, rejected })
    }
}

/// Implicit reward margins `β·[(π_c − ρ_c) − (π_r − ρ_r)]` of every triple.
pub fn implicit_margins<T: Element, P: LanguageModel<T>>(
    policy: &P,
    cache: &ReferenceCache,
    data: &[TokenizedTriple],
    beta: f64,
) -> Result<Vec<f64>> {
    data.iter()
        .enumerate()
        .map(|(i, t)| {
            let pc = sequence_logprob(policy, &t.prompt, &t.chosen)?;
            let pr = sequence_logprob(policy, &t.prompt, &t.rejected)?;
            Ok(beta * ((pc - cache.chosen[i]) - (pr - cache.rejected[i])))
        })
        .collect()
}

/// Records the policy's DPO loss on `t` into `g`.
#[allow(clippy::too_many_arguments)]
pub fn dpo_triple_loss_node<T: Element>(
    g: &mut Graph<T>,
    cfg: &crate::model::ModelConfig,
    b: &crate::model::Binding,
    t: &TokenizedTriple,
    ref_chosen: f64,
    ref_rejected: f64,
    beta: f64,
    mut rng: Option<&mut Rng>,
) -> Result<NodeId> {
    let pc = sequence_logprob_node(g, cfg, b, &t.prompt, &t.chosen, rng.as_deref_mut())?;
    let pr = sequence_logprob_node(g, cfg, b, &t.prompt, &t.rejected, rng)?;
    dpo_loss_node(g, pc, pr, ref_chosen, ref_rejected, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpoReport {
    pub train: TrainReport,
    pub cache: ReferenceCache,
}

/// Optimizes the trainable parameters of `policy` on the preference data.
/// `reference` is only read.
pub fn train_dpo<T: Element, P: LanguageModel<T>, R: LanguageModel<T>>(
    policy: &mut P,
    reference: &R,
    data: &[TokenizedTriple],
    cfg: &DpoConfig,
    rng: &mut Rng,
    on_step: &mut dyn FnMut(&StepEvent),
) -> Result<DpoReport> {
    if data.is_empty() {
        return Err(Error::Empty("dpo dataset"));
    }
    if cfg.beta.is_nan() || cfg.beta <= 0.0 || cfg.batch_size == 0 || cfg.epochs == 0 && cfg.max_steps.is_none() {
        return Err(Error::Hyper("beta must be positive; batch_size and epochs non-zero".into()));
    }
    let cache = ReferenceCache::build(reference, data)?;
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
    while !lp.finished() {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            if lp.finished() {
                break;
            }
            let mut items = Vec::with_capacity(chunk.len());
            let mut tokens = 0;
            for &i in chunk {
                let t = &data[i];
                tokens += 2 * t.prompt.len() + t.chosen.len() + t.rejected.len();
                items.push(loss_and_grads(policy, |g, b| {
                    dpo_triple_loss_node(
                        g,
                        policy.config(),
                        b,
                        t,
                        cache.chosen[i],
                        cache.rejected[i],
                        cfg.beta,
                        Some(&mut *rng),
                    )
                })?);
            }
            let n = items.len() as f64;
            let loss = items.iter().map(|(l, _)| l).sum::<f64>() / n;
            let grads = crate::optim::mean_grads(items.into_iter().map(|(_, g)| g).collect())?;
            if let Some(ev) = lp.micro_step(policy, grads, loss, tokens)? {
                on_step(&ev);
                report.events.push(ev);
            }
        }
    }
    report.steps = lp.steps_taken();
    Ok(DpoReport { train: report, cache })
}
