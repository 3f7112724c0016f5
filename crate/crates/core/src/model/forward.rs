use rand::Rng as _;

use super::{layer_path, Binding, LanguageModel, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Graph, NodeId, Reduction, Tensor};
use crate::tokenizer::{EOS, MASK};

const LN_EPS: f64 = 1e-5;

/// Attention visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    /// Position `i` attends to positions `≤ i`.
    Causal,
    /// Every position attends everywhere; used for masked-token prediction.
    Bidirectional,
}

fn check_ids(cfg: &ModelConfig, ids: &[u32]) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    if ids.len() > cfg.max_seq_len {
        return Err(Error::SequenceTooLong { len: ids.len(), max: cfg.max_seq_len });
    }
    ids.iter()
        .map(|&id| {
            let id = id as usize;
            if id < cfg.vocab_size {
                Ok(id)
            } else {
                Err(Error::TokenOutOfRange { id, vocab: cfg.vocab_size })
            }
        })
        .collect()
}

/// Multiplies by a Bernoulli keep-mask scaled by `1/(1−p)`. Identity when no
/// generator is supplied (evaluation) or `p == 0`.
pub(crate) fn dropout<T: Element>(g: &mut Graph<T>, x: NodeId, p: f64, rng: Option<&mut Rng>) -> Result<NodeId> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let shape = g.value(x).shape().to_vec();
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..g.value(x).numel()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
    let m = g.constant(Tensor::new(shape, mask)?);
    Ok(g.mul(x, m)?)
}

/// `x·Wᵀ`, plus the low-rank branch when an adapter is bound to `path`.
fn project<T: Element>(g: &mut Graph<T>, b: &Binding, x: NodeId, path: &str, rng: Option<&mut Rng>) -> Result<NodeId> {
    let base = g.linear(x, b.node(path)?)?;
    match b.adapter(path) {
        Some(ad) => crate::lora::add_branch(g, x, base, ad, rng),
        None => Ok(base),
    }
}

fn norm<T: Element>(g: &mut Graph<T>, b: &Binding, x: NodeId, prefix: &str) -> Result<NodeId> {
    let gain = b.node(&format!("{prefix}.gain"))?;
    let bias = b.node(&format!("{prefix}.bias"))?;
    Ok(g.layer_norm(x, gain, bias, T::from_f64_lossy(LN_EPS))?)
}

/// Records the full decoder stack; returns logits of shape `len × vocab`.
///
/// Passing `rng` puts the pass in training mode (dropout active).
pub fn forward<T: Element>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    b: &Binding,
    ids: &[u32],
    mode: AttentionMode,
    mut rng: Option<&mut Rng>,
) -> Result<NodeId> {
    let ids = check_ids(cfg, ids)?;
    let n = ids.len();
    let dh = cfg.head_dim();
    let inv_sqrt = T::from_f64_lossy(1.0 / (dh as f64).sqrt());

    let tok = g.embedding(b.node("embed.tokens")?, &ids)?;
    let positions: Vec<usize> = (0..n).collect();
    let pos = g.embedding(b.node("embed.positions")?, &positions)?;
    let mut h = g.add(tok, pos)?;

    for l in 0..cfg.n_layers {
        let x = norm(g, b, h, &layer_path(l, "ln1"))?;
        let q = project(g, b, x, &layer_path(l, "attn.wq"), rng.as_deref_mut())?;
        let k = project(g, b, x, &layer_path(l, "attn.wk"), rng.as_deref_mut())?;
        let v = project(g, b, x, &layer_path(l, "attn.wv"), rng.as_deref_mut())?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let (qh, kh, vh) = if cfg.n_heads == 1 {
                (q, k, v)
            } else {
                (g.slice_cols(q, hd * dh, dh)?, g.slice_cols(k, hd * dh, dh)?, g.slice_cols(v, hd * dh, dh)?)
            };
            let scores = g.matmul_t(qh, kh, false, true)?;
            let mut scores = g.scale(scores, inv_sqrt);
            if mode == AttentionMode::Causal {
                scores = g.causal_mask(scores)?;
            }
            let attn = g.softmax(scores, 1)?;
            heads.push(g.matmul(attn, vh)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        let a = project(g, b, joined, &layer_path(l, "attn.wo"), rng.as_deref_mut())?;
        let a = dropout(g, a, cfg.dropout_rate, rng.as_deref_mut())?;
        h = g.add(h, a)?;

        let x = norm(g, b, h, &layer_path(l, "ln2"))?;
        let f = project(g, b, x, &layer_path(l, "ffn.w1"), rng.as_deref_mut())?;
        let f = g.add_row(f, b.node(&layer_path(l, "ffn.b1"))?)?;
        let f = g.gelu(f);
        let f = project(g, b, f, &layer_path(l, "ffn.w2"), rng.as_deref_mut())?;
        let f = g.add_row(f, b.node(&layer_path(l, "ffn.b2"))?)?;
        let f = dropout(g, f, cfg.dropout_rate, rng.as_deref_mut())?;
        h = g.add(h, f)?;
    }
    let h = norm(g, b, h, "final_ln")?;
    project(g, b, h, "head", rng)
}

/// Evaluation-mode logits as a plain tensor.
pub fn logits<T: Element, M: LanguageModel<T>>(model: &M, ids: &[u32], mode: AttentionMode) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let b = model.bind_frozen(&mut g);
    let out = forward(&mut g, model.config(), &b, ids, mode, None)?;
    Ok(g.value(out).clone())
}

/// Cross-entropy of `targets` at the positions selected by `mask`, after a
/// forward pass over `input`.
#[allow(clippy::too_many_arguments)]
pub fn token_loss<T: Element>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    b: &Binding,
    input: &[u32],
    targets: &[u32],
    mask: &[bool],
    mode: AttentionMode,
    reduction: Reduction,
    rng: Option<&mut Rng>,
) -> Result<NodeId> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let out = forward(g, cfg, b, input, mode, rng)?;
    let targets: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
    Ok(g.cross_entropy(out, &targets, Some(mask), reduction)?)
}

/// A masked-language-modeling example: `input_ids` has the positions in
/// `mask_set` replaced by the mask token; `target_ids` holds the originals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmBatch {
    pub input_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    pub mask_set: Vec<bool>,
}

impl MlmBatch {
    pub fn new(input_ids: Vec<u32>, target_ids: Vec<u32>, mask_set: Vec<bool>) -> Result<Self> {
        if input_ids.len() != target_ids.len() || input_ids.len() != mask_set.len() {
            return Err(Error::Hyper(format!(
                "mlm batch lengths differ: {} / {} / {}",
                input_ids.len(),
                target_ids.len(),
                mask_set.len()
            )));
        }
        if !mask_set.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        Ok(MlmBatch { input_ids, target_ids, mask_set })
    }

    /// Selects each position independently with probability `rate` (at least
    /// one position always) and replaces it with the mask token.
    pub fn corrupt(ids: &[u32], rate: f64, rng: &mut Rng) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("mlm sequence"));
        }
        let mut mask_set: Vec<bool> = ids.iter().map(|_| rng.gen::<f64>() < rate).collect();
        if !mask_set.iter().any(|&m| m) {
            let i = rng.gen_range(0..ids.len());
            mask_set[i] = true;
        }
        let input_ids = ids.iter().zip(&mask_set).map(|(&id, &m)| if m { MASK } else { id }).collect();
        Self::new(input_ids, ids.to_vec(), mask_set)
    }

    pub fn loss_node<T: Element>(
        &self,
        g: &mut Graph<T>,
        cfg: &ModelConfig,
        b: &Binding,
        reduction: Reduction,
        rng: Option<&mut Rng>,
    ) -> Result<NodeId> {
        token_loss(
            g,
            cfg,
            b,
            &self.input_ids,
            &self.target_ids,
            &self.mask_set,
            AttentionMode::Bidirectional,
            reduction,
            rng,
        )
    }
}

/// `−Σ_{i∈M} log P(x_i | x_\M)` (or its per-position mean), bidirectional.
pub fn mlm_loss<T: Element, M: LanguageModel<T>>(model: &M, batch: &MlmBatch, reduction: Reduction) -> Result<f64> {
    let mut g = Graph::new();
    let b = model.bind_frozen(&mut g);
    let loss = batch.loss_node(&mut g, model.config(), &b, reduction, None)?;
    Ok(g.value(loss).item().as_f64())
}

/// Next-token loss over positions `1..n`: the mean over targets `ids[1..]`.
pub fn causal_lm_loss_node<T: Element>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    b: &Binding,
    ids: &[u32],
    rng: Option<&mut Rng>,
) -> Result<NodeId> {
    if ids.len() < 2 {
        return Err(Error::SequenceTooShort { len: ids.len(), min: 2 });
    }
    let n = ids.len();
    let input = &ids[..n - 1];
    let targets = &ids[1..];
    let mask = vec![true; n - 1];
    token_loss(g, cfg, b, input, targets, &mask, AttentionMode::Causal, Reduction::Mean, rng)
}

pub fn causal_lm_loss<T: Element, M: LanguageModel<T>>(model: &M, ids: &[u32]) -> Result<f64> {
    let mut g = Graph::new();
    let b = model.bind_frozen(&mut g);
    let loss = causal_lm_loss_node(&mut g, model.config(), &b, ids, None)?;
    Ok(g.value(loss).item().as_f64())
}

/// `Σ_t log P(response_t | prompt, response_<t)` as a graph scalar.
pub fn sequence_logprob_node<T: Element>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    b: &Binding,
    prompt: &[u32],
    response: &[u32],
    rng: Option<&mut Rng>,
) -> Result<NodeId> {
    if prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    if response.is_empty() {
        return Err(Error::Empty("response"));
    }
    let full: Vec<u32> = prompt.iter().chain(response).copied().collect();
    let input = &full[..full.len() - 1];
    let targets = &full[1..];
    let mask: Vec<bool> = (0..input.len()).map(|i| i + 1 >= prompt.len()).collect();
    let nll = token_loss(g, cfg, b, input, targets, &mask, AttentionMode::Causal, Reduction::Sum, rng)?;
    Ok(g.scale(nll, -T::one()))
}

pub fn sequence_logprob<T: Element, M: LanguageModel<T>>(model: &M, prompt: &[u32], response: &[u32]) -> Result<f64> {
    let mut g = Graph::new();
    let b = model.bind_frozen(&mut g);
    let lp = sequence_logprob_node(&mut g, model.config(), &b, prompt, response, None)?;
    Ok(g.value(lp).item().as_f64())
}

/// Greedy decoding. Returns the prompt followed by up to `max_new` tokens;
/// stops after emitting the end-of-sequence token. The context is cropped to
/// the last `max_seq_len` tokens.
pub fn generate<T: Element, M: LanguageModel<T>>(model: &M, prompt: &[u32], max_new: usize) -> Result<Vec<u32>> {
    if prompt.is_empty() {
        return Err(Error::Empty("prompt"));
    }
    let cfg = model.config();
    let mut out = prompt.to_vec();
    for _ in 0..max_new {
        let start = out.len().saturating_sub(cfg.max_seq_len);
        let l = logits(model, &out[start..], AttentionMode::Causal)?;
        let (rows, v) = l.dims2("generate")?;
        let last = &l.data()[(rows - 1) * v..];
        let mut best = 0;
        for (i, &x) in last.iter().enumerate() {
            if x > last[best] {
                best = i;
            }
        }
        out.push(best as u32);
        if best as u32 == EOS {
            break;
        }
    }
    Ok(out)
}
