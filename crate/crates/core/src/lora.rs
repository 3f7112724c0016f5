//! Low-rank adaptation.
//!
//! A frozen weight `W` (`d×k`, stored out×in) gains a trainable update
//! `ΔW = scale·B·A` with `B: d×r` zero-initialized and `A: r×k` random, so
//! the adapted layer computes `y = W·x + scale·B·(A·x)` and starts out
//! identical to the base layer. `scale = alpha / r` by default.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    attention_projection_paths, read_container, write_container, AdapterNodes, Binding, Container, ContainerKind,
    LanguageModel, ModelConfig, TransformerLm,
};
use crate::rng::Rng;
use crate::tensor::{Element, Graph, NodeId, Tensor};

/// How `alpha` turns into the branch multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LoraScaling {
    /// `alpha / r`.
    #[default]
    AlphaOverRank,
    /// Always 1, i.e. `ΔW = BA` exactly.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
    #[serde(default)]
    pub scaling: LoraScaling,
    /// Weight paths to adapt; `None` means every attention projection.
    #[serde(default)]
    pub targets: Option<Vec<String>>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig { rank: 16, alpha: 8.0, dropout: 0.05, scaling: LoraScaling::AlphaOverRank, targets: None }
    }
}

impl LoraConfig {
    pub fn scale(&self) -> f64 {
        match self.scaling {
            LoraScaling::AlphaOverRank => self.alpha / self.rank as f64,
            LoraScaling::Unit => 1.0,
        }
    }

    pub fn resolved_targets(&self, model: &ModelConfig) -> Vec<String> {
        self.targets.clone().unwrap_or_else(|| attention_projection_paths(model))
    }
}

/// One `(B, A)` pair attached to the weight at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    pub target: String,
    /// `d×r`.
    pub b: Tensor<T>,
    /// `r×k`.
    pub a: Tensor<T>,
    pub rank: usize,
    pub alpha: f64,
    pub scale: f64,
    pub dropout: f64,
}

impl<T: Element> LoraAdapter<T> {
    /// Zero `B`, and `A` uniform in `±1/√k`.
    pub fn new(target: impl Into<String>, d: usize, k: usize, cfg: &LoraConfig, rng: &mut Rng) -> Result<Self> {
        let target = target.into();
        if cfg.rank == 0 || cfg.rank > d.min(k) {
            return Err(Error::BadTarget {
                path: target,
                reason: format!("rank {} must be in 1..={}", cfg.rank, d.min(k)),
            });
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Hyper(format!("lora dropout {} not in [0, 1)", cfg.dropout)));
        }
        let bound = 1.0 / (k as f64).sqrt();
        let a = (0..cfg.rank * k).map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound))).collect();
        Ok(LoraAdapter {
            target,
            b: Tensor::zeros([d, cfg.rank]),
            a: Tensor::new([cfg.rank, k], a)?,
            rank: cfg.rank,
            alpha: cfg.alpha,
            scale: cfg.scale(),
            dropout: cfg.dropout,
        })
    }

    /// `(d, k)` of the adapted weight.
    pub fn dims(&self) -> (usize, usize) {
        (self.b.shape()[0], self.a.shape()[1])
    }

    /// Trainable scalars: `r × (d + k)`.
    pub fn param_count(&self) -> usize {
        let (d, k) = self.dims();
        self.rank * (d + k)
    }

    /// `scale · B·A`.
    pub fn delta(&self) -> Tensor<T> {
        self.b.matmul(&self.a).expect("adapter shapes agree").scale(T::from_f64_lossy(self.scale))
    }

    fn check_weight(&self, w: &Tensor<T>) -> Result<()> {
        let (d, k) = self.dims();
        if w.shape() != [d, k] {
            return Err(Error::BadTarget {
                path: self.target.clone(),
                reason: format!("weight shape {:?} does not match adapter {d}×{k}", w.shape()),
            });
        }
        Ok(())
    }

    /// `W' = W + scale·BA`.
    pub fn merge(&self, w: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_weight(w)?;
        Ok(w.add(&self.delta())?)
    }

    /// `W' − scale·BA`, the inverse of [`LoraAdapter::merge`].
    pub fn unmerge(&self, merged: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_weight(merged)?;
        Ok(merged.sub(&self.delta())?)
    }
}

/// `y = W·x + scale·B·(A·x)` without building a graph. `x` is either a
/// single length-`k` vector or an `n×k` batch of row vectors; dropout is not
/// applied (evaluation mode).
pub fn adapted_forward<T: Element>(w: &Tensor<T>, adapter: &LoraAdapter<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    adapter.check_weight(w)?;
    let (d, k) = adapter.dims();
    let rows = match x.shape() {
        [len] if *len == k => x.clone().reshape([1, k])?,
        [_, len] if *len == k => x.clone(),
        _ => {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "adapted_forward",
                lhs: w.shape().to_vec(),
                rhs: x.shape().to_vec(),
            }
            .into())
        }
    };
    let base = rows.matmul(&w.transpose()?)?;
    let ax = rows.matmul(&adapter.a.transpose()?)?;
    let bax = ax.matmul(&adapter.b.transpose()?)?;
    let y = base.add(&bax.scale(T::from_f64_lossy(adapter.scale)))?;
    if x.shape().len() == 1 {
        Ok(y.reshape([d])?)
    } else {
        Ok(y)
    }
}

/// Graph form: adds `scale·B·(A·dropout(x))` to `base`.
pub(crate) fn add_branch<T: Element>(
    g: &mut Graph<T>,
    x: NodeId,
    base: NodeId,
    ad: &AdapterNodes,
    rng: Option<&mut Rng>,
) -> Result<NodeId> {
    let xin = crate::model::forward_dropout(g, x, ad.dropout, rng)?;
    let ax = g.linear(xin, ad.a)?;
    let bax = g.linear(ax, ad.b)?;
    let scaled = g.scale(bax, T::from_f64_lossy(ad.scale));
    Ok(g.add(base, scaled)?)
}

/// A frozen base model with adapters on some of its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedModel<T> {
    base: TransformerLm<T>,
    adapters: BTreeMap<String, LoraAdapter<T>>,
}

fn a_name(target: &str) -> String {
    format!("{target}.lora_a")
}

fn b_name(target: &str) -> String {
    format!("{target}.lora_b")
}

/// Freezes `base` and attaches a fresh adapter to each target path.
pub fn attach<T: Element>(
    base: TransformerLm<T>,
    targets: &[String],
    cfg: &LoraConfig,
    rng: &mut Rng,
) -> Result<AdaptedModel<T>> {
    let mut adapters = BTreeMap::new();
    for target in targets {
        let w = base.params().get(target)?;
        let (d, k) = w.dims2("lora target").map_err(|_| Error::BadTarget {
            path: target.clone(),
            reason: format!("not a matrix (shape {:?})", w.shape()),
        })?;
        if adapters.contains_key(target) {
            return Err(Error::BadTarget { path: target.clone(), reason: "listed twice".into() });
        }
        adapters.insert(target.clone(), LoraAdapter::new(target.clone(), d, k, cfg, rng)?);
    }
    Ok(AdaptedModel { base, adapters })
}

impl<T: Element> AdaptedModel<T> {
    pub fn base(&self) -> &TransformerLm<T> {
        &self.base
    }

    pub fn adapters(&self) -> &BTreeMap<String, LoraAdapter<T>> {
        &self.adapters
    }

    pub fn adapters_mut(&mut self) -> &mut BTreeMap<String, LoraAdapter<T>> {
        &mut self.adapters
    }

    /// Names and sizes of the trainable tensors, plus their total. Only
    /// adapter matrices appear; base parameters never do.
    pub fn trainable_parameters(&self) -> (Vec<(String, usize)>, usize) {
        let mut list = Vec::new();
        for (target, ad) in &self.adapters {
            list.push((a_name(target), ad.a.numel()));
            list.push((b_name(target), ad.b.numel()));
        }
        let total = list.iter().map(|(_, n)| n).sum();
        (list, total)
    }

    /// Folds every adapter into its weight and returns the plain model.
    pub fn merge(&self) -> Result<TransformerLm<T>> {
        let mut merged = self.base.clone();
        for (target, ad) in &self.adapters {
            let w = merged.params().get(target)?;
            let w2 = ad.merge(w)?;
            *merged.params_mut().get_mut(target)? = w2;
        }
        Ok(merged)
    }

    pub fn into_base(self) -> TransformerLm<T> {
        self.base
    }

    /// Adapter container: `<target>.lora_a` / `<target>.lora_b` tensors with
    /// rank, alpha, scale and dropout per target in the metadata.
    pub fn adapters_to_bytes(&self) -> Vec<u8> {
        let mut tensors = BTreeMap::new();
        let mut meta = serde_json::Map::new();
        for (target, ad) in &self.adapters {
            tensors.insert(a_name(target), ad.a.clone());
            tensors.insert(b_name(target), ad.b.clone());
            meta.insert(
                target.clone(),
                serde_json::json!({
                    "rank": ad.rank,
                    "alpha": ad.alpha,
                    "scale": ad.scale,
                    "dropout": ad.dropout,
                }),
            );
        }
        write_container(&Container {
            kind: ContainerKind::LoraAdapters,
            meta: serde_json::Value::Object(meta),
            tensors,
        })
    }

    /// Loads an adapter container onto `base`. Any shape disagreement is an
    /// error naming the offending path.
    pub fn load_adapters(base: TransformerLm<T>, bytes: &[u8]) -> Result<Self> {
        let mut c = read_container::<T>(bytes)?;
        if c.kind != ContainerKind::LoraAdapters {
            return Err(Error::Checkpoint("container does not hold LoRA adapters".into()));
        }
        let meta = c.meta.as_object().ok_or_else(|| Error::Checkpoint("adapter metadata is not an object".into()))?;
        let mut adapters = BTreeMap::new();
        for (target, info) in meta {
            let field = |k: &str| {
                info.get(k)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| Error::Checkpoint(format!("`{target}`: missing `{k}`")))
            };
            let missing = |n: String| Error::Checkpoint(format!("missing tensor `{n}`"));
            let a = c.tensors.remove(&a_name(target)).ok_or_else(|| missing(a_name(target)))?;
            let b = c.tensors.remove(&b_name(target)).ok_or_else(|| missing(b_name(target)))?;
            let rank = field("rank")? as usize;
            let w = base.params().get(target)?;
            let (d, k) = w
                .dims2("lora target")
                .map_err(|_| Error::BadTarget { path: target.clone(), reason: "not a matrix".into() })?;
            if a.shape() != [rank, k] || b.shape() != [d, rank] {
                return Err(Error::BadTarget {
                    path: target.clone(),
                    reason: format!(
                        "adapter A {:?} / B {:?} incompatible with weight {d}×{k} at rank {rank}",
                        a.shape(),
                        b.shape()
                    ),
                });
            }
            adapters.insert(
                target.clone(),
                LoraAdapter {
                    target: target.clone(),
                    a,
                    b,
                    rank,
                    alpha: field("alpha")?,
                    scale: field("scale")?,
                    dropout: field("dropout")?,
                },
            );
        }
        if let Some(extra) = c.tensors.keys().next() {
            return Err(Error::Checkpoint(format!("tensor `{extra}` has no adapter metadata")));
        }
        Ok(AdaptedModel { base, adapters })
    }

    fn bind_with(&self, g: &mut Graph<T>, trainable: bool) -> Binding {
        let mut binding = Binding::new();
        binding.bind_params(g, self.base.params(), false);
        for (target, ad) in &self.adapters {
            let a = g.leaf(ad.a.clone(), trainable);
            let b = g.leaf(ad.b.clone(), trainable);
            binding.insert(a_name(target), a, trainable);
            binding.insert(b_name(target), b, trainable);
            binding.attach_adapter(target.clone(), AdapterNodes { a, b, scale: ad.scale, dropout: ad.dropout });
        }
        binding
    }
}

impl<T: Element> LanguageModel<T> for AdaptedModel<T> {
    fn config(&self) -> &ModelConfig {
        self.base.config()
    }

    fn bind(&self, g: &mut Graph<T>) -> Binding {
        self.bind_with(g, true)
    }

    fn bind_frozen(&self, g: &mut Graph<T>) -> Binding {
        self.bind_with(g, false)
    }

    fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (target, ad) in self.adapters.iter_mut() {
            out.push((a_name(target), &mut ad.a));
            out.push((b_name(target), &mut ad.b));
        }
        out
    }
}
