//! Decoder-only transformer language model.
//!
//! Parameters live in a [`ParamSet`] keyed by stable dotted paths
//! (`layers.0.attn.wq`, `head`, ...). A forward pass records them onto a
//! [`Graph`] through a [`Binding`]; LoRA adapters hook in by adding
//! low-rank branches to the binding.

mod checkpoint;
mod config;
mod forward;

pub use checkpoint::{read_container, write_container, Container, ContainerKind};
pub use config::ModelConfig;
pub(crate) use forward::dropout as forward_dropout;
pub use forward::{
    causal_lm_loss, causal_lm_loss_node, forward, generate, logits, mlm_loss, sequence_logprob, sequence_logprob_node,
    token_loss, AttentionMode, MlmBatch,
};

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Graph, NodeId, Tensor};

/// Named parameters with deterministic (sorted) iteration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: BTreeMap::new() }
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor<T>) {
        self.params.insert(path.into(), value);
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.params.get(path).ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor<T>> {
        self.params.get_mut(path).ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.params.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor<T>> {
        self.params
    }

    pub fn from_map(params: BTreeMap<String, Tensor<T>>) -> Self {
        ParamSet { params }
    }
}

/// Gradients keyed by parameter path.
pub type Grads<T> = BTreeMap<String, Tensor<T>>;

/// Graph handles of one low-rank branch attached to a weight.
#[derive(Debug, Clone, Copy)]
pub struct AdapterNodes {
    pub a: NodeId,
    pub b: NodeId,
    pub scale: f64,
    pub dropout: f64,
}

/// Parameter handles for one forward pass.
#[derive(Debug, Default)]
pub struct Binding {
    nodes: HashMap<String, NodeId>,
    adapters: HashMap<String, AdapterNodes>,
    trainable: Vec<(String, NodeId)>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records every parameter of `params` as a leaf. When `trainable` is
    /// set the leaves require gradients and are reported by [`Binding::grads`].
    pub fn bind_params<T: Element>(&mut self, g: &mut Graph<T>, params: &ParamSet<T>, trainable: bool) {
        for (name, value) in params.iter() {
            let id = g.leaf(value.clone(), trainable);
            self.nodes.insert(name.to_string(), id);
            if trainable {
                self.trainable.push((name.to_string(), id));
            }
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, id: NodeId, trainable: bool) {
        let name = name.into();
        if trainable {
            self.trainable.push((name.clone(), id));
        }
        self.nodes.insert(name, id);
    }

    pub fn attach_adapter(&mut self, target: impl Into<String>, nodes: AdapterNodes) {
        self.adapters.insert(target.into(), nodes);
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.nodes.get(name).copied().ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn adapter(&self, target: &str) -> Option<&AdapterNodes> {
        self.adapters.get(target)
    }

    /// Collects gradients of every trainable leaf after `Graph::backward`.
    pub fn grads<T: Element>(&self, g: &Graph<T>) -> Grads<T> {
        self.trainable
            .iter()
            .map(|(name, id)| {
                let grad = g.grad(*id).unwrap_or_else(|| Tensor::zeros(g.value(*id).shape().to_vec()));
                (name.clone(), grad)
            })
            .collect()
    }
}

/// Anything that can run the decoder forward pass.
pub trait LanguageModel<T: Element> {
    fn config(&self) -> &ModelConfig;

    /// Records parameters on `g`. Trainable leaves require gradients.
    fn bind(&self, g: &mut Graph<T>) -> Binding;

    /// Same as [`LanguageModel::bind`] but nothing requires a gradient.
    fn bind_frozen(&self, g: &mut Graph<T>) -> Binding;

    /// Mutable access to exactly the parameters an optimizer may update.
    fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;
}

/// The base model: every parameter trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLm<T> {
    config: ModelConfig,
    params: ParamSet<T>,
}

pub fn layer_path(layer: usize, leaf: &str) -> String {
    format!("layers.{layer}.{leaf}")
}

/// Paths of the four attention projections of every layer.
pub fn attention_projection_paths(config: &ModelConfig) -> Vec<String> {
    (0..config.n_layers).flat_map(|l| ["wq", "wk", "wv", "wo"].map(|w| layer_path(l, &format!("attn.{w}")))).collect()
}

impl<T: Element> TransformerLm<T> {
    /// Normal(0, 0.02) weights, unit layer-norm gains, zero biases and a
    /// zero output head, so an untrained model predicts the uniform
    /// distribution.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let std = 0.02;
        let (v, d, f) = (config.vocab_size, config.d_model, config.d_ff);
        let mut p = ParamSet::new();
        p.insert("embed.tokens", Tensor::randn([v, d], std, rng));
        p.insert("embed.positions", Tensor::randn([config.max_seq_len, d], std, rng));
        for l in 0..config.n_layers {
            for ln in ["ln1", "ln2"] {
                p.insert(layer_path(l, &format!("{ln}.gain")), Tensor::full([d], T::one()));
                p.insert(layer_path(l, &format!("{ln}.bias")), Tensor::zeros([d]));
            }
            for w in ["wq", "wk", "wv", "wo"] {
                p.insert(layer_path(l, &format!("attn.{w}")), Tensor::randn([d, d], std, rng));
            }
            p.insert(layer_path(l, "ffn.w1"), Tensor::randn([f, d], std, rng));
            p.insert(layer_path(l, "ffn.b1"), Tensor::zeros([f]));
            p.insert(layer_path(l, "ffn.w2"), Tensor::randn([d, f], std, rng));
            p.insert(layer_path(l, "ffn.b2"), Tensor::zeros([d]));
        }
        p.insert("final_ln.gain", Tensor::full([d], T::one()));
        p.insert("final_ln.bias", Tensor::zeros([d]));
        p.insert("head", Tensor::zeros([v, d]));
        Ok(TransformerLm { config, params: p })
    }

    /// Builds a model from explicit parameters, checking every expected path
    /// and shape is present.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let reference = TransformerLm::<T>::init(config.clone(), &mut crate::rng::seeded(0))?;
        for (name, want) in reference.params.iter() {
            let got = params.get(name)?;
            if got.shape() != want.shape() {
                return Err(Error::BadTarget {
                    path: name.to_string(),
                    reason: format!("shape {:?}, expected {:?}", got.shape(), want.shape()),
                });
            }
        }
        if params.len() != reference.params.len() {
            let extra = params.names().find(|n| !reference.params.contains(n)).unwrap_or_default().to_string();
            return Err(Error::UnknownParam(extra));
        }
        Ok(TransformerLm { config, params })
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Element>(&self) -> TransformerLm<U> {
        let mut p = ParamSet::new();
        for (name, t) in self.params.iter() {
            p.insert(name, t.cast());
        }
        TransformerLm { config: self.config.clone(), params: p }
    }

    /// Replaces the zero output head with small random weights. Used by
    /// tests that need non-degenerate gradients everywhere.
    pub fn randomize_head(&mut self, std: f64, rng: &mut Rng) {
        let shape = self.params.get("head").expect("head exists").shape().to_vec();
        self.params.insert("head", Tensor::randn(shape, std, rng));
    }
}

impl<T: Element> LanguageModel<T> for TransformerLm<T> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn bind(&self, g: &mut Graph<T>) -> Binding {
        let mut b = Binding::new();
        b.bind_params(g, &self.params, true);
        b
    }

    fn bind_frozen(&self, g: &mut Graph<T>) -> Binding {
        let mut b = Binding::new();
        b.bind_params(g, &self.params, false);
        b
    }

    fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(n, t)| (n.to_string(), t)).collect()
    }
}
