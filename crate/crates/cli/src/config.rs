//! Run configuration.
//!
//! A run is described by one TOML file. Top-level keys are `seed`, `out_dir`,
//! the optional `stage` and `pipeline`; every other setting lives in a table
//! named after what it configures:
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/toy"
//! pipeline = ["data", "tokenize", "pretrain", "sft", "dpo", "eval"]
//!
//! [paths]
//! manifest = "data/corpus/manifest.jsonl"
//!
//! [model]
//! d_model = 32
//!
//! [pretrain]
//! steps = 40
//! ```
//!
//! Omitted keys take the module defaults. Unknown keys are rejected. Relative
//! paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use clinlm_core::dpo::DpoConfig;
use clinlm_core::lora::LoraConfig;
use clinlm_core::model::ModelConfig;
use clinlm_core::train::{PretrainConfig, SftConfig};
use clinlm_data::pipeline::DataConfig;
use clinlm_eval::files::ScoreOptions;
use clinlm_eval::tasks::TaskId;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Tokenize,
    Pretrain,
    Sft,
    Dpo,
    Data,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Tokenize => "tokenize",
            Stage::Pretrain => "pretrain",
            Stage::Sft => "sft",
            Stage::Dpo => "dpo",
            Stage::Data => "data",
            Stage::Eval => "eval",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Input files. Unset entries default to the matching output of an earlier
/// stage under `out_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Plain text with one document per line, or JSONL documents.
    pub corpus: Option<PathBuf>,
    pub tokenizer: Option<PathBuf>,
    pub base_model: Option<PathBuf>,
    pub sft_model: Option<PathBuf>,
    pub eval_model: Option<PathBuf>,
    pub sft_data: Option<PathBuf>,
    pub dpo_data: Option<PathBuf>,
    /// Corpus manifest for the data stage.
    pub manifest: Option<PathBuf>,
    pub drugs: Option<PathBuf>,
    pub public_sft: Option<PathBuf>,
    pub safety_sft: Option<PathBuf>,
    pub feedback: Option<PathBuf>,
    /// Canned generator replies, one `{"reply": ...}` or `{"error": ...}` per line.
    pub generator_replies: Option<PathBuf>,
    pub review: Option<PathBuf>,
}

impl Paths {
    fn each_mut(&mut self) -> [&mut Option<PathBuf>; 14] {
        [
            &mut self.corpus,
            &mut self.tokenizer,
            &mut self.base_model,
            &mut self.sft_model,
            &mut self.eval_model,
            &mut self.sft_data,
            &mut self.dpo_data,
            &mut self.manifest,
            &mut self.drugs,
            &mut self.public_sft,
            &mut self.safety_sft,
            &mut self.feedback,
            &mut self.generator_replies,
            &mut self.review,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { vocab_size: 768 }
    }
}

/// Model shape; the vocabulary size comes from the tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { d_model: 128, n_layers: 4, n_heads: 4, d_ff: 512, max_seq_len: 64, dropout_rate: 0.0 }
    }
}

impl ModelSection {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTask {
    pub task: TaskId,
    pub gold: PathBuf,
    pub pred: PathBuf,
}

/// Multiple-choice questions answered by the model under evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McqSection {
    pub questions: PathBuf,
    /// Prompt text with `{question}`, `{A}`, `{B}`, `{C}` and `{D}` slots.
    pub template: PathBuf,
    #[serde(default = "default_max_new")]
    pub max_new: usize,
}

fn default_max_new() -> usize {
    8
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tasks: Vec<EvalTask>,
    pub options: ScoreOptions,
    pub mcq: Option<McqSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// When set, the only stage this config may run.
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub sft: SftConfig,
    #[serde(default)]
    pub lora: LoraConfig,
    #[serde(default)]
    pub dpo: DpoConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Drops `.` components and folds `dir/..` pairs without touching the disk.
fn lexical_clean(p: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir if matches!(out.components().next_back(), Some(Component::Normal(_))) => {
                out.pop();
            }
            c => out.push(c),
        }
    }
    out
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    /// Parses `text` and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        let resolve = |p: &mut PathBuf| *p = lexical_clean(&base.join(&*p));
        resolve(&mut cfg.out_dir);
        for p in cfg.paths.each_mut().into_iter().flatten() {
            resolve(p);
        }
        for t in &mut cfg.eval.tasks {
            resolve(&mut t.gold);
            resolve(&mut t.pred);
        }
        if let Some(m) = &mut cfg.eval.mcq {
            resolve(&mut m.questions);
            resolve(&mut m.template);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Hyperparameter checks that need no input files. The vocabulary size
    /// is unknown until the tokenizer exists, so model checks use the
    /// configured target size.
    pub fn validate(&self) -> Result<()> {
        if self.tokenizer.vocab_size <= clinlm_core::tokenizer::BASE_VOCAB {
            return Err(invalid("tokenizer.vocab_size", format!("must exceed {}", clinlm_core::tokenizer::BASE_VOCAB)));
        }
        let model = self.model.with_vocab(self.tokenizer.vocab_size);
        model.validate().map_err(|e| invalid("model", e))?;
        self.pretrain.validate(&model).map_err(|e| invalid("pretrain", e))?;
        if self.lora.rank == 0 {
            return Err(invalid("lora.rank", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.lora.dropout) {
            return Err(invalid("lora.dropout", "must be in [0, 1)"));
        }
        if self.sft.epochs == 0 || self.sft.batch_size == 0 || self.sft.accumulation == 0 {
            return Err(invalid("sft", "epochs, batch_size and accumulation must be positive"));
        }
        if self.dpo.beta.is_nan() || self.dpo.beta <= 0.0 || self.dpo.batch_size == 0 || self.dpo.accumulation == 0 {
            return Err(invalid("dpo", "beta, batch_size and accumulation must be positive"));
        }
        self.data.dedup.validate().map_err(|e| invalid("data.dedup", e))?;
        if self.eval.mcq.as_ref().is_some_and(|m| m.max_new == 0) {
            return Err(invalid("eval.mcq.max_new", "must be positive"));
        }
        Ok(())
    }
}
