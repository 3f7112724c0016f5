//! Stage execution: input binding, pre-flight checks, staged output and the
//! manifest.
//!
//! Each stage writes into `{out_dir}/{stage}/`. Outputs are first written to
//! a hidden staging directory inside `out_dir`, which replaces the stage
//! directory only after everything, manifest included, is on disk. A failed
//! stage leaves no partial outputs.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use clinlm_core::dpo::{encode_triple, implicit_margins, parse_triples, train_dpo};
use clinlm_core::lora::attach;
use clinlm_core::model::{generate, LanguageModel, TransformerLm};
use clinlm_core::optim::StepEvent;
use clinlm_core::rng::{seeded, Rng};
use clinlm_core::tokenizer::{BpeVocab, BOS, EOS};
use clinlm_core::train::{encode_pair, pretrain, train_sft, TrainReport};
use clinlm_data::corpus::RawDocument;
use clinlm_data::feedback::Feedback;
use clinlm_data::generate::{GeneratorError, ReviewEntry, StubClient};
use clinlm_data::pipeline::DataInputs;
use clinlm_data::sft::{Origin, PairInput};
use clinlm_eval::files::score_task;
use clinlm_eval::mcq::{mcq_accuracy_parsed, Choice, CLINICAL_QA_REFERENCE};
use clinlm_eval::tasks::{EvalReport, TaskId, TaskResult};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{RunConfig, Stage};
use crate::error::{io, CliError, Result};
use crate::fsio::{hash_file, write_atomic};
use crate::manifest::{config_hash, display_path, InputRecord, Manifest};

/// A resolved input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub field: String,
    pub path: PathBuf,
}

/// Files each stage writes, besides `manifest.json`.
pub fn outputs_of(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Tokenize => &["tokenizer.txt", "stats.json"],
        Stage::Pretrain => &["model.ckpt", "metrics.jsonl", "evals.jsonl"],
        Stage::Sft => &["adapter.bin", "model.ckpt", "metrics.jsonl"],
        Stage::Dpo => &["adapter.bin", "model.ckpt", "metrics.jsonl", "margins.jsonl", "summary.json"],
        Stage::Data => &[
            "corpus.jsonl",
            "dedup.jsonl",
            "candidates.jsonl",
            "sft.jsonl",
            "sft.provenance.jsonl",
            "dpo.jsonl",
            "report.jsonl",
        ],
        Stage::Eval => &["report.json", "report.txt", "mcq_predictions.jsonl"],
    }
}

pub fn stage_dir(cfg: &RunConfig, stage: Stage) -> PathBuf {
    cfg.out_dir.join(stage.name())
}

#[derive(Clone, Copy)]
enum Need {
    Required,
    Optional,
}

/// Default source of a path field: the stage producing it and the file name.
fn producer(field: &str) -> Option<(Stage, &'static str)> {
    Some(match field {
        "corpus" => (Stage::Data, "corpus.jsonl"),
        "tokenizer" => (Stage::Tokenize, "tokenizer.txt"),
        "base_model" => (Stage::Pretrain, "model.ckpt"),
        "sft_model" => (Stage::Sft, "model.ckpt"),
        "sft_data" => (Stage::Data, "sft.jsonl"),
        "dpo_data" => (Stage::Data, "dpo.jsonl"),
        _ => return None,
    })
}

fn declared(cfg: &RunConfig, field: &str) -> Option<PathBuf> {
    let p = &cfg.paths;
    match field {
        "corpus" => p.corpus.clone(),
        "tokenizer" => p.tokenizer.clone(),
        "base_model" => p.base_model.clone(),
        "sft_model" => p.sft_model.clone(),
        "eval_model" => p.eval_model.clone(),
        "sft_data" => p.sft_data.clone(),
        "dpo_data" => p.dpo_data.clone(),
        "manifest" => p.manifest.clone(),
        "drugs" => p.drugs.clone(),
        "public_sft" => p.public_sft.clone(),
        "safety_sft" => p.safety_sft.clone(),
        "feedback" => p.feedback.clone(),
        "generator_replies" => p.generator_replies.clone(),
        "review" => p.review.clone(),
        _ => unreachable!("unknown path field {field}"),
    }
}

fn path_fields(cfg: &RunConfig, stage: Stage) -> Vec<(&'static str, Need)> {
    use Need::*;
    match stage {
        Stage::Tokenize => vec![("corpus", Required)],
        Stage::Pretrain => vec![("corpus", Required), ("tokenizer", Required)],
        Stage::Sft => vec![("tokenizer", Required), ("base_model", Required), ("sft_data", Required)],
        Stage::Dpo => vec![("tokenizer", Required), ("sft_model", Required), ("dpo_data", Required)],
        Stage::Data => vec![
            ("manifest", Required),
            ("drugs", Optional),
            ("public_sft", Optional),
            ("safety_sft", Optional),
            ("feedback", Optional),
            ("generator_replies", Optional),
            ("review", Optional),
        ],
        Stage::Eval if cfg.eval.mcq.is_some() => vec![("tokenizer", Required), ("eval_model", Required)],
        Stage::Eval => vec![],
    }
}

/// Binds every input of `stage`. `prior` lists the stages that run before it
/// in the same invocation; their outputs count as present.
pub fn resolve_inputs(cfg: &RunConfig, stage: Stage, prior: &[Stage]) -> Result<Vec<Input>> {
    let planned: HashSet<PathBuf> =
        prior.iter().flat_map(|&s| outputs_of(s).iter().map(move |f| stage_dir(cfg, s).join(f))).collect();
    let available = |p: &Path| planned.contains(p) || p.is_file();
    let mut inputs = Vec::new();

    for (field, need) in path_fields(cfg, stage) {
        let path = match declared(cfg, field) {
            Some(p) => {
                if !available(&p) {
                    return Err(CliError::Config(format!("paths.{field}: `{}` does not exist", p.display())));
                }
                p
            }
            None => {
                let candidates: Vec<PathBuf> = if field == "eval_model" {
                    let models = [Stage::Dpo, Stage::Sft, Stage::Pretrain];
                    match prior.iter().rev().find(|s| models.contains(s)) {
                        Some(&s) => vec![stage_dir(cfg, s).join("model.ckpt")],
                        None => models.iter().map(|&s| stage_dir(cfg, s).join("model.ckpt")).collect(),
                    }
                } else {
                    producer(field).map(|(s, f)| vec![stage_dir(cfg, s).join(f)]).unwrap_or_default()
                };
                match (candidates.into_iter().find(|p| available(p)), need) {
                    (Some(p), _) => p,
                    (None, Need::Optional) => continue,
                    (None, Need::Required) => {
                        let hint = producer(field)
                            .map(|(s, _)| format!("; no earlier `{s}` stage produces it"))
                            .unwrap_or_default();
                        return Err(CliError::Config(format!(
                            "paths.{field}: not set and no default input exists{hint}"
                        )));
                    }
                }
            }
        };
        inputs.push(Input { field: format!("paths.{field}"), path });
    }

    if stage == Stage::Eval {
        if cfg.eval.tasks.is_empty() && cfg.eval.mcq.is_none() {
            return Err(CliError::Config("eval.tasks: no tasks and no eval.mcq configured".into()));
        }
        let mut extra = Vec::new();
        for (i, t) in cfg.eval.tasks.iter().enumerate() {
            extra.push((format!("eval.tasks[{i}].gold"), t.gold.clone()));
            extra.push((format!("eval.tasks[{i}].pred"), t.pred.clone()));
        }
        if let Some(m) = &cfg.eval.mcq {
            extra.push(("eval.mcq.questions".into(), m.questions.clone()));
            extra.push(("eval.mcq.template".into(), m.template.clone()));
        }
        for (field, path) in extra {
            if !available(&path) {
                return Err(CliError::Config(format!("{field}: `{}` does not exist", path.display())));
            }
            inputs.push(Input { field, path });
        }
    }
    Ok(inputs)
}

/// The settings a stage actually uses, defaults included.
pub fn effective_config(cfg: &RunConfig, stage: Stage) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    m.insert("seed".into(), json!(cfg.seed));
    match stage {
        Stage::Tokenize => {
            m.insert("tokenizer".into(), v(&cfg.tokenizer));
        }
        Stage::Pretrain => {
            m.insert("model".into(), v(&cfg.model));
            m.insert("pretrain".into(), v(&cfg.pretrain));
        }
        Stage::Sft => {
            m.insert("sft".into(), v(&cfg.sft));
            m.insert("lora".into(), v(&cfg.lora));
        }
        Stage::Dpo => {
            m.insert("dpo".into(), v(&cfg.dpo));
            m.insert("lora".into(), v(&cfg.lora));
        }
        Stage::Data => {
            m.insert("data".into(), v(&cfg.data));
        }
        Stage::Eval => {
            let tasks: Vec<TaskId> = cfg.eval.tasks.iter().map(|t| t.task).collect();
            m.insert("tasks".into(), v(&tasks));
            m.insert("options".into(), v(&cfg.eval.options));
            m.insert("mcq_max_new".into(), json!(cfg.eval.mcq.as_ref().map(|q| q.max_new)));
        }
    }
    serde_json::Value::Object(m)
}

fn v<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("config serializes")
}

fn hash_inputs(inputs: &[Input]) -> Result<Vec<String>> {
    inputs.iter().map(|i| hash_file(&i.path)).collect()
}

/// Runs one stage whose inputs were already resolved.
fn execute(cfg: &RunConfig, stage: Stage, inputs: &[Input]) -> Result<Manifest> {
    let config = effective_config(cfg, stage);
    log::info!("stage {stage}: effective config {config}");
    for i in inputs {
        log::info!("stage {stage}: input {} = {}", i.field, i.path.display());
    }
    let before = hash_inputs(inputs)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(io(&cfg.out_dir))?;
    let staging =
        tempfile::Builder::new().prefix(&format!(".{stage}-")).tempdir_in(&cfg.out_dir).map_err(io(&cfg.out_dir))?;

    let mut rng = seeded(cfg.seed);
    let find = |field: &str| -> &Path {
        &inputs.iter().find(|i| i.field == field).unwrap_or_else(|| panic!("input {field} resolved")).path
    };
    let files = match stage {
        Stage::Tokenize => run_tokenize(cfg, find("paths.corpus"))?,
        Stage::Pretrain => run_pretrain(cfg, find("paths.corpus"), find("paths.tokenizer"), &mut rng)?,
        Stage::Sft => {
            run_sft(cfg, find("paths.tokenizer"), find("paths.base_model"), find("paths.sft_data"), &mut rng)?
        }
        Stage::Dpo => run_dpo(cfg, find("paths.tokenizer"), find("paths.sft_model"), find("paths.dpo_data"), &mut rng)?,
        Stage::Data => run_data(cfg, inputs)?,
        Stage::Eval => run_eval(cfg, inputs)?,
    };

    let mut outputs = BTreeMap::new();
    for (name, bytes) in &files {
        write_atomic(&staging.path().join(name), bytes)?;
        outputs.insert(name.clone(), crate::fsio::sha256_hex(bytes));
    }
    if before != hash_inputs(inputs)? {
        return Err(CliError::Runtime("an input file changed while the stage ran".into()));
    }
    let manifest = Manifest {
        stage,
        seed: cfg.seed,
        config_hash: config_hash(&config),
        config,
        inputs: inputs
            .iter()
            .zip(before)
            .map(|(i, sha256)| InputRecord {
                field: i.field.clone(),
                path: display_path(&i.path, &cfg.out_dir),
                sha256,
            })
            .collect(),
        outputs,
    };
    write_atomic(&staging.path().join("manifest.json"), manifest.to_json().as_bytes())?;

    let dest = stage_dir(cfg, stage);
    let retired = dest.exists().then(|| cfg.out_dir.join(format!(".{stage}-retired")));
    if let Some(r) = &retired {
        if r.exists() {
            std::fs::remove_dir_all(r).map_err(io(r))?;
        }
        std::fs::rename(&dest, r).map_err(io(&dest))?;
    }
    let staged = staging.keep();
    std::fs::rename(&staged, &dest).map_err(io(&dest))?;
    if let Some(r) = retired {
        std::fs::remove_dir_all(&r).map_err(io(&r))?;
    }
    log::info!("stage {stage}: wrote {}", dest.display());
    Ok(manifest)
}

/// Validates and runs a single stage.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Manifest> {
    if let Some(s) = cfg.stage.filter(|&s| s != stage) {
        return Err(CliError::Config(format!("stage: config is for `{s}`, not `{stage}`")));
    }
    let inputs = resolve_inputs(cfg, stage, &[])?;
    execute(cfg, stage, &inputs).map_err(|e| e.in_stage(stage.name()))
}

/// Runs `cfg.pipeline` in order after checking that every stage's inputs
/// are declared or produced upstream. An empty pipeline does nothing.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Vec<Manifest>> {
    let stages = &cfg.pipeline;
    let bound = stages
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            resolve_inputs(cfg, s, &stages[..i])
                .map_err(|e| CliError::Config(format!("pre-flight for stage `{s}`: {}", strip(&e))))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifests = Vec::with_capacity(stages.len());
    for (&stage, inputs) in stages.iter().zip(&bound) {
        manifests.push(execute(cfg, stage, inputs).map_err(|e| e.in_stage(stage.name()))?);
    }
    Ok(manifests)
}

fn strip(e: &CliError) -> String {
    match e {
        CliError::Config(m) | CliError::Runtime(m) => m.clone(),
    }
}

type Files = Vec<(String, Vec<u8>)>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io(path))
}

/// Documents of a corpus file: JSONL documents or one document per line.
fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let docs: Vec<RawDocument> = clinlm_data::jsonl::parse(&text, &path.display().to_string())?;
        Ok(docs.into_iter().map(|d| d.text).collect())
    } else {
        Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
    }
}

fn load_vocab(path: &Path) -> Result<BpeVocab> {
    BpeVocab::from_text(&read_text(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path, vocab: &BpeVocab) -> Result<TransformerLm<f32>> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    let (model, fp) = TransformerLm::<f32>::from_checkpoint(&bytes)?;
    match fp {
        Some(fp) if fp != vocab.fingerprint() => {
            Err(CliError::Runtime(format!("{}: checkpoint was trained with a different tokenizer", path.display())))
        }
        _ if model.config().vocab_size != vocab.len() => Err(CliError::Runtime(format!(
            "{}: model vocabulary {} does not match tokenizer size {}",
            path.display(),
            model.config().vocab_size,
            vocab.len()
        ))),
        _ => Ok(model),
    }
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = String::new();
    for i in items {
        out += &serde_json::to_string(&i).expect("record serializes");
        out.push('\n');
    }
    out.into_bytes()
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    (serde_json::to_string_pretty(v).expect("json serializes") + "\n").into_bytes()
}

fn metrics(report: &TrainReport) -> Vec<u8> {
    jsonl(report.events.iter().map(|e| json!({"step": e.step, "lr": e.lr, "loss": e.loss})))
}

fn log_step(stage: &'static str) -> impl FnMut(&StepEvent) {
    move |e| log::info!("{stage} {e}")
}

fn run_tokenize(cfg: &RunConfig, corpus: &Path) -> Result<Files> {
    let docs = read_corpus(corpus)?;
    if docs.is_empty() {
        return Err(CliError::Runtime(format!("{}: corpus is empty", corpus.display())));
    }
    let vocab = BpeVocab::train(docs.iter(), cfg.tokenizer.vocab_size).map_err(|e| CliError::Runtime(e.to_string()))?;
    let tokens: usize = docs.iter().map(|d| vocab.encode_str(d).len()).sum();
    let bytes: usize = docs.iter().map(String::len).sum();
    log::info!("tokenize: {} documents, {} tokens, vocab {}", docs.len(), tokens, vocab.len());
    let stats = json!({
        "documents": docs.len(),
        "bytes": bytes,
        "tokens": tokens,
        "vocab_size": vocab.len(),
        "fingerprint": vocab.fingerprint(),
    });
    Ok(vec![("tokenizer.txt".into(), vocab.to_text().into_bytes()), ("stats.json".into(), pretty(&stats))])
}

fn run_pretrain(cfg: &RunConfig, corpus: &Path, tokenizer: &Path, rng: &mut Rng) -> Result<Files> {
    let vocab = load_vocab(tokenizer)?;
    let docs: Vec<Vec<u32>> =
        read_corpus(corpus)?.iter().map(|d| vocab.encode_str(d)).filter(|d| !d.is_empty()).collect();
    let model_cfg = cfg.model.with_vocab(vocab.len());
    let mut model = TransformerLm::<f32>::init(model_cfg, rng)?;
    log::info!("pretrain: {} parameters, {} documents", model.params().numel(), docs.len());
    let report = pretrain(&mut model, &docs, &cfg.pretrain, rng, &mut log_step("pretrain"))?;
    if let Some(l) = report.final_eval() {
        log::info!("pretrain: {} steps, final eval loss {l:.6}", report.steps);
    }
    let evals = jsonl(report.evals.iter().map(|&(step, loss)| json!({"step": step, "loss": loss})));
    Ok(vec![
        ("model.ckpt".into(), model.to_checkpoint(Some(&vocab.fingerprint()))),
        ("metrics.jsonl".into(), metrics(&report)),
        ("evals.jsonl".into(), evals),
    ])
}

/// An SFT line; the origin tag written by the data stage is optional.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SftLine {
    prompt: String,
    response: String,
    #[serde(default)]
    #[allow(dead_code)]
    origin: Option<Origin>,
}

fn run_sft(cfg: &RunConfig, tokenizer: &Path, base: &Path, data: &Path, rng: &mut Rng) -> Result<Files> {
    let vocab = load_vocab(tokenizer)?;
    let base = load_model(base, &vocab)?;
    let lines: Vec<SftLine> = clinlm_data::jsonl::parse(&read_text(data)?, &data.display().to_string())?;
    let max_len = base.config().max_seq_len;
    let examples = lines
        .iter()
        .map(|l| encode_pair(&vocab, &l.prompt, &l.response, max_len))
        .collect::<clinlm_core::Result<Vec<_>>>()?;
    let targets = cfg.lora.resolved_targets(base.config());
    let mut model = attach(base, &targets, &cfg.lora, rng)?;
    let (_, trainable) = model.trainable_parameters();
    log::info!("sft: {} examples, {trainable} trainable parameters", examples.len());
    let report = train_sft(&mut model, &examples, &cfg.sft, rng, &mut log_step("sft"))?;
    let fp = vocab.fingerprint();
    Ok(vec![
        ("adapter.bin".into(), model.adapters_to_bytes()),
        ("model.ckpt".into(), model.merge()?.to_checkpoint(Some(&fp))),
        ("metrics.jsonl".into(), metrics(&report)),
    ])
}

fn run_dpo(cfg: &RunConfig, tokenizer: &Path, sft_model: &Path, data: &Path, rng: &mut Rng) -> Result<Files> {
    let vocab = load_vocab(tokenizer)?;
    let reference = load_model(sft_model, &vocab)?;
    let triples =
        parse_triples(&read_text(data)?).map_err(|e| CliError::Runtime(format!("{}: {e}", data.display())))?;
    let max_len = reference.config().max_seq_len;
    let mut encoded = Vec::with_capacity(triples.len());
    let mut skipped = 0usize;
    for (i, t) in triples.iter().enumerate() {
        match encode_triple(&vocab, t, max_len) {
            Ok(e) => encoded.push(e),
            Err(clinlm_core::Error::SequenceTooLong { len, max }) => {
                log::warn!("dpo: triple {} skipped ({len} tokens > {max})", i + 1);
                skipped += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let targets = cfg.lora.resolved_targets(reference.config());
    let mut policy = attach(reference.clone(), &targets, &cfg.lora, rng)?;
    let report = train_dpo(&mut policy, &reference, &encoded, &cfg.dpo, rng, &mut log_step("dpo"))?;
    let margins = implicit_margins(&policy, &report.cache, &encoded, cfg.dpo.beta)?;
    let positive = margins.iter().filter(|&&m| m > 0.0).count();
    log::info!("dpo: positive margin on {positive}/{} triples", margins.len());
    let summary = json!({
        "triples": triples.len(),
        "skipped_too_long": skipped,
        "trained": encoded.len(),
        "steps": report.train.steps,
        "positive_margins": positive,
        "final_loss": report.train.events.last().map(|e| e.loss),
    });
    let fp = vocab.fingerprint();
    Ok(vec![
        ("adapter.bin".into(), policy.adapters_to_bytes()),
        ("model.ckpt".into(), policy.merge()?.to_checkpoint(Some(&fp))),
        ("metrics.jsonl".into(), metrics(&report.train)),
        ("margins.jsonl".into(), jsonl(margins.iter().enumerate().map(|(i, m)| json!({"index": i, "margin": m})))),
        ("summary.json".into(), pretty(&summary)),
    ])
}

/// One canned generator reply.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplyLine {
    #[serde(default)]
    reply: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

fn run_data(cfg: &RunConfig, inputs: &[Input]) -> Result<Files> {
    let get = |field: &str| inputs.iter().find(|i| i.field == format!("paths.{field}")).map(|i| i.path.as_path());
    fn read_opt<T: serde::de::DeserializeOwned>(p: Option<&Path>) -> Result<Vec<T>> {
        p.map(|p| clinlm_data::jsonl::read(p).map_err(CliError::from)).transpose().map(Option::unwrap_or_default)
    }
    let corpus = clinlm_data::corpus::load(get("manifest").expect("manifest is required"))?;
    let replies: Vec<ReplyLine> = read_opt(get("generator_replies"))?;
    let mut stub = get("generator_replies")
        .map(|p| {
            replies
                .into_iter()
                .enumerate()
                .map(|(i, r)| match (r.reply, r.error) {
                    (Some(t), None) => Ok(Ok(t)),
                    (None, Some(e)) => Ok(Err(GeneratorError(e))),
                    _ => Err(CliError::Runtime(format!(
                        "{}:{}: exactly one of `reply` and `error` is required",
                        p.display(),
                        i + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()
                .map(StubClient::new)
        })
        .transpose()?;
    let inputs = DataInputs {
        corpus,
        drugs: read_opt(get("drugs"))?,
        public: read_opt::<PairInput>(get("public_sft"))?,
        safety: read_opt::<PairInput>(get("safety_sft"))?,
        feedback: read_opt::<Feedback>(get("feedback"))?,
        generator: stub.as_mut().map(|s| s as &mut dyn clinlm_data::generate::GeneratorClient),
        review: read_opt::<ReviewEntry>(get("review"))?,
    };
    let out = clinlm_data::pipeline::run(inputs, &cfg.data)?;
    for line in out.report.lines() {
        log::info!("data: {} {} {} x{}", line.stage, line.subject, line.reason, line.count);
    }
    log::info!(
        "data: {} documents kept, {} removed, {} sft records, {} preference triples",
        out.corpus.len(),
        out.removals.len(),
        out.sft.len(),
        out.triples.len()
    );
    Ok(out.files().into_iter().map(|(n, s)| (n.to_string(), s.into_bytes())).collect())
}

/// One multiple-choice question.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Question {
    id: String,
    question: String,
    options: [String; 4],
    answer: Choice,
}

fn fill_template(template: &str, q: &Question) -> String {
    let mut s = template.replace("{question}", &q.question);
    for (slot, opt) in ["{A}", "{B}", "{C}", "{D}"].iter().zip(&q.options) {
        s = s.replace(slot, opt);
    }
    s
}

fn run_eval(cfg: &RunConfig, inputs: &[Input]) -> Result<Files> {
    let mut results = Vec::new();
    for t in &cfg.eval.tasks {
        let r = score_task(t.task, &read_text(&t.gold)?, &read_text(&t.pred)?, &cfg.eval.options)?;
        log::info!("eval: {} {:.4}", t.task, r.score);
        results.push(r);
    }
    let mut files = Vec::new();
    if let Some(mcq) = &cfg.eval.mcq {
        let get = |field: &str| &inputs.iter().find(|i| i.field == field).expect("mcq inputs resolved").path;
        let vocab = load_vocab(get("paths.tokenizer"))?;
        let model = load_model(get("paths.eval_model"), &vocab)?;
        let template = read_text(&mcq.template)?;
        let questions: Vec<Question> =
            clinlm_data::jsonl::parse(&read_text(&mcq.questions)?, &mcq.questions.display().to_string())?;
        let mut predicted = Vec::with_capacity(questions.len());
        let mut lines = Vec::with_capacity(questions.len());
        for q in &questions {
            let mut ids = vec![BOS];
            ids.extend(vocab.encode_str(&fill_template(&template, q)));
            let out = generate(&model, &ids, mcq.max_new)?;
            let new: Vec<u32> = out[ids.len()..].iter().copied().filter(|&t| t != EOS).collect();
            let text = vocab.decode_lossy(&new).map_err(|e| CliError::Runtime(e.to_string()))?;
            let choice = Choice::find_in(&text);
            lines.push(json!({"id": q.id, "output": text, "prediction": choice, "answer": q.answer}));
            predicted.push(choice);
        }
        let answers: Vec<Choice> = questions.iter().map(|q| q.answer).collect();
        let score = mcq_accuracy_parsed(&answers, &predicted)?;
        log::info!("eval: {} {score:.4}", TaskId::ClinicalQa);
        results.push(TaskResult::new(TaskId::ClinicalQa, score)?);
        files.push(("mcq_predictions.jsonl".to_string(), jsonl(lines)));
    }
    let report = EvalReport::new(results)?;
    let mut table = report.table();
    if cfg.eval.mcq.is_some() {
        table += "\nreference accuracy on the clinical multiple-choice set (published):\n";
        for (name, score) in CLINICAL_QA_REFERENCE {
            table += &format!("{name:<28} {score:>7.1}\n");
        }
    }
    files.insert(0, ("report.txt".into(), table.into_bytes()));
    files.insert(0, ("report.json".into(), report.to_json().into_bytes()));
    Ok(files)
}
