//! Model-generated question-answer candidates and the review gate that
//! admits them into a dataset.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::error::{DataError, Result};
use crate::report::Report;
use crate::sft::{Origin, SftRecord, Sourced};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("generator failed: {0}")]
pub struct GeneratorError(pub String);

/// A text generator answering one prompt at a time.
pub trait GeneratorClient {
    fn generate(&mut self, prompt: &str) -> Result<String, GeneratorError>;
}

/// Replays canned replies in call order; a call past the end fails.
#[derive(Debug, Clone, Default)]
pub struct StubClient {
    replies: VecDeque<Result<String, GeneratorError>>,
    pub prompts: Vec<String>,
}

impl StubClient {
    pub fn new(replies: impl IntoIterator<Item = Result<String, GeneratorError>>) -> Self {
        StubClient { replies: replies.into_iter().collect(), prompts: Vec::new() }
    }
}

impl GeneratorClient for StubClient {
    fn generate(&mut self, prompt: &str) -> Result<String, GeneratorError> {
        self.prompts.push(prompt.to_string());
        self.replies.pop_front().unwrap_or_else(|| Err(GeneratorError("stub has no reply left".into())))
    }
}

/// What to ask the generator for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Question-answer pairs grounded in a guideline or reference text.
    Guideline,
    /// Consultation dialogue from a chief complaint.
    Complaint,
}

impl Task {
    pub fn origin(self) -> Origin {
        match self {
            Task::Guideline => Origin::SynthesizedGuideline,
            Task::Complaint => Origin::SynthesizedComplaint,
        }
    }

    pub fn prompt(self, text: &str) -> String {
        let ask = match self {
            Task::Guideline => "请根据以下医学资料编写问答对，以 JSON 数组输出，每项包含 prompt 和 response 字段。",
            Task::Complaint => {
                "请根据以下主诉生成一段患者提问与医生回答，以 JSON 对象输出，包含 prompt 和 response 字段。"
            }
        };
        format!("{ask}\n\n{text}")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QaPair {
    prompt: String,
    response: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    One(QaPair),
    Many(Vec<QaPair>),
}

/// Accepts one `{prompt, response}` object or an array of them.
pub fn parse_reply(text: &str) -> Result<Vec<(String, String)>, String> {
    let reply: Reply =
        serde_json::from_str(text.trim()).map_err(|_| "reply is not a prompt/response object or array".to_string())?;
    let pairs = match reply {
        Reply::One(p) => vec![p],
        Reply::Many(v) => v,
    };
    if pairs.is_empty() {
        return Err("reply holds no pairs".into());
    }
    pairs
        .into_iter()
        .map(|p| {
            if p.prompt.trim().is_empty() || p.response.trim().is_empty() {
                Err("reply pair with empty field".to_string())
            } else {
                Ok((p.prompt, p.response))
            }
        })
        .collect()
}

/// A generated pair awaiting review. `id` is `<source>#<n>`, 1-based per
/// source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub source: String,
    pub prompt: String,
    pub response: String,
    pub origin: Origin,
    pub reviewed: bool,
}

pub const STAGE: &str = "generate";

/// Queries `client` once per document. Failed calls and unusable replies
/// are logged, counted in the returned report and skipped.
pub fn synthesize_with_generator(
    docs: &[RawDocument],
    task: Task,
    client: &mut dyn GeneratorClient,
) -> (Vec<Candidate>, Report) {
    let mut out = Vec::new();
    let mut report = Report::default();
    for doc in docs {
        let reply = client.generate(&task.prompt(&doc.text)).map_err(|e| e.to_string());
        match reply.and_then(|r| parse_reply(&r)) {
            Ok(pairs) => {
                for (n, (prompt, response)) in pairs.into_iter().enumerate() {
                    out.push(Candidate {
                        id: format!("{}#{}", doc.id, n + 1),
                        source: doc.id.clone(),
                        prompt,
                        response,
                        origin: task.origin(),
                        reviewed: false,
                    });
                }
            }
            Err(reason) => {
                log::warn!("skipping `{}`: {reason}", doc.id);
                report.add(STAGE, &doc.id, &reason, 1);
            }
        }
    }
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// One line of a review file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewEntry {
    pub id: String,
    pub decision: Decision,
}

/// Fate of candidates the review file does not mention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unlisted {
    /// Kept out of the dataset until reviewed.
    #[default]
    Hold,
    Accept,
}

#[derive(Debug, Clone, Default)]
pub struct Reviewed {
    pub accepted: Vec<Sourced>,
    pub report: Report,
}

/// Admits candidates according to `review`. Ids absent from `candidates`
/// and ids reviewed twice are errors.
pub fn apply_review(candidates: &[Candidate], review: &[ReviewEntry], unlisted: Unlisted) -> Result<Reviewed> {
    let known: HashSet<&str> = candidates.iter().map(|c| c.id.as_str()).collect();
    let mut decisions: HashMap<&str, Decision> = HashMap::new();
    for e in review {
        if !known.contains(e.id.as_str()) {
            return Err(DataError::Review(format!("unknown candidate id `{}`", e.id)));
        }
        if decisions.insert(e.id.as_str(), e.decision).is_some() {
            return Err(DataError::Review(format!("candidate `{}` reviewed twice", e.id)));
        }
    }
    let mut out = Reviewed::default();
    for c in candidates {
        let accept = match decisions.get(c.id.as_str()) {
            Some(Decision::Accept) => true,
            Some(Decision::Reject) => {
                out.report.add("review", &c.source, "rejected", 1);
                false
            }
            None => {
                if unlisted == Unlisted::Hold {
                    out.report.add("review", &c.source, "held-unreviewed", 1);
                }
                unlisted == Unlisted::Accept
            }
        };
        if accept {
            out.accepted.push(Sourced {
                record: SftRecord { prompt: c.prompt.clone(), response: c.response.clone(), origin: c.origin },
                source: c.id.clone(),
            });
        }
    }
    Ok(out)
}
