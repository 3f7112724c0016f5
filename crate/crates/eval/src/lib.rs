//! Scoring for clinlm: the metric suite of the Chinese biomedical language
//! understanding benchmark, multiple-choice accuracy, and the macro-average
//! used to summarize them. All scores are on a 0–100 scale.
//!
//! Metrics take already-decoded predictions, so prediction files produced by
//! any system can be scored.

pub mod bleu;
pub mod classify;
mod error;
pub mod f1;
pub mod files;
pub mod mcq;
pub mod rank;
pub mod rouge;
pub mod tasks;
pub mod text;

pub use error::{EvalError, Result};
