//! Corpus construction for clinlm: cleaning, near-duplicate removal, privacy
//! scrubbing, and the assembly of fine-tuning and preference datasets.
//!
//! Every stage is a pure function of its inputs and configuration, so a run
//! repeated with the same inputs writes byte-identical files.

pub mod clean;
pub mod corpus;
pub mod dedup;
pub mod drug;
mod error;
pub mod feedback;
pub mod generate;
pub mod jsonl;
pub mod pii;
pub mod pipeline;
pub mod report;
pub mod sft;

pub use error::{DataError, Result};
