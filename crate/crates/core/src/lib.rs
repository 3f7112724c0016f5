//! Core numerics and training for a small clinical language-model toolkit.

pub mod dpo;
pub mod error;
pub mod lora;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
