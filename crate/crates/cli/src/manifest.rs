//! Per-stage `manifest.json`: what ran, on what, producing what.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Stage;
use crate::fsio::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Config field the input was bound to.
    pub field: String,
    /// Path, written as `$OUT/...` when under the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub seed: u64,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    /// Every effective setting of the stage, defaults included.
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

pub fn display_path(path: &Path, out_dir: &Path) -> String {
    match path.strip_prefix(out_dir) {
        Ok(rel) => format!("$OUT/{}", rel.display()),
        Err(_) => path.display().to_string(),
    }
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":{"y":2,"x":3}}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":{"x":3,"y":2},"b":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn paths_under_out_dir_are_relative() {
        let out = Path::new("/runs/a");
        assert_eq!(display_path(Path::new("/runs/a/sft/model.ckpt"), out), "$OUT/sft/model.ckpt");
        assert_eq!(display_path(Path::new("/data/x.txt"), out), "/data/x.txt");
    }
}
