use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::sha256_hex;
use crate::dataset::{read_jsonl, write_jsonl};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_DIR: &str = "configs";

/// One line of `manifest.jsonl`, describing one artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory.
    pub artifact: String,
    pub stage: String,
    /// SHA-256 of `configs/<config_hash>.json`.
    pub config_hash: String,
    pub seed: u64,
    pub sha256: String,
    pub bytes: u64,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl(&path)
}

/// Hashes the named artifacts in `dir` and upserts their manifest lines,
/// keeping the file sorted by artifact. Also stores the canonical config
/// under `configs/`.
pub fn record(
    dir: &Path,
    stage: &str,
    artifacts: &[&str],
    config_hash: &str,
    canonical_config: &str,
    seed: u64,
) -> Result<()> {
    let config_dir = dir.join(CONFIG_DIR);
    fs::create_dir_all(&config_dir).map_err(|e| Error::io(&config_dir, e))?;
    let config_path = config_dir.join(format!("{config_hash}.json"));
    fs::write(&config_path, canonical_config).map_err(|e| Error::io(&config_path, e))?;

    let mut entries: BTreeMap<String, ManifestEntry> = read_manifest(dir)?
        .into_iter()
        .map(|e| (e.artifact.clone(), e))
        .collect();
    for name in artifacts {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        entries.insert(
            name.to_string(),
            ManifestEntry {
                artifact: name.to_string(),
                stage: stage.to_string(),
                config_hash: config_hash.to_string(),
                seed,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
    }
    write_jsonl(&dir.join(MANIFEST_FILE), entries.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upserts_sorted_entries() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.csv"), "x\n").unwrap();
        fs::write(dir.path().join("a.csv"), "y\n").unwrap();
        record(dir.path(), "one", &["b.csv"], "h1", "{}\n", 1).unwrap();
        record(dir.path(), "two", &["a.csv"], "h1", "{}\n", 1).unwrap();
        fs::write(dir.path().join("b.csv"), "z\n").unwrap();
        record(dir.path(), "three", &["b.csv"], "h2", "{ }\n", 2).unwrap();
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.iter().map(|e| e.artifact.as_str()).collect::<Vec<_>>(), ["a.csv", "b.csv"]);
        assert_eq!((m[1].stage.as_str(), m[1].seed), ("three", 2));
        assert_eq!(m[1].sha256, sha256_hex(b"z\n"));
        assert!(dir.path().join("configs/h1.json").exists());
    }
}
