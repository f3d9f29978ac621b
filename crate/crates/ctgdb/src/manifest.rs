//! Run manifest: line-delimited `key=value` records capturing the exact
//! configuration, every artifact checksum, and per-table load counts, so a
//! run can be audited and replayed.

use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::kv::KvRecord;

/// Lowercase hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Accumulates manifest records for one run (or one stage).
#[derive(Debug, Default, Clone)]
pub struct RunManifest {
    records: Vec<KvRecord>,
}

impl RunManifest {
    pub fn new(run_id: &str, tool_version: &str) -> Self {
        let mut m = Self::default();
        m.records.push(
            KvRecord::new()
                .with("record", "run")
                .with("run_id", run_id)
                .with("tool", "ctgdb")
                .with("version", tool_version),
        );
        m
    }

    /// The configuration snapshot, as prebuilt key/value pairs.
    pub fn push_config(&mut self, config_pairs: &[(String, String)]) {
        let mut rec = KvRecord::new().with("record", "config");
        for (k, v) in config_pairs {
            rec.push(k, v);
        }
        self.records.push(rec);
    }

    /// One artifact file written by the run; `path` is relative to the
    /// output directory.
    pub fn push_artifact(&mut self, path: &str, rows: Option<u64>, sha256: &str) {
        let mut rec = KvRecord::new()
            .with("record", "artifact")
            .with("path", path);
        if let Some(rows) = rows {
            rec.push("rows", rows);
        }
        rec.push("sha256", sha256);
        self.records.push(rec);
    }

    pub fn push_table(&mut self, table: &str, rows_written: u64, rows_loaded: u64, checksum: &str) {
        self.records.push(
            KvRecord::new()
                .with("record", "table")
                .with("name", table)
                .with("rows_written", rows_written)
                .with("rows_loaded", rows_loaded)
                .with("sha256", checksum),
        );
    }

    pub fn push_summary(&mut self, status: &str, extra: &[(&str, String)]) {
        let mut rec = KvRecord::new()
            .with("record", "summary")
            .with("status", status);
        for (k, v) in extra {
            rec.push(k, v);
        }
        self.records.push(rec);
    }

    pub fn extend(&mut self, other: &RunManifest) {
        self.records.extend(other.records.iter().cloned());
    }

    pub fn push_record(&mut self, record: KvRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[KvRecord] {
        &self.records
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&rec.to_line());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }

    /// Parse a manifest file back into records.
    pub fn parse(text: &str) -> Result<Self, crate::kv::KvParseError> {
        let mut records = Vec::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            records.push(KvRecord::parse_line(line)?);
        }
        Ok(Self { records })
    }

    /// Map of artifact path -> sha256, for determinism comparisons.
    pub fn artifact_checksums(&self) -> std::collections::BTreeMap<String, String> {
        self.records
            .iter()
            .filter(|r| r.get("record") == Some("artifact"))
            .filter_map(|r| {
                Some((r.get("path")?.to_string(), r.get("sha256")?.to_string()))
            })
            .collect()
    }

    /// The config record's pairs (minus the record tag), if present.
    pub fn config_pairs(&self) -> Option<Vec<(String, String)>> {
        self.records
            .iter()
            .find(|r| r.get("record") == Some("config"))
            .map(|r| {
                r.pairs()
                    .iter()
                    .filter(|(k, _)| k != "record")
                    .cloned()
                    .collect()
            })
    }
}

/// Deterministic run id: hash of the config snapshot line.
pub fn run_id_for(config_pairs: &[(String, String)]) -> String {
    let mut rec = KvRecord::new();
    for (k, v) in config_pairs {
        rec.push(k, v);
    }
    sha256_bytes(rec.to_line().as_bytes())[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn render_and_parse_round_trip() {
        let mut m = RunManifest::new("abc123", "0.1.0");
        m.push_config(&[("input_dir".into(), "corpus".into())]);
        m.push_artifact("studies.jsonl", Some(8), "deadbeef");
        m.push_table("clinical_trial", 8, 8, "cafe");
        m.push_summary("success", &[("tables", "1".into())]);
        let text = m.render();
        let parsed = RunManifest::parse(&text).unwrap();
        assert_eq!(parsed.records().len(), 5);
        assert_eq!(
            parsed.artifact_checksums().get("studies.jsonl").map(String::as_str),
            Some("deadbeef")
        );
        assert_eq!(
            parsed.config_pairs().unwrap(),
            vec![("input_dir".to_string(), "corpus".to_string())]
        );
    }

    #[test]
    fn run_id_is_stable_for_identical_config() {
        let cfg = vec![("a".to_string(), "1".to_string())];
        assert_eq!(run_id_for(&cfg), run_id_for(&cfg));
        let other = vec![("a".to_string(), "2".to_string())];
        assert_ne!(run_id_for(&cfg), run_id_for(&other));
    }
}
