//! Pipeline configuration: a key=value config file merged with command-line
//! overrides. The resolved config serializes losslessly into the run
//! manifest so a run can be replayed from its manifest alone.

use std::path::{Path, PathBuf};

use ctgdb::emit::Dialect;
use ctgdb::kv::KvRecord;
use ctgdb::normalizer::NormalizerConfig;

use crate::CliError;

pub const DB_URI_ENV: &str = "CTGDB_DB_URI";

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub ethnicity_map: Option<PathBuf>,
    pub dialects: Vec<Dialect>,
    pub db_uri: Option<String>,
    pub event_groups: Vec<PathBuf>,
    pub normalizer: NormalizerConfig,
    pub phase_restrict: bool,
    pub serious_only: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            output_dir: None,
            vocabulary: None,
            ethnicity_map: None,
            dialects: vec![Dialect::Mysql, Dialect::Postgres],
            db_uri: None,
            event_groups: Vec::new(),
            normalizer: NormalizerConfig::default(),
            phase_restrict: true,
            serious_only: false,
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::config(message)
}

pub fn parse_dialects(value: &str) -> Result<Vec<Dialect>, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "both" => Ok(vec![Dialect::Mysql, Dialect::Postgres]),
        other => Dialect::parse(other)
            .map(|d| vec![d])
            .ok_or_else(|| config_error(format!("unknown dialect '{value}' (mysql, postgres, both)"))),
    }
}

impl PipelineConfig {
    /// Load a config file: one `key=value` per line, `#` comments, quoted
    /// values allowed. Unknown keys are rejected so typos surface early.
    pub fn load_file(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = PipelineConfig::default();
        for (idx, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rec = KvRecord::parse_line(line).map_err(|e| {
                config_error(format!("{}: line {}: {e}", path.display(), idx + 1))
            })?;
            for (key, value) in rec.pairs() {
                cfg.apply_key(key, value)
                    .map_err(|e| config_error(format!("{}: line {}: {e}", path.display(), idx + 1)))?;
            }
        }
        Ok(cfg)
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        let parse_bool = |v: &str| -> Result<bool, String> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(format!("expected true/false, got '{other}'")),
            }
        };
        match key {
            "input_dir" => self.input_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "vocabulary" => self.vocabulary = Some(PathBuf::from(value)),
            "ethnicity_map" => self.ethnicity_map = Some(PathBuf::from(value)),
            "dialect" => {
                self.dialects = parse_dialects(value).map_err(|e| e.message)?;
            }
            "db_uri" => self.db_uri = Some(value.to_string()),
            "event_group" => self.event_groups.push(PathBuf::from(value)),
            "fuzzy_threshold" => {
                self.normalizer.fuzzy_threshold = value
                    .parse()
                    .map_err(|_| format!("bad fuzzy_threshold '{value}'"))?;
            }
            "min_candidate_bigram_overlap" => {
                self.normalizer.min_candidate_bigram_overlap = value
                    .parse()
                    .map_err(|_| format!("bad min_candidate_bigram_overlap '{value}'"))?;
            }
            "strip_grading" => self.normalizer.strip_grading = parse_bool(value)?,
            "enable_fuzzy" => self.normalizer.enable_fuzzy = parse_bool(value)?,
            "phase_restrict" => self.phase_restrict = parse_bool(value)?,
            "serious_only" => self.serious_only = parse_bool(value)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    /// Validate everything every stage relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        self.normalizer.validate().map_err(config_error)?;
        if self.dialects.is_empty() {
            return Err(config_error("at least one dialect required"));
        }
        Ok(())
    }

    pub fn require_input_dir(&self) -> Result<&Path, CliError> {
        self.input_dir
            .as_deref()
            .ok_or_else(|| config_error("input directory not set (use --in or input_dir=)"))
    }

    pub fn require_output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| config_error("output directory not set (use --out or output_dir=)"))
    }

    pub fn require_vocabulary(&self) -> Result<&Path, CliError> {
        self.vocabulary
            .as_deref()
            .ok_or_else(|| config_error("vocabulary not set (use --vocab or vocabulary=)"))
    }

    /// Connection string: config value, else the environment fallback.
    pub fn db_uri_resolved(&self) -> Option<String> {
        self.db_uri
            .clone()
            .or_else(|| std::env::var(DB_URI_ENV).ok())
    }

    /// Lossless snapshot for the run manifest, in a fixed key order.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        push("input_dir", path(&self.input_dir));
        push("output_dir", path(&self.output_dir));
        push("vocabulary", path(&self.vocabulary));
        push("ethnicity_map", path(&self.ethnicity_map));
        push(
            "dialects",
            self.dialects
                .iter()
                .map(|d| d.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("db_uri", self.db_uri.clone().unwrap_or_default());
        for g in &self.event_groups {
            push("event_group", g.display().to_string());
        }
        push("fuzzy_threshold", format!("{:.6}", self.normalizer.fuzzy_threshold));
        push(
            "min_candidate_bigram_overlap",
            self.normalizer.min_candidate_bigram_overlap.to_string(),
        );
        push("strip_grading", self.normalizer.strip_grading.to_string());
        push("enable_fuzzy", self.normalizer.enable_fuzzy.to_string());
        push("phase_restrict", self.phase_restrict.to_string());
        push("serious_only", self.serious_only.to_string());
        pairs
    }
}
