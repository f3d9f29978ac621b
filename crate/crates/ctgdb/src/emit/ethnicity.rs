//! Ethnicity harmonization: reported strings map to a reduced category set
//! through an editable data table. Lookups are case- and
//! punctuation-insensitive; unmatched values pass through unharmonized and
//! are never dropped.

use std::collections::HashMap;
use std::path::Path;

use crate::normalizer::canonicalize;

/// Copy of the shipped mapping table, used when no path is configured.
const BUILTIN_MAP: &str = include_str!("../../../../data/ethnicity_map.tsv");

pub const ETHNICITY_MAP_HEADER: &str = "raw\tcategory";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HarmonizedCategory {
    HispanicOrLatino,
    NotHispanicOrLatino,
    UnknownOrNotReported,
}

impl HarmonizedCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            HarmonizedCategory::HispanicOrLatino => "hispanic_or_latino",
            HarmonizedCategory::NotHispanicOrLatino => "not_hispanic_or_latino",
            HarmonizedCategory::UnknownOrNotReported => "unknown_or_not_reported",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "hispanic_or_latino" => Some(Self::HispanicOrLatino),
            "not_hispanic_or_latino" => Some(Self::NotHispanicOrLatino),
            "unknown_or_not_reported" => Some(Self::UnknownOrNotReported),
            _ => None,
        }
    }
}

/// Result of harmonizing one reported string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EthnicityOutcome {
    Harmonized(HarmonizedCategory),
    /// No map entry: the raw value passes through.
    Unharmonized(String),
}

impl EthnicityOutcome {
    /// Token written to the `harmonized` column.
    pub fn column_value(&self) -> &'static str {
        match self {
            EthnicityOutcome::Harmonized(c) => c.as_str(),
            EthnicityOutcome::Unharmonized(_) => "unharmonized",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EthnicityMapError {
    #[error("cannot read ethnicity map: {0}")]
    Io(String),
    #[error("ethnicity map line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct EthnicityMap {
    by_canonical: HashMap<String, HarmonizedCategory>,
}

impl EthnicityMap {
    pub fn load(path: &Path) -> Result<Self, EthnicityMapError> {
        let raw = std::fs::read_to_string(path).map_err(|e| EthnicityMapError::Io(e.to_string()))?;
        Self::parse(&raw)
    }

    /// The compiled-in copy of `data/ethnicity_map.tsv`.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MAP).expect("builtin map is well-formed")
    }

    fn parse(raw: &str) -> Result<Self, EthnicityMapError> {
        let mut lines = raw.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == ETHNICITY_MAP_HEADER => {}
            _ => {
                return Err(EthnicityMapError::Format {
                    line: 1,
                    message: format!("expected header '{ETHNICITY_MAP_HEADER}'"),
                })
            }
        }
        let mut by_canonical = HashMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(EthnicityMapError::Format {
                    line: idx + 1,
                    message: "expected 'raw<TAB>category'".into(),
                });
            }
            let category = HarmonizedCategory::parse(fields[1]).ok_or_else(|| {
                EthnicityMapError::Format {
                    line: idx + 1,
                    message: format!("unknown category '{}'", fields[1]),
                }
            })?;
            let (key, _) = canonicalize(fields[0], false);
            by_canonical.insert(key, category);
        }
        Ok(Self { by_canonical })
    }

    pub fn harmonize(&self, raw: &str) -> EthnicityOutcome {
        let (key, _) = canonicalize(raw, false);
        match self.by_canonical.get(&key) {
            Some(&c) => EthnicityOutcome::Harmonized(c),
            None => EthnicityOutcome::Unharmonized(raw.to_string()),
        }
    }
}
