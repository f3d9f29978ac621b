//! Vocabulary loading and indexing.
//!
//! The vocabulary is a two-level hierarchy: preferred terms (PT) and
//! lower-level terms (LLT) that each point at a parent PT. It ships as a
//! 6-column TSV (`code  text  level  parent_pt_code  soc_code  umls_cui`)
//! so that any licensed terminology export can be dropped in. The
//! dictionary is built once and immutable afterwards.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::normalizer::{bigram_set, canonicalize, Bigram};

pub const VOCABULARY_HEADER: &str = "code\ttext\tlevel\tparent_pt_code\tsoc_code\tumls_cui";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermLevel {
    #[serde(rename = "PT")]
    Pt,
    #[serde(rename = "LLT")]
    Llt,
}

impl TermLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            TermLevel::Pt => "PT",
            TermLevel::Llt => "LLT",
        }
    }

    /// PT sorts before LLT in candidate tie-breaking.
    fn rank(self) -> u8 {
        match self {
            TermLevel::Pt => 0,
            TermLevel::Llt => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    /// Numeric-string identifier, unique within the dictionary.
    pub code: String,
    pub text: String,
    pub level: TermLevel,
    /// Required for LLT entries; must resolve to a PT.
    pub parent_pt_code: Option<String>,
    pub soc_code: Option<String>,
    /// Opaque external concept identifier, carried through untouched.
    pub umls_cui: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("cannot read vocabulary file: {0}")]
    Io(String),
    #[error("vocabulary format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("referential error: code {code} {message}")]
    Referential { code: String, message: String },
    #[error("unknown code {0}")]
    UnknownCode(String),
}

/// Loaded vocabulary plus the indices the normalizer queries.
#[derive(Debug)]
pub struct TermDictionary {
    entries: Vec<TermEntry>,
    /// Numeric value of each entry's code, for deterministic ordering.
    code_values: Vec<u64>,
    by_code: HashMap<String, usize>,
    /// Canonical text -> entry ids (sorted by code).
    exact_index: HashMap<String, Vec<usize>>,
    /// Bigram -> posting list of entry ids (sorted by code).
    bigram_index: HashMap<Bigram, Vec<usize>>,
    canonical_texts: Vec<String>,
    bigram_sets: Vec<std::collections::HashSet<Bigram>>,
}

impl TermDictionary {
    /// Build a dictionary from entries, validating uniqueness and LLT
    /// parent links.
    pub fn from_entries(entries: Vec<TermEntry>) -> Result<Self, VocabError> {
        let mut by_code = HashMap::with_capacity(entries.len());
        let mut code_values = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let value = parse_code(&e.code).map_err(|message| VocabError::Format {
                line: i + 2,
                message,
            })?;
            code_values.push(value);
            if by_code.insert(e.code.clone(), i).is_some() {
                return Err(VocabError::Format {
                    line: i + 2,
                    message: format!("duplicate code {}", e.code),
                });
            }
        }
        for e in &entries {
            match (e.level, &e.parent_pt_code) {
                (TermLevel::Llt, Some(parent)) => match by_code.get(parent) {
                    Some(&pi) if entries[pi].level == TermLevel::Pt => {}
                    Some(_) => {
                        return Err(VocabError::Referential {
                            code: parent.clone(),
                            message: format!("is not a PT (parent of LLT {})", e.code),
                        })
                    }
                    None => {
                        return Err(VocabError::Referential {
                            code: parent.clone(),
                            message: format!("not found (parent of LLT {})", e.code),
                        })
                    }
                },
                (TermLevel::Llt, None) => {
                    return Err(VocabError::Referential {
                        code: e.code.clone(),
                        message: "LLT entry lacks a parent_pt_code".into(),
                    })
                }
                (TermLevel::Pt, Some(parent)) => {
                    return Err(VocabError::Referential {
                        code: e.code.clone(),
                        message: format!("PT entry must not carry parent_pt_code {parent}"),
                    })
                }
                (TermLevel::Pt, None) => {}
            }
        }

        let mut dict = TermDictionary {
            code_values,
            by_code,
            exact_index: HashMap::new(),
            bigram_index: HashMap::new(),
            canonical_texts: Vec::with_capacity(entries.len()),
            bigram_sets: Vec::with_capacity(entries.len()),
            entries,
        };
        dict.build_indices();
        Ok(dict)
    }

    fn build_indices(&mut self) {
        // Dictionary texts are canonicalized without grading stripping:
        // stripping applies to reported strings only.
        for (i, e) in self.entries.iter().enumerate() {
            let (canonical, _) = canonicalize(&e.text, false);
            let bigrams = bigram_set(&canonical);
            self.exact_index.entry(canonical.clone()).or_default().push(i);
            for &bg in &bigrams {
                self.bigram_index.entry(bg).or_default().push(i);
            }
            self.canonical_texts.push(canonical);
            self.bigram_sets.push(bigrams);
        }
        let order_key = |&id: &usize| (self.code_values[id], self.entries[id].code.clone());
        for list in self.exact_index.values_mut() {
            list.sort_by_key(order_key);
        }
        for list in self.bigram_index.values_mut() {
            list.sort_by_key(order_key);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }

    pub fn entry(&self, id: usize) -> &TermEntry {
        &self.entries[id]
    }

    pub fn get(&self, code: &str) -> Option<&TermEntry> {
        self.by_code.get(code).map(|&i| &self.entries[i])
    }

    /// Resolve a code to its preferred term: PT entries map to themselves,
    /// LLT entries to their parent PT.
    pub fn pt_of(&self, code: &str) -> Result<&TermEntry, VocabError> {
        let entry = self
            .get(code)
            .ok_or_else(|| VocabError::UnknownCode(code.to_string()))?;
        match entry.level {
            TermLevel::Pt => Ok(entry),
            TermLevel::Llt => {
                let parent = entry
                    .parent_pt_code
                    .as_ref()
                    .expect("validated at construction");
                self.get(parent)
                    .ok_or_else(|| VocabError::UnknownCode(parent.clone()))
            }
        }
    }

    pub fn exact_candidates(&self, canonical: &str) -> Option<&[usize]> {
        self.exact_index.get(canonical).map(|v| v.as_slice())
    }

    pub fn posting_list(&self, bigram: &Bigram) -> Option<&[usize]> {
        self.bigram_index.get(bigram).map(|v| v.as_slice())
    }

    pub fn canonical_text(&self, id: usize) -> &str {
        &self.canonical_texts[id]
    }

    pub fn bigrams(&self, id: usize) -> &std::collections::HashSet<Bigram> {
        &self.bigram_sets[id]
    }

    /// Tie-break key: PT before LLT, then lowest code.
    pub fn preference_key(&self, id: usize) -> (u8, u64, &str) {
        (
            self.entries[id].level.rank(),
            self.code_values[id],
            self.entries[id].code.as_str(),
        )
    }
}

fn parse_code(code: &str) -> Result<u64, String> {
    if code.is_empty() || !code.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("code '{code}' is not a numeric string"));
    }
    code.parse::<u64>()
        .map_err(|_| format!("code '{code}' exceeds the supported numeric range"))
}

/// Load the vocabulary TSV. Strict: a malformed row fails the load with its
/// line number rather than being skipped.
pub fn load_dictionary(path: &Path) -> Result<TermDictionary, VocabError> {
    let raw = std::fs::read_to_string(path).map_err(|e| VocabError::Io(e.to_string()))?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == VOCABULARY_HEADER => {}
        Some((_, header)) => {
            return Err(VocabError::Format {
                line: 1,
                message: format!("expected header '{VOCABULARY_HEADER}', got '{header}'"),
            })
        }
        None => {
            return Err(VocabError::Format {
                line: 1,
                message: "empty file (header row required)".into(),
            })
        }
    }

    let mut entries = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(VocabError::Format {
                line: lineno,
                message: format!("expected 6 tab-separated fields, got {}", fields.len()),
            });
        }
        let level = match fields[2] {
            "PT" => TermLevel::Pt,
            "LLT" => TermLevel::Llt,
            other => {
                return Err(VocabError::Format {
                    line: lineno,
                    message: format!("level must be PT or LLT, got '{other}'"),
                })
            }
        };
        if fields[1].is_empty() {
            return Err(VocabError::Format {
                line: lineno,
                message: "empty term text".into(),
            });
        }
        let opt = |s: &str| {
            if s.is_empty() {
                None
            } else {
                Some(s.to_string())
            }
        };
        entries.push(TermEntry {
            code: fields[0].to_string(),
            text: fields[1].to_string(),
            level,
            parent_pt_code: opt(fields[3]),
            soc_code: opt(fields[4]),
            umls_cui: opt(fields[5]),
        });
    }
    let n = entries.len();
    let dict = TermDictionary::from_entries(entries)?;
    log::info!("loaded vocabulary: {n} entries from {}", path.display());
    Ok(dict)
}
