//! Two-stage alignment of reported strings to vocabulary codes.
//!
//! Stage 1 is exact lookup of the canonicalized string against the
//! dictionary's exact index. Stage 2 gathers candidates through the bigram
//! posting lists and scores them with the Dice coefficient over character
//! bigrams, accepting the best score at or above the configured threshold.
//!
//! Candidate pruning by shared-bigram count is only applied when it is
//! provably lossless for the active threshold; otherwise matching falls
//! back to exhaustive scoring so the result is always identical to a
//! brute-force scan.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::analytics::CoverageReport;
use crate::terminology::TermDictionary;

/// Character pair. Single-character inputs are padded with `_` so their
/// bigram set is non-empty.
pub type Bigram = [char; 2];

pub const PAD_SENTINEL: char = '_';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    /// Minimum Dice score accepted at the fuzzy stage, in (0, 1].
    pub fuzzy_threshold: f64,
    /// Minimum number of shared bigrams for posting-list candidates.
    pub min_candidate_bigram_overlap: usize,
    /// Strip trailing grading annotations ("g1", "grade 3", "grade iv")
    /// before matching.
    pub strip_grading: bool,
    pub enable_fuzzy: bool,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            fuzzy_threshold: 0.85,
            min_candidate_bigram_overlap: 2,
            strip_grading: true,
            enable_fuzzy: true,
        }
    }
}

impl NormalizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fuzzy_threshold > 0.0 && self.fuzzy_threshold <= 1.0) {
            return Err(format!(
                "fuzzy_threshold must be in (0, 1], got {}",
                self.fuzzy_threshold
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    Exact,
    Fuzzy,
    Unmapped,
}

impl MatchStage {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchStage::Exact => "exact",
            MatchStage::Fuzzy => "fuzzy",
            MatchStage::Unmapped => "unmapped",
        }
    }
}

/// Provenance of one reported string -> code alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermMapping {
    pub reported_string: String,
    pub canonical_string: String,
    pub matched_code: Option<String>,
    /// PT the match resolves to (the match itself when it is a PT).
    pub matched_pt_code: Option<String>,
    pub stage: MatchStage,
    /// 1.0 for exact, Dice score for fuzzy, 0.0 for unmapped.
    pub similarity: f64,
    pub stripped_suffix: Option<String>,
}

/// Canonicalize a reported string: compatibility-normalize, lowercase, fold
/// punctuation to spaces, collapse whitespace, and (optionally) strip
/// trailing grading annotations. Idempotent.
///
/// Returns the canonical text and the stripped suffix, if any.
pub fn canonicalize(raw: &str, strip_grading: bool) -> (String, Option<String>) {
    let folded: String = raw
        .nfkc()
        .collect::<String>()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut tokens: Vec<&str> = folded.split_whitespace().collect();

    let mut stripped: Vec<&str> = Vec::new();
    if strip_grading {
        // Strip repeatedly so the result is a fixed point, but never strip
        // the whole string down to nothing.
        loop {
            let n = tokens.len();
            if n >= 2 && is_g_token(tokens[n - 1]) {
                stripped.push(tokens[n - 1]);
                tokens.truncate(n - 1);
            } else if n >= 3 && tokens[n - 2] == "grade" && is_grade_value(tokens[n - 1]) {
                stripped.push(tokens[n - 1]);
                stripped.push(tokens[n - 2]);
                tokens.truncate(n - 2);
            } else {
                break;
            }
        }
    }

    let canonical = tokens.join(" ");
    let suffix = if stripped.is_empty() {
        None
    } else {
        stripped.reverse();
        Some(stripped.join(" "))
    };
    (canonical, suffix)
}

/// `g1` .. `g5`
fn is_g_token(tok: &str) -> bool {
    let b = tok.as_bytes();
    b.len() == 2 && b[0] == b'g' && (b'1'..=b'5').contains(&b[1])
}

/// `1`..`5` or roman `i`..`v`
fn is_grade_value(tok: &str) -> bool {
    matches!(tok, "1" | "2" | "3" | "4" | "5" | "i" | "ii" | "iii" | "iv" | "v")
}

/// Set of adjacent character pairs of the canonical string (spaces
/// included). Single characters are padded; empty input yields the empty
/// set.
pub fn bigram_set(canonical: &str) -> HashSet<Bigram> {
    let chars: Vec<char> = canonical.chars().collect();
    match chars.len() {
        0 => HashSet::new(),
        1 => std::iter::once([chars[0], PAD_SENTINEL]).collect(),
        _ => chars.windows(2).map(|w| [w[0], w[1]]).collect(),
    }
}

/// Dice coefficient `2·|a∩b| / (|a|+|b|)`; 0 when both sets are empty.
pub fn dice_similarity(a: &HashSet<Bigram>, b: &HashSet<Bigram>) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|bg| large.contains(*bg)).count();
    2.0 * inter as f64 / total as f64
}

/// Pruning by `overlap >= k` is lossless iff every skipped entry (overlap
/// <= k-1) is guaranteed to score strictly below the threshold. The tight
/// bound over entries with overlap m <= k-1 is 2(k-1)/(|q|+k-1).
fn pruning_admissible(query_len: usize, cfg: &NormalizerConfig) -> bool {
    let k = cfg.min_candidate_bigram_overlap;
    if k == 0 {
        return false;
    }
    let bound = 2.0 * (k - 1) as f64 / (query_len + k - 1) as f64;
    bound < cfg.fuzzy_threshold
}

/// Align one reported string. Pure function of its inputs.
pub fn match_term(raw: &str, dict: &TermDictionary, cfg: &NormalizerConfig) -> TermMapping {
    let (canonical, stripped_suffix) = canonicalize(raw, cfg.strip_grading);

    // Stage 1: exact lookup on the canonical text.
    if let Some(ids) = dict.exact_candidates(&canonical) {
        let best = ids
            .iter()
            .copied()
            .min_by_key(|&id| dict.preference_key(id))
            .expect("exact index lists are non-empty");
        return mapping_for(raw, canonical, stripped_suffix, MatchStage::Exact, 1.0, best, dict);
    }

    // Stage 2: bigram fuzzy alignment.
    if cfg.enable_fuzzy {
        let query = bigram_set(&canonical);
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |id: usize, sim: f64| {
            let better = match best {
                None => true,
                Some((best_sim, best_id)) => {
                    sim > best_sim
                        || (sim == best_sim
                            && dict.preference_key(id) < dict.preference_key(best_id))
                }
            };
            if better {
                best = Some((sim, id));
            }
        };

        if pruning_admissible(query.len(), cfg) {
            let mut overlaps: HashMap<usize, usize> = HashMap::new();
            for bg in &query {
                if let Some(list) = dict.posting_list(bg) {
                    for &id in list {
                        *overlaps.entry(id).or_insert(0) += 1;
                    }
                }
            }
            for (&id, &overlap) in &overlaps {
                if overlap >= cfg.min_candidate_bigram_overlap {
                    consider(id, dice_similarity(&query, dict.bigrams(id)));
                }
            }
        } else {
            for id in 0..dict.len() {
                consider(id, dice_similarity(&query, dict.bigrams(id)));
            }
        }

        if let Some((sim, id)) = best {
            if sim >= cfg.fuzzy_threshold {
                return mapping_for(raw, canonical, stripped_suffix, MatchStage::Fuzzy, sim, id, dict);
            }
        }
    }

    TermMapping {
        reported_string: raw.to_string(),
        canonical_string: canonical,
        matched_code: None,
        matched_pt_code: None,
        stage: MatchStage::Unmapped,
        similarity: 0.0,
        stripped_suffix,
    }
}

fn mapping_for(
    raw: &str,
    canonical: String,
    stripped_suffix: Option<String>,
    stage: MatchStage,
    similarity: f64,
    entry_id: usize,
    dict: &TermDictionary,
) -> TermMapping {
    let entry = dict.entry(entry_id);
    let pt = dict
        .pt_of(&entry.code)
        .expect("dictionary validated at construction");
    TermMapping {
        reported_string: raw.to_string(),
        canonical_string: canonical,
        matched_code: Some(entry.code.clone()),
        matched_pt_code: Some(pt.code.clone()),
        stage,
        similarity,
        stripped_suffix,
    }
}

/// Normalize a corpus of `(raw string, participants affected)` rows.
///
/// Each unique raw string is matched once; the weighted coverage level
/// weights it by the sum of participants over all rows bearing it. Mappings
/// come back sorted by raw string.
pub fn normalize_corpus(
    rows: &[(String, u64)],
    dict: &TermDictionary,
    cfg: &NormalizerConfig,
) -> (Vec<TermMapping>, CoverageReport) {
    let mut weights: BTreeMap<&str, u64> = BTreeMap::new();
    for (raw, affected) in rows {
        *weights.entry(raw.as_str()).or_insert(0) += affected;
    }
    let uniques: Vec<&str> = weights.keys().copied().collect();
    let mappings: Vec<TermMapping> = uniques
        .par_iter()
        .map(|raw| match_term(raw, dict, cfg))
        .collect();
    let report = CoverageReport::from_mappings(
        mappings
            .iter()
            .map(|m| (m.stage, weights[m.reported_string.as_str()])),
    );
    (mappings, report)
}
