//! Matcher correctness against an independent brute-force oracle, plus
//! canonicalization and similarity properties over randomized inputs.
//!
//! The oracle scans every dictionary entry with its own bigram extraction
//! and Dice computation and applies the documented tie-break, so it shares
//! no candidate-search machinery with the indexed implementation.

use std::collections::HashSet;
use std::path::PathBuf;

use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ctgdb::normalizer::{
    bigram_set, canonicalize, dice_similarity, match_term, MatchStage, NormalizerConfig,
};
use ctgdb::terminology::{load_dictionary, TermDictionary, TermEntry, TermLevel};

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

fn oracle_bigrams(s: &str) -> HashSet<(char, char)> {
    let chars: Vec<char> = s.chars().collect();
    match chars.len() {
        0 => HashSet::new(),
        1 => std::iter::once((chars[0], '_')).collect(),
        _ => chars.windows(2).map(|w| (w[0], w[1])).collect(),
    }
}

fn oracle_dice(a: &HashSet<(char, char)>, b: &HashSet<(char, char)>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    2.0 * inter as f64 / (a.len() + b.len()) as f64
}

/// (level rank, numeric code, code string) — PT first, then lowest code.
fn oracle_key(e: &TermEntry) -> (u8, u64, String) {
    let rank = match e.level {
        TermLevel::Pt => 0,
        TermLevel::Llt => 1,
    };
    (rank, e.code.parse().unwrap(), e.code.clone())
}

/// Straight-line reimplementation of both stages: exact by scanning every
/// entry for canonical equality, fuzzy by scoring every entry.
fn oracle_match(
    raw: &str,
    dict: &TermDictionary,
    cfg: &NormalizerConfig,
) -> (MatchStage, Option<String>, f64) {
    let (canonical, _) = canonicalize(raw, cfg.strip_grading);
    let exact: Option<&TermEntry> = dict
        .entries()
        .iter()
        .filter(|e| canonicalize(&e.text, false).0 == canonical)
        .min_by_key(|e| oracle_key(e));
    if let Some(e) = exact {
        return (MatchStage::Exact, Some(e.code.clone()), 1.0);
    }
    if cfg.enable_fuzzy {
        let q = oracle_bigrams(&canonical);
        let mut best: Option<(f64, &TermEntry)> = None;
        for e in dict.entries() {
            let sim = oracle_dice(&q, &oracle_bigrams(&canonicalize(&e.text, false).0));
            let better = match &best {
                None => true,
                Some((bs, be)) => sim > *bs || (sim == *bs && oracle_key(e) < oracle_key(be)),
            };
            if better {
                best = Some((sim, e));
            }
        }
        if let Some((sim, e)) = best {
            if sim >= cfg.fuzzy_threshold {
                return (MatchStage::Fuzzy, Some(e.code.clone()), sim);
            }
        }
    }
    (MatchStage::Unmapped, None, 0.0)
}

// ---------------------------------------------------------------------------
// Randomized vocabulary + corpus generation
// ---------------------------------------------------------------------------

const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', ' '];

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut chars: Vec<char> = base.chars().collect();
    if chars.is_empty() {
        return random_text(rng, 6);
    }
    match rng.gen_range(0..4) {
        0 => {
            let i = rng.gen_range(0..chars.len());
            chars[i] = *ALPHABET.choose(rng).unwrap();
        }
        1 => {
            let i = rng.gen_range(0..chars.len());
            chars.remove(i);
        }
        2 => {
            let i = rng.gen_range(0..=chars.len());
            chars.insert(i, *ALPHABET.choose(rng).unwrap());
        }
        _ => {
            if chars.len() >= 2 {
                let i = rng.gen_range(0..chars.len() - 1);
                chars.swap(i, i + 1);
            }
        }
    }
    chars.into_iter().collect()
}

fn random_dict(rng: &mut ChaCha8Rng, max_entries: usize) -> TermDictionary {
    let n = rng.gen_range(1..=max_entries);
    let mut codes: Vec<u64> = (1..=n as u64).map(|i| i * 7 + 100).collect();
    codes.shuffle(rng);
    let mut entries = Vec::with_capacity(n);
    let mut pt_codes: Vec<String> = Vec::new();
    for (i, code) in codes.iter().enumerate() {
        let code = code.to_string();
        let make_llt = i > 0 && !pt_codes.is_empty() && rng.gen_bool(0.25);
        if make_llt {
            entries.push(TermEntry {
                code: code.clone(),
                text: random_text(rng, 12),
                level: TermLevel::Llt,
                parent_pt_code: Some(pt_codes.choose(rng).unwrap().clone()),
                soc_code: None,
                umls_cui: None,
            });
        } else {
            pt_codes.push(code.clone());
            entries.push(TermEntry {
                code,
                text: random_text(rng, 12),
                level: TermLevel::Pt,
                parent_pt_code: None,
                soc_code: None,
                umls_cui: None,
            });
        }
    }
    TermDictionary::from_entries(entries).unwrap()
}

fn random_cfg(rng: &mut ChaCha8Rng) -> NormalizerConfig {
    NormalizerConfig {
        fuzzy_threshold: rng.gen_range(0.30..=1.0),
        // Includes values where pruning is inadmissible and the matcher must
        // fall back to exhaustive scoring.
        min_candidate_bigram_overlap: rng.gen_range(0..=4),
        strip_grading: rng.gen_bool(0.5),
        enable_fuzzy: true,
    }
}

#[test]
fn matcher_equals_brute_force_oracle_on_randomized_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0usize;
    for _ in 0..40 {
        let dict = random_dict(&mut rng, 60);
        let cfg = random_cfg(&mut rng);
        for _ in 0..12 {
            let raw = if rng.gen_bool(0.6) {
                let base = &dict.entries()[rng.gen_range(0..dict.len())].text.clone();
                mutate(&mut rng, base)
            } else {
                random_text(&mut rng, 14)
            };
            let got = match_term(&raw, &dict, &cfg);
            let (stage, code, sim) = oracle_match(&raw, &dict, &cfg);
            assert_eq!(
                (got.stage, got.matched_code.clone(), got.similarity),
                (stage, code, sim),
                "divergence on raw={raw:?} cfg={cfg:?}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 480);
}

#[test]
fn raising_threshold_never_maps_an_unmapped_string() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    for _ in 0..25 {
        let dict = random_dict(&mut rng, 40);
        let mut cfg_low = random_cfg(&mut rng);
        cfg_low.fuzzy_threshold = rng.gen_range(0.30..0.60);
        let mut cfg_high = cfg_low.clone();
        cfg_high.fuzzy_threshold = cfg_low.fuzzy_threshold + rng.gen_range(0.05..0.39);
        for _ in 0..8 {
            let raw = random_text(&mut rng, 12);
            let low = match_term(&raw, &dict, &cfg_low);
            let high = match_term(&raw, &dict, &cfg_high);
            if low.stage == MatchStage::Unmapped {
                assert_eq!(high.stage, MatchStage::Unmapped, "raw={raw:?}");
            }
        }
    }
}

#[test]
fn exact_stage_dominates_fuzzy() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd00d);
    for _ in 0..25 {
        let dict = random_dict(&mut rng, 40);
        let cfg = random_cfg(&mut rng);
        // Dictionary texts themselves must always resolve at the exact stage.
        for e in dict.entries() {
            let m = match_term(&e.text, &dict, &cfg);
            assert_eq!(m.stage, MatchStage::Exact, "text={:?}", e.text);
            assert_eq!(m.similarity, 1.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Properties over arbitrary (unicode) strings
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn canonicalize_is_idempotent(raw in "\\PC{0,40}", strip in any::<bool>()) {
        let (once, _) = canonicalize(&raw, strip);
        let (twice, suffix) = canonicalize(&once, strip);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(suffix, None);
    }

    #[test]
    fn canonical_text_is_lowercase_alphanumeric_words(raw in "\\PC{0,40}") {
        let (canonical, _) = canonicalize(&raw, true);
        prop_assert!(!canonical.starts_with(' ') && !canonical.ends_with(' '));
        prop_assert!(!canonical.contains("  "));
        for c in canonical.chars() {
            prop_assert!(c.is_alphanumeric() || c == ' ');
        }
        // Lowercasing is a fixed point (some alphabetic symbols have no
        // lowercase mapping at all, e.g. negative-circled letters).
        prop_assert_eq!(canonical.to_lowercase(), canonical);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(a in "[a-f ]{0,16}", b in "[a-f ]{0,16}") {
        let (ca, _) = canonicalize(&a, false);
        let (cb, _) = canonicalize(&b, false);
        let sa = bigram_set(&ca);
        let sb = bigram_set(&cb);
        let ab = dice_similarity(&sa, &sb);
        let ba = dice_similarity(&sb, &sa);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        if !sa.is_empty() {
            prop_assert_eq!(dice_similarity(&sa, &sa), 1.0);
        }
    }
}

#[test]
fn canonicalize_tolerates_uncased_alphabetic_symbols() {
    // U+1F150 is alphabetic with no lowercase mapping; it must survive
    // canonicalization and stay a fixed point.
    let (once, _) = canonicalize("\u{1F150}", true);
    let (twice, _) = canonicalize(&once, true);
    assert_eq!(once, twice);
}

// ---------------------------------------------------------------------------
// Bundled vocabulary
// ---------------------------------------------------------------------------

fn bundled_vocab_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/vocabulary.tsv")
}

#[test]
fn bundled_vocabulary_row_count_matches_file() {
    let path = bundled_vocab_path();
    let dict = load_dictionary(&path).unwrap();
    let file_rows = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .count();
    assert_eq!(dict.len(), file_rows);
    assert_eq!(dict.len(), 200);
}

#[test]
fn misspelled_nausea_fuzzy_matches_against_bundled_vocabulary() {
    let dict = load_dictionary(&bundled_vocab_path()).unwrap();
    let cfg = NormalizerConfig {
        fuzzy_threshold: 0.55,
        ..Default::default()
    };
    let m = match_term("Nausae", &dict, &cfg);
    assert_eq!(m.stage, MatchStage::Fuzzy);
    assert_eq!(m.similarity, 0.6);
    assert_eq!(m.matched_pt_code.as_deref(), Some("20000001"));
    // Cross-check the winner with the exhaustive oracle.
    let (stage, code, sim) = oracle_match("Nausae", &dict, &cfg);
    assert_eq!((stage, code.as_deref(), sim), (MatchStage::Fuzzy, Some("20000001"), 0.6));

    // At the default threshold the misspelling stays unmapped.
    let strict = match_term("Nausae", &dict, &NormalizerConfig::default());
    assert_eq!(strict.stage, MatchStage::Unmapped);
}

#[test]
fn bundled_vocabulary_exact_matches_are_case_and_punctuation_insensitive() {
    let dict = load_dictionary(&bundled_vocab_path()).unwrap();
    let cfg = NormalizerConfig::default();
    for raw in ["Nausea", "NAUSEA", "Nausea?", "Nausea G1", "nausea g3"] {
        let m = match_term(raw, &dict, &cfg);
        assert_eq!(m.stage, MatchStage::Exact, "raw={raw}");
        assert_eq!(m.matched_pt_code.as_deref(), Some("20000001"), "raw={raw}");
    }
    // LLT resolves to its parent PT.
    let m = match_term("GI bleed", &dict, &cfg);
    assert_eq!(m.stage, MatchStage::Exact);
    assert_eq!(m.matched_pt_code.as_deref(), Some("20000003"));
}
