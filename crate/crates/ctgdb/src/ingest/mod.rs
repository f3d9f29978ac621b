//! Archive ingestion: parse every XML file in a directory, apply the
//! inclusion filters, and report exclusion tallies.
//!
//! Parsing runs per-file in parallel; results pass through a deterministic
//! sort-by-nct_id barrier before anything downstream sees them, so output is
//! identical regardless of filesystem enumeration order.

mod xml;

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ArmType, StudyRecord, StudyStatus};
use crate::warnlog::{WarnCode, Warning};

pub use xml::{parse_study, ParseFailure, ParsedStudy};

/// Why a parsed study was excluded. Rules are checked in this order and a
/// study counts once, under the first rule that fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    ResultsWithheld,
    NoEligibility,
    NoConditions,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::ResultsWithheld => "results_withheld",
            ExclusionReason::NoEligibility => "no_eligibility",
            ExclusionReason::NoConditions => "no_conditions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Included,
    Excluded(ExclusionReason),
}

/// Apply the inclusion filters to one parsed study.
pub fn filter_study(study: &StudyRecord) -> FilterOutcome {
    if study.status == StudyStatus::Withheld {
        return FilterOutcome::Excluded(ExclusionReason::ResultsWithheld);
    }
    if study.eligibility.is_unspecified() {
        return FilterOutcome::Excluded(ExclusionReason::NoEligibility);
    }
    if study.conditions.is_empty() {
        return FilterOutcome::Excluded(ExclusionReason::NoConditions);
    }
    FilterOutcome::Included
}

/// Per-run exclusion tally. `total_seen` counts studies that parsed
/// successfully; files that fail to parse are recorded in the warning log
/// and never enter the tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub total_seen: u64,
    pub excluded_results_withheld: u64,
    pub excluded_no_eligibility: u64,
    pub excluded_no_conditions: u64,
    pub included: u64,
}

impl ExclusionReport {
    pub fn tally(&mut self, outcome: FilterOutcome) {
        self.total_seen += 1;
        match outcome {
            FilterOutcome::Included => self.included += 1,
            FilterOutcome::Excluded(ExclusionReason::ResultsWithheld) => {
                self.excluded_results_withheld += 1
            }
            FilterOutcome::Excluded(ExclusionReason::NoEligibility) => {
                self.excluded_no_eligibility += 1
            }
            FilterOutcome::Excluded(ExclusionReason::NoConditions) => {
                self.excluded_no_conditions += 1
            }
        }
    }

    pub fn excluded_total(&self) -> u64 {
        self.excluded_results_withheld + self.excluded_no_eligibility + self.excluded_no_conditions
    }

    pub fn to_kv_line(&self) -> String {
        crate::kv::KvRecord::new()
            .with("total_seen", self.total_seen)
            .with("excluded_results_withheld", self.excluded_results_withheld)
            .with("excluded_no_eligibility", self.excluded_no_eligibility)
            .with("excluded_no_conditions", self.excluded_no_conditions)
            .with("included", self.included)
            .to_line()
    }
}

/// Classify an arm from its label and the reported arm-type text.
///
/// Placebo wins when the reported type is exactly "placebo comparator"
/// (case-insensitively) or the label contains "placebo" as a whole token;
/// sham is analogous. Otherwise the reported type maps through a fixed
/// table and anything unrecognized is `Other`.
pub fn classify_arm(label: &str, reported_type: Option<&str>) -> ArmType {
    let ty = reported_type.map(|t| t.trim().to_lowercase());
    if ty.as_deref() == Some("placebo comparator") || has_word(label, "placebo") {
        return ArmType::Placebo;
    }
    if ty.as_deref() == Some("sham comparator") || has_word(label, "sham") {
        return ArmType::Sham;
    }
    match ty.as_deref() {
        Some("experimental") => ArmType::Active,
        Some("active comparator") => ArmType::Comparator,
        Some("no intervention") => ArmType::NoIntervention,
        _ => ArmType::Other,
    }
}

fn has_word(text: &str, word: &str) -> bool {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .any(|tok| tok == word)
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read input directory {path}: {source}")]
    UnreadableDir {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug)]
pub struct IngestResult {
    /// Included studies, sorted by nct_id.
    pub studies: Vec<StudyRecord>,
    pub report: ExclusionReport,
    pub warnings: Vec<Warning>,
}

/// Ingest every `*.xml` file under `dir` (non-recursive).
///
/// Individual file failures are recorded and skipped; only an unreadable
/// directory is fatal. Duplicate nct_ids keep the first occurrence in
/// file-name order and log the rest.
pub fn ingest_archive(dir: &Path) -> Result<IngestResult, IngestError> {
    let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| IngestError::UnreadableDir {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("xml"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();

    // Warnings reference paths relative to the input dir so logs stay
    // identical when the corpus moves.
    let rel_name = |p: &Path| -> String {
        p.strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };

    let parsed: Vec<(String, Result<ParsedStudy, ParseFailure>)> = files
        .par_iter()
        .map(|path| {
            let name = rel_name(path);
            let result = match std::fs::read(path) {
                Ok(bytes) => parse_study(&bytes),
                Err(e) => Err(ParseFailure::MalformedXml(format!("io error: {e}"))),
            };
            (name, result)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut report = ExclusionReport::default();
    let mut studies = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (file, result) in parsed {
        match result {
            Err(ParseFailure::MissingNctId) => {
                warnings.push(Warning::new(&file, WarnCode::MissingNctId, "skipped file"));
            }
            Err(ParseFailure::MalformedXml(msg)) => {
                warnings.push(Warning::new(
                    &file,
                    WarnCode::MalformedXml,
                    format!("skipped file: {msg}"),
                ));
            }
            Ok(ParsedStudy {
                study,
                warnings: file_warnings,
            }) => {
                for (code, message) in file_warnings {
                    warnings.push(Warning::new(&file, code, message).with_nct(&study.nct_id));
                }
                if !seen_ids.insert(study.nct_id.clone()) {
                    warnings.push(
                        Warning::new(&file, WarnCode::DuplicateNctId, "skipped duplicate study")
                            .with_nct(&study.nct_id),
                    );
                    continue;
                }
                let outcome = filter_study(&study);
                report.tally(outcome);
                if outcome == FilterOutcome::Included {
                    studies.push(study);
                }
            }
        }
    }

    studies.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
    Ok(IngestResult {
        studies,
        report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn minimal_study() -> StudyRecord {
        StudyRecord {
            nct_id: "NCT00000001".into(),
            brief_title: "t".into(),
            official_title: None,
            summary: None,
            registry_url: String::new(),
            status: StudyStatus::Completed,
            phase: Phase::Phase3,
            study_type: StudyType::Interventional,
            conditions: vec!["c".into()],
            interventions: vec![],
            eligibility: EligibilityRecord {
                criteria_text: Some("adults".into()),
                ..Default::default()
            },
            healthy_volunteers: None,
            arms: vec![],
            ae_rows: vec![],
            countries: vec![],
        }
    }

    #[test]
    fn filter_passes_fully_populated_study() {
        assert_eq!(filter_study(&minimal_study()), FilterOutcome::Included);
    }

    #[test]
    fn filter_excludes_withheld_results() {
        let mut s = minimal_study();
        s.status = StudyStatus::Withheld;
        assert_eq!(
            filter_study(&s),
            FilterOutcome::Excluded(ExclusionReason::ResultsWithheld)
        );
    }

    #[test]
    fn filter_excludes_empty_conditions() {
        let mut s = minimal_study();
        s.conditions.clear();
        assert_eq!(
            filter_study(&s),
            FilterOutcome::Excluded(ExclusionReason::NoConditions)
        );
    }

    #[test]
    fn filter_excludes_unspecified_eligibility() {
        let mut s = minimal_study();
        s.eligibility = EligibilityRecord::default();
        assert_eq!(
            filter_study(&s),
            FilterOutcome::Excluded(ExclusionReason::NoEligibility)
        );
    }

    #[test]
    fn filter_precedence_is_fixed() {
        // A study matching every rule counts once, under the first rule.
        let mut s = minimal_study();
        s.status = StudyStatus::Withheld;
        s.conditions.clear();
        s.eligibility = EligibilityRecord::default();
        assert_eq!(
            filter_study(&s),
            FilterOutcome::Excluded(ExclusionReason::ResultsWithheld)
        );
    }

    #[test]
    fn structured_eligibility_without_criteria_counts_as_specified() {
        let mut s = minimal_study();
        s.eligibility = EligibilityRecord {
            minimum_age: Some(AgeBound {
                value: 18.0,
                unit: AgeUnit::Years,
            }),
            ..Default::default()
        };
        assert_eq!(filter_study(&s), FilterOutcome::Included);
    }

    #[test]
    fn classify_arm_direct_rules() {
        assert_eq!(
            classify_arm("Placebo", Some("Placebo Comparator")),
            ArmType::Placebo
        );
        assert_eq!(classify_arm("Drug X 10 mg", Some("Experimental")), ArmType::Active);
        assert_eq!(classify_arm("Matching placebo BID", None), ArmType::Placebo);
        assert_eq!(
            classify_arm("Standard of care", Some("Active Comparator")),
            ArmType::Comparator
        );
        assert_eq!(
            classify_arm("Observation only", Some("No Intervention")),
            ArmType::NoIntervention
        );
        assert_eq!(classify_arm("Sham procedure", None), ArmType::Sham);
        assert_eq!(classify_arm("Sham device", Some("Sham Comparator")), ArmType::Sham);
        assert_eq!(classify_arm("Drug Y", None), ArmType::Other);
    }

    #[test]
    fn classify_arm_requires_whole_token() {
        // Substrings do not trigger the placebo rule.
        assert_eq!(classify_arm("Displacebol 5 mg", Some("Experimental")), ArmType::Active);
        assert_eq!(classify_arm("PLACEBO (matching)", None), ArmType::Placebo);
    }

    #[test]
    fn exclusion_report_conserves_counts() {
        let mut r = ExclusionReport::default();
        let mut s1 = minimal_study();
        s1.status = StudyStatus::Withheld;
        let mut s2 = minimal_study();
        s2.conditions.clear();
        for s in [&minimal_study(), &s1, &s2] {
            r.tally(filter_study(s));
        }
        assert_eq!(r.total_seen, 3);
        assert_eq!(r.included, 1);
        assert_eq!(r.total_seen, r.included + r.excluded_total());
    }

    #[test]
    fn age_bound_canonicalizes_to_days() {
        let years = AgeBound {
            value: 18.0,
            unit: AgeUnit::Years,
        };
        assert_eq!(years.to_days(), 6574.5);
        let months = AgeBound {
            value: 6.0,
            unit: AgeUnit::Months,
        };
        assert_eq!(months.to_days(), 182.625);
        let weeks = AgeBound {
            value: 2.0,
            unit: AgeUnit::Weeks,
        };
        assert_eq!(weeks.to_days(), 14.0);
    }
}
