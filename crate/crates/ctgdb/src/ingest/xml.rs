//! Typed parsing of one registry XML document into a [`StudyRecord`].
//!
//! The document layout is the subset schema described in
//! `docs/registry-subset.xsd`. Every recognized element lands in a typed
//! field; unrecognized elements are skipped and reported in the per-file
//! warning list so nothing is dropped silently.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::model::{
    AeCountRow, AgeBound, AgeUnit, ArmRecord, EligibilityRecord, EthnicityCount,
    InterventionRecord, InterventionType, Phase, Seriousness, SexCounts, SexEligibility,
    StudyRecord, StudyStatus, StudyType,
};
use crate::warnlog::WarnCode;

use super::classify_arm;

/// Parse failure for a single document. Failures never abort an archive run;
/// the caller records them and moves on.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseFailure {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing nct_id element")]
    MissingNctId,
}

/// Successful parse: the record plus any non-fatal findings.
#[derive(Debug)]
pub struct ParsedStudy {
    pub study: StudyRecord,
    pub warnings: Vec<(WarnCode, String)>,
}

struct DocParser<'a> {
    reader: Reader<&'a [u8]>,
    warnings: Vec<(WarnCode, String)>,
}

/// Raw arm fields before key assignment and type classification.
#[derive(Default)]
struct RawArm {
    label: String,
    reported_type: Option<String>,
    participants_started: Option<u64>,
    sex_counts: Option<SexCounts>,
    age_summary: Option<crate::model::AgeSummary>,
    ethnicity_counts: Vec<EthnicityCount>,
}

pub fn parse_study(xml_bytes: &[u8]) -> Result<ParsedStudy, ParseFailure> {
    let mut reader = Reader::from_reader(xml_bytes);
    reader.config_mut().trim_text(true);
    let mut parser = DocParser {
        reader,
        warnings: Vec::new(),
    };
    parser.parse_document()
}

impl<'a> DocParser<'a> {
    fn parse_document(&mut self) -> Result<ParsedStudy, ParseFailure> {
        // Locate the root element.
        let root = loop {
            match self.next_event()? {
                Event::Start(e) => break e.into_owned(),
                Event::Eof => return Err(ParseFailure::MalformedXml("no root element".into())),
                Event::Decl(_) | Event::Comment(_) | Event::Text(_) | Event::PI(_)
                | Event::DocType(_) => continue,
                Event::Empty(_) => {
                    return Err(ParseFailure::MalformedXml("empty root element".into()))
                }
                Event::End(_) | Event::CData(_) => {
                    return Err(ParseFailure::MalformedXml("unexpected event before root".into()))
                }
            }
        };
        if root.name().as_ref() != b"clinical_study" {
            self.warn(
                WarnCode::UnrecognizedElement,
                format!("unexpected root element <{}>", name_of(&root)),
            );
        }

        let mut nct_id = String::new();
        let mut brief_title = String::new();
        let mut official_title = None;
        let mut summary = None;
        let mut registry_url = String::new();
        let mut status = StudyStatus::Other;
        let mut phase = Phase::Unknown;
        let mut study_type = StudyType::Other;
        let mut conditions = Vec::new();
        let mut countries = Vec::new();
        let mut eligibility = EligibilityRecord::default();
        let mut healthy_volunteers = None;
        let mut raw_arms: Vec<RawArm> = Vec::new();
        let mut interventions: Vec<InterventionRecord> = Vec::new();
        let mut raw_ae_rows: Vec<AeCountRow> = Vec::new();

        loop {
            match self.next_event()? {
                Event::Start(e) => match e.name().as_ref() {
                    b"nct_id" => nct_id = self.read_text("nct_id")?,
                    b"brief_title" => brief_title = self.read_text("brief_title")?,
                    b"official_title" => official_title = Some(self.read_text("official_title")?),
                    b"summary" => summary = Some(self.read_text("summary")?),
                    b"registry_url" => registry_url = self.read_text("registry_url")?,
                    b"status" => {
                        let t = self.read_text("status")?;
                        status = self.parse_status(&t);
                    }
                    b"phase" => {
                        let t = self.read_text("phase")?;
                        phase = self.parse_phase(&t);
                    }
                    b"study_type" => {
                        let t = self.read_text("study_type")?;
                        study_type = self.parse_study_type(&t);
                    }
                    b"condition" => conditions.push(self.read_text("condition")?),
                    b"country" => countries.push(self.read_text("country")?),
                    b"healthy_volunteers" => {
                        let t = self.read_text("healthy_volunteers")?;
                        healthy_volunteers = self.parse_bool(&t, "healthy_volunteers");
                    }
                    b"eligibility" => eligibility = self.parse_eligibility()?,
                    b"arm" => raw_arms.push(self.parse_arm()?),
                    b"intervention" => interventions.push(self.parse_intervention()?),
                    b"ae_row" => raw_ae_rows.push(self.parse_ae_row()?),
                    _ => self.skip_unrecognized(&e)?,
                },
                Event::Empty(e) => self.warn_unrecognized(&e),
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml("unexpected end of document".into()))
                }
                _ => {}
            }
        }

        if nct_id.trim().is_empty() {
            return Err(ParseFailure::MissingNctId);
        }
        let nct_id = nct_id.trim().to_string();

        let arms: Vec<ArmRecord> = raw_arms
            .into_iter()
            .enumerate()
            .map(|(i, raw)| ArmRecord {
                arm_key: ArmRecord::make_key(&nct_id, i + 1),
                arm_type: classify_arm(&raw.label, raw.reported_type.as_deref()),
                label: raw.label,
                participants_started: raw.participants_started,
                sex_counts: raw.sex_counts,
                age_summary: raw.age_summary,
                ethnicity_counts: raw.ethnicity_counts,
            })
            .collect();

        let ae_rows = self.resolve_ae_rows(raw_ae_rows, &arms);
        self.check_eligibility(&eligibility);

        let study = StudyRecord {
            nct_id,
            brief_title,
            official_title,
            summary,
            registry_url,
            status,
            phase,
            study_type,
            conditions,
            interventions,
            eligibility,
            healthy_volunteers,
            arms,
            ae_rows,
            countries,
        };
        Ok(ParsedStudy {
            study,
            warnings: std::mem::take(&mut self.warnings),
        })
    }

    fn parse_eligibility(&mut self) -> Result<EligibilityRecord, ParseFailure> {
        let mut rec = EligibilityRecord::default();
        loop {
            match self.next_event()? {
                Event::Start(e) => match e.name().as_ref() {
                    b"minimum_age" => {
                        let t = self.read_text("minimum_age")?;
                        rec.minimum_age = self.parse_age(&t, "minimum_age");
                    }
                    b"maximum_age" => {
                        let t = self.read_text("maximum_age")?;
                        rec.maximum_age = self.parse_age(&t, "maximum_age");
                    }
                    b"sex" => {
                        let t = self.read_text("sex")?;
                        rec.sex = self.parse_sex(&t);
                    }
                    b"criteria" => rec.criteria_text = Some(self.read_text("criteria")?),
                    _ => self.skip_unrecognized(&e)?,
                },
                Event::Empty(e) => self.warn_unrecognized(&e),
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml("unexpected end in <eligibility>".into()))
                }
                _ => {}
            }
        }
        Ok(rec)
    }

    fn parse_arm(&mut self) -> Result<RawArm, ParseFailure> {
        let mut arm = RawArm::default();
        loop {
            match self.next_event()? {
                Event::Start(e) => match e.name().as_ref() {
                    b"label" => arm.label = self.read_text("label")?,
                    b"type" => arm.reported_type = Some(self.read_text("type")?),
                    b"participants_started" => {
                        let t = self.read_text("participants_started")?;
                        arm.participants_started = self.parse_count(&t, "participants_started");
                    }
                    _ => self.skip_unrecognized(&e)?,
                },
                Event::Empty(e) => match e.name().as_ref() {
                    b"sex_counts" => arm.sex_counts = self.parse_sex_counts(&e),
                    b"age_summary" => arm.age_summary = self.parse_age_summary(&e),
                    b"ethnicity_count" => {
                        if let Some(ec) = self.parse_ethnicity_count(&e) {
                            arm.ethnicity_counts.push(ec);
                        }
                    }
                    _ => self.warn_unrecognized(&e),
                },
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml("unexpected end in <arm>".into()))
                }
                _ => {}
            }
        }
        Ok(arm)
    }

    fn parse_intervention(&mut self) -> Result<InterventionRecord, ParseFailure> {
        let mut ty = InterventionType::Other;
        let mut name = String::new();
        let mut arm_refs = Vec::new();
        loop {
            match self.next_event()? {
                Event::Start(e) => match e.name().as_ref() {
                    b"type" => {
                        let t = self.read_text("type")?;
                        ty = self.parse_intervention_type(&t);
                    }
                    b"name" => name = self.read_text("name")?,
                    b"arm_ref" => arm_refs.push(self.read_text("arm_ref")?),
                    _ => self.skip_unrecognized(&e)?,
                },
                Event::Empty(e) => self.warn_unrecognized(&e),
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml("unexpected end in <intervention>".into()))
                }
                _ => {}
            }
        }
        if name.trim().is_empty() {
            self.warn(WarnCode::InvalidValue, "intervention with empty name".to_string());
        }
        Ok(InterventionRecord {
            intervention_type: ty,
            name,
            arm_refs,
        })
    }

    fn parse_ae_row(&mut self) -> Result<AeCountRow, ParseFailure> {
        let mut arm_ref = String::new();
        let mut reported_term = String::new();
        let mut seriousness = Seriousness::Other;
        let mut participants_affected = 0u64;
        let mut participants_at_risk = None;
        let mut organ_system_raw = None;
        loop {
            match self.next_event()? {
                Event::Start(e) => match e.name().as_ref() {
                    b"arm_ref" => arm_ref = self.read_text("arm_ref")?,
                    b"term" => reported_term = self.read_text("term")?,
                    b"seriousness" => {
                        let t = self.read_text("seriousness")?;
                        seriousness = match t.trim().to_ascii_lowercase().as_str() {
                            "serious" => Seriousness::Serious,
                            "other" => Seriousness::Other,
                            other => {
                                self.warn(
                                    WarnCode::InvalidValue,
                                    format!("unknown seriousness '{other}', treated as other"),
                                );
                                Seriousness::Other
                            }
                        };
                    }
                    b"participants_affected" => {
                        let t = self.read_text("participants_affected")?;
                        participants_affected =
                            self.parse_count(&t, "participants_affected").unwrap_or(0);
                    }
                    b"participants_at_risk" => {
                        let t = self.read_text("participants_at_risk")?;
                        participants_at_risk = self.parse_count(&t, "participants_at_risk");
                    }
                    b"organ_system" => organ_system_raw = Some(self.read_text("organ_system")?),
                    _ => self.skip_unrecognized(&e)?,
                },
                Event::Empty(e) => self.warn_unrecognized(&e),
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml("unexpected end in <ae_row>".into()))
                }
                _ => {}
            }
        }
        Ok(AeCountRow {
            arm_ref,
            resolved_arm_key: None,
            reported_term,
            seriousness,
            participants_affected,
            participants_at_risk,
            organ_system_raw,
        })
    }

    /// Match each AE row's arm reference to exactly one arm label; rows that
    /// match zero or several arms are flagged unresolved and kept.
    fn resolve_ae_rows(&mut self, rows: Vec<AeCountRow>, arms: &[ArmRecord]) -> Vec<AeCountRow> {
        rows.into_iter()
            .map(|mut row| {
                let matches: Vec<&ArmRecord> = arms
                    .iter()
                    .filter(|a| a.label.trim() == row.arm_ref.trim())
                    .collect();
                row.resolved_arm_key = match matches.len() {
                    1 => Some(matches[0].arm_key.clone()),
                    0 => {
                        self.warn(
                            WarnCode::UnresolvedArmRef,
                            format!("no arm labeled '{}'", row.arm_ref),
                        );
                        None
                    }
                    n => {
                        self.warn(
                            WarnCode::AmbiguousArmRef,
                            format!("{n} arms labeled '{}'", row.arm_ref),
                        );
                        None
                    }
                };
                if let Some(at_risk) = row.participants_at_risk {
                    if row.participants_affected > at_risk {
                        self.warn(
                            WarnCode::AffectedExceedsAtRisk,
                            format!(
                                "term '{}': affected {} > at risk {}",
                                row.reported_term, row.participants_affected, at_risk
                            ),
                        );
                    }
                }
                row
            })
            .collect()
    }

    fn check_eligibility(&mut self, rec: &EligibilityRecord) {
        if let (Some(min), Some(max)) = (rec.minimum_age, rec.maximum_age) {
            if min.to_days() > max.to_days() {
                self.warn(
                    WarnCode::AgeRangeInconsistent,
                    format!(
                        "minimum age {} days exceeds maximum age {} days",
                        min.to_days(),
                        max.to_days()
                    ),
                );
            }
        }
    }

    // ---- low-level helpers ----

    fn next_event(&mut self) -> Result<Event<'a>, ParseFailure> {
        self.reader
            .read_event()
            .map_err(|e| ParseFailure::MalformedXml(e.to_string()))
    }

    /// Collect the text content of the element we just entered, up to its
    /// end tag. Nested elements inside a text field are unrecognized.
    fn read_text(&mut self, context: &str) -> Result<String, ParseFailure> {
        let mut out = String::new();
        loop {
            match self.next_event()? {
                Event::Text(t) => {
                    let decoded = t
                        .unescape()
                        .map_err(|e| ParseFailure::MalformedXml(e.to_string()))?;
                    out.push_str(&decoded);
                }
                Event::CData(c) => {
                    out.push_str(&String::from_utf8_lossy(&c.into_inner()));
                }
                Event::Start(e) => {
                    self.warn(
                        WarnCode::UnrecognizedElement,
                        format!("unexpected <{}> inside <{context}>", name_of(&e)),
                    );
                    self.skip_subtree()?;
                }
                Event::Empty(e) => self.warn(
                    WarnCode::UnrecognizedElement,
                    format!("unexpected <{}/> inside <{context}>", name_of(&e)),
                ),
                Event::End(_) => break,
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml(format!(
                        "unexpected end inside <{context}>"
                    )))
                }
                _ => {}
            }
        }
        Ok(out.trim().to_string())
    }

    fn skip_unrecognized(&mut self, start: &BytesStart<'_>) -> Result<(), ParseFailure> {
        self.warn_unrecognized(start);
        self.skip_subtree()
    }

    fn warn_unrecognized(&mut self, start: &BytesStart<'_>) {
        self.warn(
            WarnCode::UnrecognizedElement,
            format!("skipped unrecognized element <{}>", name_of(start)),
        );
    }

    /// Skip everything up to and including the end tag matching the start
    /// tag already consumed.
    fn skip_subtree(&mut self) -> Result<(), ParseFailure> {
        let mut depth = 1usize;
        loop {
            match self.next_event()? {
                Event::Start(_) => depth += 1,
                Event::End(_) => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                Event::Eof => {
                    return Err(ParseFailure::MalformedXml(
                        "unexpected end while skipping element".into(),
                    ))
                }
                _ => {}
            }
        }
    }

    fn attr(&mut self, e: &BytesStart<'_>, name: &str) -> Option<String> {
        for attr in e.attributes() {
            match attr {
                Ok(a) if a.key.as_ref() == name.as_bytes() => {
                    return a.unescape_value().ok().map(|v| v.trim().to_string());
                }
                Ok(_) => {}
                Err(err) => {
                    self.warn(WarnCode::InvalidValue, format!("bad attribute: {err}"));
                    return None;
                }
            }
        }
        None
    }

    fn parse_sex_counts(&mut self, e: &BytesStart<'_>) -> Option<SexCounts> {
        let female = self.attr(e, "female")?;
        let male = self.attr(e, "male")?;
        match (female.parse(), male.parse()) {
            (Ok(female), Ok(male)) => Some(SexCounts { female, male }),
            _ => {
                self.warn(WarnCode::InvalidValue, "non-numeric sex_counts".to_string());
                None
            }
        }
    }

    fn parse_age_summary(&mut self, e: &BytesStart<'_>) -> Option<crate::model::AgeSummary> {
        let mut s = crate::model::AgeSummary::default();
        s.mean = self.attr_f64(e, "mean");
        s.sd = self.attr_f64(e, "sd");
        s.median = self.attr_f64(e, "median");
        if s.mean.is_none() && s.sd.is_none() && s.median.is_none() {
            None
        } else {
            Some(s)
        }
    }

    fn attr_f64(&mut self, e: &BytesStart<'_>, name: &str) -> Option<f64> {
        let raw = self.attr(e, name)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("non-numeric {name} '{raw}' in age_summary"),
                );
                None
            }
        }
    }

    fn parse_ethnicity_count(&mut self, e: &BytesStart<'_>) -> Option<EthnicityCount> {
        let group = self.attr(e, "group")?;
        let count_raw = self.attr(e, "count")?;
        match count_raw.parse() {
            Ok(count) => Some(EthnicityCount { raw: group, count }),
            Err(_) => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("non-numeric ethnicity count '{count_raw}'"),
                );
                None
            }
        }
    }

    fn parse_count(&mut self, text: &str, field: &str) -> Option<u64> {
        match text.trim().parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("non-negative integer expected for {field}, got '{text}'"),
                );
                None
            }
        }
    }

    /// Ages come as `<value> <unit>` (e.g. `18 Years`); `N/A` means absent.
    fn parse_age(&mut self, text: &str, field: &str) -> Option<AgeBound> {
        let t = text.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("n/a") {
            return None;
        }
        let mut parts = t.split_whitespace();
        let value = parts.next().and_then(|v| v.parse::<f64>().ok());
        let unit = parts.next().map(|u| u.trim_end_matches('s').to_ascii_lowercase());
        let unit = match unit.as_deref() {
            Some("year") => Some(AgeUnit::Years),
            Some("month") => Some(AgeUnit::Months),
            Some("week") => Some(AgeUnit::Weeks),
            Some("day") => Some(AgeUnit::Days),
            _ => None,
        };
        match (value, unit) {
            (Some(value), Some(unit)) if value >= 0.0 && parts.next().is_none() => {
                Some(AgeBound { value, unit })
            }
            _ => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unparseable {field} '{t}'"),
                );
                None
            }
        }
    }

    fn parse_bool(&mut self, text: &str, field: &str) -> Option<bool> {
        match text.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("boolean expected for {field}, got '{other}'"),
                );
                None
            }
        }
    }

    fn parse_sex(&mut self, text: &str) -> SexEligibility {
        match text.trim().to_ascii_lowercase().as_str() {
            "all" => SexEligibility::All,
            "female" => SexEligibility::Female,
            "male" => SexEligibility::Male,
            "unspecified" => SexEligibility::Unspecified,
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unknown sex eligibility '{other}', treated as unspecified"),
                );
                SexEligibility::Unspecified
            }
        }
    }

    fn parse_status(&mut self, text: &str) -> StudyStatus {
        match text.trim().to_ascii_lowercase().as_str() {
            "recruiting" => StudyStatus::Recruiting,
            "completed" => StudyStatus::Completed,
            "withdrawn" => StudyStatus::Withdrawn,
            "withheld" => StudyStatus::Withheld,
            "other" => StudyStatus::Other,
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unknown status '{other}', treated as other"),
                );
                StudyStatus::Other
            }
        }
    }

    fn parse_phase(&mut self, text: &str) -> Phase {
        match text.trim().to_ascii_lowercase().as_str() {
            "early_phase1" => Phase::EarlyPhase1,
            "phase1" => Phase::Phase1,
            "phase1_2" => Phase::Phase1_2,
            "phase2" => Phase::Phase2,
            "phase2_3" => Phase::Phase2_3,
            "phase3" => Phase::Phase3,
            "phase4" => Phase::Phase4,
            "not_applicable" => Phase::NotApplicable,
            "unknown" => Phase::Unknown,
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unknown phase '{other}', treated as unknown"),
                );
                Phase::Unknown
            }
        }
    }

    fn parse_study_type(&mut self, text: &str) -> StudyType {
        match text.trim().to_ascii_lowercase().as_str() {
            "interventional" => StudyType::Interventional,
            "observational" => StudyType::Observational,
            "expanded_access" => StudyType::ExpandedAccess,
            "other" => StudyType::Other,
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unknown study_type '{other}', treated as other"),
                );
                StudyType::Other
            }
        }
    }

    fn parse_intervention_type(&mut self, text: &str) -> InterventionType {
        match text.trim().to_ascii_lowercase().as_str() {
            "drug" => InterventionType::Drug,
            "biological" => InterventionType::Biological,
            "device" => InterventionType::Device,
            "procedure" => InterventionType::Procedure,
            "behavioral" => InterventionType::Behavioral,
            "other" => InterventionType::Other,
            other => {
                self.warn(
                    WarnCode::InvalidValue,
                    format!("unknown intervention type '{other}', treated as other"),
                );
                InterventionType::Other
            }
        }
    }

    fn warn(&mut self, code: WarnCode, message: String) {
        self.warnings.push((code, message));
    }
}

fn name_of(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.name().as_ref()).into_owned()
}
