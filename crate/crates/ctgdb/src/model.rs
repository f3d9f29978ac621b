//! Domain types shared across pipeline stages.
//!
//! Everything here is immutable after construction and serializes to JSON
//! lines for the intermediate record store. Field order is fixed so two runs
//! over the same input produce byte-identical streams.

use serde::{Deserialize, Serialize};

/// One registered study, as parsed from a single registry XML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub nct_id: String,
    pub brief_title: String,
    pub official_title: Option<String>,
    pub summary: Option<String>,
    pub registry_url: String,
    pub status: StudyStatus,
    pub phase: Phase,
    pub study_type: StudyType,
    pub conditions: Vec<String>,
    pub interventions: Vec<InterventionRecord>,
    pub eligibility: EligibilityRecord,
    pub healthy_volunteers: Option<bool>,
    pub arms: Vec<ArmRecord>,
    pub ae_rows: Vec<AeCountRow>,
    pub countries: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Recruiting,
    Completed,
    Withdrawn,
    Withheld,
    Other,
}

impl StudyStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyStatus::Recruiting => "recruiting",
            StudyStatus::Completed => "completed",
            StudyStatus::Withdrawn => "withdrawn",
            StudyStatus::Withheld => "withheld",
            StudyStatus::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    EarlyPhase1,
    Phase1,
    Phase1_2,
    Phase2,
    Phase2_3,
    Phase3,
    Phase4,
    NotApplicable,
    Unknown,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::EarlyPhase1 => "early_phase1",
            Phase::Phase1 => "phase1",
            Phase::Phase1_2 => "phase1_2",
            Phase::Phase2 => "phase2",
            Phase::Phase2_3 => "phase2_3",
            Phase::Phase3 => "phase3",
            Phase::Phase4 => "phase4",
            Phase::NotApplicable => "not_applicable",
            Phase::Unknown => "unknown",
        }
    }

    /// Phases eligible for product-level aggregation under phase restriction.
    pub fn is_late_phase(self) -> bool {
        matches!(self, Phase::Phase3 | Phase::Phase4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyType {
    Interventional,
    Observational,
    ExpandedAccess,
    Other,
}

impl StudyType {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyType::Interventional => "interventional",
            StudyType::Observational => "observational",
            StudyType::ExpandedAccess => "expanded_access",
            StudyType::Other => "other",
        }
    }
}

/// Trial-level eligibility attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EligibilityRecord {
    pub minimum_age: Option<AgeBound>,
    pub maximum_age: Option<AgeBound>,
    pub sex: SexEligibility,
    pub criteria_text: Option<String>,
}

impl EligibilityRecord {
    /// True when no structured field nor free text is populated.
    pub fn is_unspecified(&self) -> bool {
        self.minimum_age.is_none()
            && self.maximum_age.is_none()
            && self.sex == SexEligibility::Unspecified
            && self.criteria_text.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBound {
    pub value: f64,
    pub unit: AgeUnit,
}

impl AgeBound {
    /// Canonical representation in days using fixed multipliers
    /// (year = 365.25, month = 30.4375, week = 7).
    pub fn to_days(self) -> f64 {
        self.value * self.unit.days_per_unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeUnit {
    Years,
    Months,
    Weeks,
    Days,
}

impl AgeUnit {
    pub fn days_per_unit(self) -> f64 {
        match self {
            AgeUnit::Years => 365.25,
            AgeUnit::Months => 30.4375,
            AgeUnit::Weeks => 7.0,
            AgeUnit::Days => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SexEligibility {
    All,
    Female,
    Male,
    #[default]
    Unspecified,
}

impl SexEligibility {
    pub fn as_str(self) -> &'static str {
        match self {
            SexEligibility::All => "all",
            SexEligibility::Female => "female",
            SexEligibility::Male => "male",
            SexEligibility::Unspecified => "unspecified",
        }
    }
}

/// One arm (or cohort) of a study, the unit at which denominators and
/// adverse-event counts are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    /// Stable key: `<nct_id>:<zero-padded ordinal>`.
    pub arm_key: String,
    pub label: String,
    pub arm_type: ArmType,
    pub participants_started: Option<u64>,
    pub sex_counts: Option<SexCounts>,
    pub age_summary: Option<AgeSummary>,
    /// Reported ethnicity strings with counts, in document order.
    pub ethnicity_counts: Vec<EthnicityCount>,
}

impl ArmRecord {
    pub fn make_key(nct_id: &str, ordinal: usize) -> String {
        format!("{nct_id}:{ordinal:03}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmType {
    Placebo,
    Active,
    Comparator,
    Sham,
    NoIntervention,
    Other,
}

impl ArmType {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmType::Placebo => "placebo",
            ArmType::Active => "active",
            ArmType::Comparator => "comparator",
            ArmType::Sham => "sham",
            ArmType::NoIntervention => "no_intervention",
            ArmType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexCounts {
    pub female: u64,
    pub male: u64,
}

/// Arm-level age summary, unit years. Each statistic is optional because
/// registries report them inconsistently.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgeSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EthnicityCount {
    pub raw: String,
    pub count: u64,
}

/// One adverse-event count row as reported: a term, a seriousness class and
/// the number of participants affected within one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeCountRow {
    /// Arm label as reported in the source row.
    pub arm_ref: String,
    /// Key of the arm this row resolved to, or `None` when the reference did
    /// not match exactly one arm. Unresolved rows are kept, never dropped.
    pub resolved_arm_key: Option<String>,
    pub reported_term: String,
    pub seriousness: Seriousness,
    pub participants_affected: u64,
    pub participants_at_risk: Option<u64>,
    pub organ_system_raw: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seriousness {
    Serious,
    Other,
}

impl Seriousness {
    pub fn as_str(self) -> &'static str {
        match self {
            Seriousness::Serious => "serious",
            Seriousness::Other => "other",
        }
    }
}

/// One intervention and the arm labels it applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub intervention_type: InterventionType,
    pub name: String,
    pub arm_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionType {
    Drug,
    Biological,
    Device,
    Procedure,
    Behavioral,
    Other,
}

impl InterventionType {
    pub fn as_str(self) -> &'static str {
        match self {
            InterventionType::Drug => "drug",
            InterventionType::Biological => "biological",
            InterventionType::Device => "device",
            InterventionType::Procedure => "procedure",
            InterventionType::Behavioral => "behavioral",
            InterventionType::Other => "other",
        }
    }
}
