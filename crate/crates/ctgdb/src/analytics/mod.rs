//! Cross-trial screening analytics: mapping coverage, event-of-interest
//! grouping, arm-level proportions, pooled-placebo reference thresholds and
//! odds ratios.

mod stats;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ArmType, InterventionType, Phase, Seriousness, StudyRecord};
use crate::normalizer::{MatchStage, TermMapping};
use crate::terminology::{TermDictionary, TermLevel};

pub use stats::{arm_proportion, odds_ratio, percentile_linear, OddsRatio};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("undefined denominator: {n_ae} events with no participants started")]
    UndefinedDenominator { n_ae: u64 },
    #[error("invalid counts for odds ratio: a={a_events}/{a_n}, b={b_events}/{b_n}")]
    InvalidCounts {
        a_events: u64,
        a_n: u64,
        b_events: u64,
        b_n: u64,
    },
    #[error("event group '{group}' references unknown PT code {code}")]
    UnknownPtCode { group: String, code: String },
    #[error("no valid placebo arms: empty reference distribution")]
    EmptyPlaceboReference,
    #[error("event group file error: {0}")]
    GroupFile(String),
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

/// Mapping coverage at the unique-string level and weighted by participants
/// affected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub unique_exact: u64,
    pub unique_fuzzy: u64,
    pub unique_unmapped: u64,
    pub weighted_exact: u64,
    pub weighted_fuzzy: u64,
    pub weighted_unmapped: u64,
}

impl CoverageReport {
    pub fn from_counts(
        unique_exact: u64,
        unique_fuzzy: u64,
        unique_unmapped: u64,
        weighted_exact: u64,
        weighted_fuzzy: u64,
        weighted_unmapped: u64,
    ) -> Self {
        Self {
            unique_exact,
            unique_fuzzy,
            unique_unmapped,
            weighted_exact,
            weighted_fuzzy,
            weighted_unmapped,
        }
    }

    /// Accumulate from `(stage, weight)` pairs, one per unique string.
    pub fn from_mappings(stages: impl IntoIterator<Item = (MatchStage, u64)>) -> Self {
        let mut r = CoverageReport::default();
        for (stage, weight) in stages {
            match stage {
                MatchStage::Exact => {
                    r.unique_exact += 1;
                    r.weighted_exact += weight;
                }
                MatchStage::Fuzzy => {
                    r.unique_fuzzy += 1;
                    r.weighted_fuzzy += weight;
                }
                MatchStage::Unmapped => {
                    r.unique_unmapped += 1;
                    r.weighted_unmapped += weight;
                }
            }
        }
        r
    }

    pub fn unique_total(&self) -> u64 {
        self.unique_exact + self.unique_fuzzy + self.unique_unmapped
    }

    pub fn weighted_total(&self) -> u64 {
        self.weighted_exact + self.weighted_fuzzy + self.weighted_unmapped
    }

    fn pct(part: u64, total: u64) -> f64 {
        if total == 0 {
            0.0
        } else {
            100.0 * part as f64 / total as f64
        }
    }

    pub fn unique_pct(&self, part: u64) -> f64 {
        Self::pct(part, self.unique_total())
    }

    pub fn weighted_pct(&self, part: u64) -> f64 {
        Self::pct(part, self.weighted_total())
    }

    pub fn unique_mapped(&self) -> u64 {
        self.unique_exact + self.unique_fuzzy
    }

    pub fn weighted_mapped(&self) -> u64 {
        self.weighted_exact + self.weighted_fuzzy
    }

    /// Aligned human-readable table; percentages to two decimals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>14} {:>12} {:>22} {:>13}\n",
            "category", "unique_strings", "unique_pct", "participants_affected", "weighted_pct"
        ));
        let mut row = |name: &str, u: u64, w: u64| {
            out.push_str(&format!(
                "{:<10} {:>14} {:>12.2} {:>22} {:>13.2}\n",
                name,
                u,
                self.unique_pct(u),
                w,
                self.weighted_pct(w)
            ));
        };
        row("exact", self.unique_exact, self.weighted_exact);
        row("fuzzy", self.unique_fuzzy, self.weighted_fuzzy);
        row("unmapped", self.unique_unmapped, self.weighted_unmapped);
        row("mapped", self.unique_mapped(), self.weighted_mapped());
        row("total", self.unique_total(), self.weighted_total());
        out
    }

    /// Machine-readable CSV with six-decimal percentages.
    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["category", "unique_count", "unique_pct", "weighted_count", "weighted_pct"])?;
        let mut row = |name: &str, u: u64, wgt: u64| -> Result<(), csv::Error> {
            w.write_record([
                name,
                &u.to_string(),
                &format!("{:.6}", self.unique_pct(u)),
                &wgt.to_string(),
                &format!("{:.6}", self.weighted_pct(wgt)),
            ])
        };
        row("exact", self.unique_exact, self.weighted_exact)?;
        row("fuzzy", self.unique_fuzzy, self.weighted_fuzzy)?;
        row("unmapped", self.unique_unmapped, self.weighted_unmapped)?;
        row("mapped", self.unique_mapped(), self.weighted_mapped())?;
        row("total", self.unique_total(), self.weighted_total())?;
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Event groups
// ---------------------------------------------------------------------------

/// A named set of PT codes treated as one clinically coherent event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventGroup {
    pub name: String,
    pub pt_codes: std::collections::BTreeSet<String>,
}

impl EventGroup {
    /// Every member code must exist in the dictionary at PT level.
    pub fn validate(&self, dict: &TermDictionary) -> Result<(), AnalyticsError> {
        if self.pt_codes.is_empty() {
            return Err(AnalyticsError::GroupFile(format!(
                "event group '{}' has no member codes",
                self.name
            )));
        }
        for code in &self.pt_codes {
            match dict.get(code) {
                Some(e) if e.level == TermLevel::Pt => {}
                _ => {
                    return Err(AnalyticsError::UnknownPtCode {
                        group: self.name.clone(),
                        code: code.clone(),
                    })
                }
            }
        }
        Ok(())
    }
}

pub const EVENT_GROUP_HEADER: &str = "group_name\tpt_code";

/// Load event groups from the TSV interface (`group_name  pt_code`, one row
/// per member, header required). Groups come back in first-appearance order.
pub fn load_event_groups(path: &Path) -> Result<Vec<EventGroup>, AnalyticsError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| AnalyticsError::GroupFile(format!("{}: {e}", path.display())))?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EVENT_GROUP_HEADER => {}
        _ => {
            return Err(AnalyticsError::GroupFile(format!(
                "{}: expected header '{EVENT_GROUP_HEADER}'",
                path.display()
            )))
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut members: HashMap<String, std::collections::BTreeSet<String>> = HashMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(AnalyticsError::GroupFile(format!(
                "{}: line {}: expected 'group_name<TAB>pt_code'",
                path.display(),
                idx + 1
            )));
        }
        if !members.contains_key(fields[0]) {
            order.push(fields[0].to_string());
        }
        members
            .entry(fields[0].to_string())
            .or_default()
            .insert(fields[1].to_string());
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let pt_codes = members.remove(&name).unwrap_or_default();
            EventGroup { name, pt_codes }
        })
        .collect())
}

/// Lookup of reported string -> mapping.
pub struct MappingIndex<'a> {
    by_raw: HashMap<&'a str, &'a TermMapping>,
}

impl<'a> MappingIndex<'a> {
    pub fn new(mappings: &'a [TermMapping]) -> Self {
        Self {
            by_raw: mappings
                .iter()
                .map(|m| (m.reported_string.as_str(), m))
                .collect(),
        }
    }

    pub fn get(&self, raw: &str) -> Option<&'a TermMapping> {
        self.by_raw.get(raw).copied()
    }
}

/// Sum participants affected per arm over AE rows whose mapped PT falls in
/// the group. Unmapped and unresolved rows never contribute. Participants
/// reported under several grouped terms are multiply counted; callers cap
/// against the denominator.
pub fn group_events(
    studies: &[StudyRecord],
    mappings: &MappingIndex<'_>,
    dict: &TermDictionary,
    group: &EventGroup,
    serious_only: bool,
) -> Result<BTreeMap<String, u64>, AnalyticsError> {
    group.validate(dict)?;
    let mut per_arm: BTreeMap<String, u64> = BTreeMap::new();
    for study in studies {
        for row in &study.ae_rows {
            let Some(arm_key) = &row.resolved_arm_key else {
                continue;
            };
            if serious_only && row.seriousness != Seriousness::Serious {
                continue;
            }
            let Some(mapping) = mappings.get(&row.reported_term) else {
                continue;
            };
            let Some(pt) = &mapping.matched_pt_code else {
                continue;
            };
            if group.pt_codes.contains(pt) {
                *per_arm.entry(arm_key.clone()).or_insert(0) += row.participants_affected;
            }
        }
    }
    Ok(per_arm)
}

// ---------------------------------------------------------------------------
// Screening
// ---------------------------------------------------------------------------

/// Per-arm event statistics for one event group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEventStat {
    pub arm_key: String,
    pub nct_id: String,
    pub product_label: String,
    pub phase: Phase,
    pub is_placebo: bool,
    pub n_ae: u64,
    pub n_started: u64,
    pub p_arm: f64,
}

/// Empirical reference distribution over pooled placebo arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboReference {
    pub pooled_arms: Vec<ArmEventStat>,
    /// 75th percentile of placebo proportions (linear interpolation).
    pub q75: f64,
    /// Maximum observed placebo proportion.
    pub max_p: f64,
    pub pooled_n_ae: u64,
    pub pooled_n_started: u64,
}

/// Derive the placebo reference from valid placebo-arm statistics.
pub fn placebo_reference(placebo_arms: &[ArmEventStat]) -> Result<PlaceboReference, AnalyticsError> {
    if placebo_arms.is_empty() {
        return Err(AnalyticsError::EmptyPlaceboReference);
    }
    let mut ps: Vec<f64> = placebo_arms.iter().map(|a| a.p_arm).collect();
    ps.sort_by(|a, b| a.partial_cmp(b).expect("proportions are finite"));
    Ok(PlaceboReference {
        pooled_arms: placebo_arms.to_vec(),
        q75: percentile_linear(&ps, 0.75),
        max_p: *ps.last().expect("non-empty"),
        pooled_n_ae: placebo_arms.iter().map(|a| a.n_ae).sum(),
        pooled_n_started: placebo_arms.iter().map(|a| a.n_started).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmScreenRow {
    #[serde(flatten)]
    pub stat: ArmEventStat,
    /// Strictly above the placebo 75th percentile.
    pub exceeds_q75: bool,
    /// Strictly above the maximum observed placebo proportion.
    pub exceeds_max: bool,
    pub or_vs_placebo: OddsRatio,
    /// Group count was capped at the denominator.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductStat {
    pub product_label: String,
    pub n_arms: usize,
    pub n_ae: u64,
    pub n_started: u64,
    pub p: f64,
    pub or_vs_placebo: OddsRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadOr {
    pub product_a: String,
    pub product_b: String,
    pub or: OddsRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedArm {
    pub nct_id: String,
    pub arm_key: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub group_name: String,
    /// One row per arm with a valid denominator, ordered by
    /// (product_label, nct_id, arm_key).
    pub arms: Vec<ArmScreenRow>,
    pub reference: PlaceboReference,
    /// Product-level aggregates over active/comparator arms, phase-restricted
    /// when configured.
    pub products: Vec<ProductStat>,
    pub head_to_head: Vec<HeadToHeadOr>,
    /// Arms left out for undefined denominators.
    pub excluded: Vec<ExcludedArm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenConfig {
    /// Restrict product-level aggregates to phase 3/4 studies.
    pub phase_restrict: bool,
    /// Count only serious AE rows.
    pub serious_only: bool,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            phase_restrict: true,
            serious_only: false,
        }
    }
}

/// Label the product an arm received: placebo arms pool under "placebo";
/// other arms take the sorted `+`-joined names of drug/biological
/// interventions referencing the arm label, falling back to any
/// intervention type, then to "unspecified".
pub fn product_label(study: &StudyRecord, arm: &crate::model::ArmRecord) -> String {
    if arm.arm_type == ArmType::Placebo {
        return "placebo".to_string();
    }
    let collect = |drug_like: bool| -> Vec<String> {
        let mut names: Vec<String> = study
            .interventions
            .iter()
            .filter(|iv| {
                !drug_like
                    || matches!(
                        iv.intervention_type,
                        InterventionType::Drug | InterventionType::Biological
                    )
            })
            .filter(|iv| iv.arm_refs.iter().any(|r| r.trim() == arm.label.trim()))
            .map(|iv| iv.name.trim().to_string())
            .filter(|n| !n.is_empty())
            .collect();
        names.sort();
        names.dedup();
        names
    };
    let names = {
        let drug_names = collect(true);
        if drug_names.is_empty() {
            collect(false)
        } else {
            drug_names
        }
    };
    if names.is_empty() {
        "unspecified".to_string()
    } else {
        names.join("+")
    }
}

/// Run the full screening computation for one event group.
pub fn screen(
    studies: &[StudyRecord],
    mappings: &[TermMapping],
    dict: &TermDictionary,
    group: &EventGroup,
    cfg: &ScreenConfig,
) -> Result<ScreeningResult, AnalyticsError> {
    let index = MappingIndex::new(mappings);
    let counts = group_events(studies, &index, dict, group, cfg.serious_only)?;

    let mut stats: Vec<(ArmEventStat, bool)> = Vec::new(); // (stat, capped)
    let mut excluded = Vec::new();
    for study in studies {
        for arm in &study.arms {
            let raw_n_ae = counts.get(&arm.arm_key).copied().unwrap_or(0);
            let n_started = match arm.participants_started {
                Some(n) if n > 0 => n,
                _ => {
                    excluded.push(ExcludedArm {
                        nct_id: study.nct_id.clone(),
                        arm_key: arm.arm_key.clone(),
                        reason: "undefined_denominator".to_string(),
                    });
                    continue;
                }
            };
            // Grouped terms can multiply-count the same participant; cap at
            // the denominator and flag.
            let capped = raw_n_ae > n_started;
            let n_ae = raw_n_ae.min(n_started);
            let p_arm = arm_proportion(n_ae, n_started)?;
            stats.push((
                ArmEventStat {
                    arm_key: arm.arm_key.clone(),
                    nct_id: study.nct_id.clone(),
                    product_label: product_label(study, arm),
                    phase: study.phase,
                    is_placebo: arm.arm_type == ArmType::Placebo,
                    n_ae,
                    n_started,
                    p_arm,
                },
                capped,
            ));
        }
    }

    let placebo_arms: Vec<ArmEventStat> = stats
        .iter()
        .filter(|(s, _)| s.is_placebo)
        .map(|(s, _)| s.clone())
        .collect();
    let reference = placebo_reference(&placebo_arms)?;

    let mut arms: Vec<ArmScreenRow> = stats
        .into_iter()
        .map(|(stat, capped)| {
            let or_vs_placebo = odds_ratio(
                stat.n_ae,
                stat.n_started,
                reference.pooled_n_ae,
                reference.pooled_n_started,
            )?;
            Ok(ArmScreenRow {
                exceeds_q75: stat.p_arm > reference.q75,
                exceeds_max: stat.p_arm > reference.max_p,
                or_vs_placebo,
                capped,
                stat,
            })
        })
        .collect::<Result<_, AnalyticsError>>()?;
    arms.sort_by(|a, b| {
        (&a.stat.product_label, &a.stat.nct_id, &a.stat.arm_key).cmp(&(
            &b.stat.product_label,
            &b.stat.nct_id,
            &b.stat.arm_key,
        ))
    });

    // Product-level aggregates over investigational/comparator arms.
    let mut per_product: BTreeMap<String, (usize, u64, u64)> = BTreeMap::new();
    for row in &arms {
        let s = &row.stat;
        if s.is_placebo || s.product_label == "unspecified" {
            continue;
        }
        if cfg.phase_restrict && !s.phase.is_late_phase() {
            continue;
        }
        let arm = studies
            .iter()
            .find(|st| st.nct_id == s.nct_id)
            .and_then(|st| st.arms.iter().find(|a| a.arm_key == s.arm_key));
        let eligible = arm
            .map(|a| matches!(a.arm_type, ArmType::Active | ArmType::Comparator))
            .unwrap_or(false);
        if !eligible {
            continue;
        }
        let e = per_product.entry(s.product_label.clone()).or_insert((0, 0, 0));
        e.0 += 1;
        e.1 += s.n_ae;
        e.2 += s.n_started;
    }
    let products: Vec<ProductStat> = per_product
        .into_iter()
        .map(|(label, (n_arms, n_ae, n_started))| {
            let or_vs_placebo = odds_ratio(
                n_ae,
                n_started,
                reference.pooled_n_ae,
                reference.pooled_n_started,
            )?;
            Ok(ProductStat {
                product_label: label,
                n_arms,
                n_ae,
                n_started,
                p: arm_proportion(n_ae, n_started)?,
                or_vs_placebo,
            })
        })
        .collect::<Result<_, AnalyticsError>>()?;

    let mut head_to_head = Vec::new();
    for (i, a) in products.iter().enumerate() {
        for b in products.iter().skip(i + 1) {
            head_to_head.push(HeadToHeadOr {
                product_a: a.product_label.clone(),
                product_b: b.product_label.clone(),
                or: odds_ratio(a.n_ae, a.n_started, b.n_ae, b.n_started)?,
            });
        }
    }

    Ok(ScreeningResult {
        group_name: group.name.clone(),
        arms,
        reference,
        products,
        head_to_head,
        excluded,
    })
}

/// Plot-ready per-arm CSV: one row per arm with proportions, thresholds,
/// exceedance flags and the arm-vs-pooled-placebo odds ratio.
pub fn write_screening_csv(result: &ScreeningResult, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "product",
        "phase",
        "nct_id",
        "arm_key",
        "n_ae",
        "n_started",
        "p_arm",
        "is_placebo",
        "q75",
        "max_placebo",
        "exceeds_q75",
        "exceeds_max",
        "or_vs_placebo",
        "or_corrected",
    ])?;
    for row in &result.arms {
        let s = &row.stat;
        w.write_record([
            s.product_label.as_str(),
            s.phase.as_str(),
            s.nct_id.as_str(),
            s.arm_key.as_str(),
            &s.n_ae.to_string(),
            &s.n_started.to_string(),
            &format!("{:.6}", s.p_arm),
            bool_str(s.is_placebo),
            &format!("{:.6}", result.reference.q75),
            &format!("{:.6}", result.reference.max_p),
            bool_str(row.exceeds_q75),
            bool_str(row.exceeds_max),
            &format!("{:.6}", row.or_vs_placebo.value),
            bool_str(row.or_vs_placebo.corrected),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Product-level aggregate CSV.
pub fn write_products_csv(result: &ScreeningResult, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "product",
        "n_arms",
        "n_ae",
        "n_started",
        "p",
        "or_vs_placebo",
        "or_corrected",
    ])?;
    for p in &result.products {
        w.write_record([
            p.product_label.as_str(),
            &p.n_arms.to_string(),
            &p.n_ae.to_string(),
            &p.n_started.to_string(),
            &format!("{:.6}", p.p),
            &format!("{:.6}", p.or_vs_placebo.value),
            bool_str(p.or_vs_placebo.corrected),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Head-to-head product odds ratios.
pub fn write_pairs_csv(result: &ScreeningResult, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["product_a", "product_b", "or", "or_corrected"])?;
    for h in &result.head_to_head {
        w.write_record([
            h.product_a.as_str(),
            h.product_b.as_str(),
            &format!("{:.6}", h.or.value),
            bool_str(h.or.corrected),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exclusion annex plus cap flags, as kv lines.
pub fn render_annex(result: &ScreeningResult) -> String {
    let mut out = String::new();
    for e in &result.excluded {
        out.push_str(
            &crate::kv::KvRecord::new()
                .with("record", "excluded_arm")
                .with("nct_id", &e.nct_id)
                .with("arm_key", &e.arm_key)
                .with("reason", &e.reason)
                .to_line(),
        );
        out.push('\n');
    }
    for row in result.arms.iter().filter(|r| r.capped) {
        out.push_str(
            &crate::kv::KvRecord::new()
                .with("record", "capped_arm")
                .with("nct_id", &row.stat.nct_id)
                .with("arm_key", &row.stat.arm_key)
                .with("reason", "group_count_capped_at_denominator")
                .to_line(),
        );
        out.push('\n');
    }
    out
}

fn bool_str(v: bool) -> &'static str {
    if v {
        "true"
    } else {
        "false"
    }
}
