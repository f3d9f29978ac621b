//! Relational emission: serialize studies, mappings and the vocabulary into
//! table-oriented CSVs, generate DDL, and bulk-load into a relational store.
//!
//! CSV conventions: UTF-8, RFC-4180 quoting, `\n` line endings, header row
//! mandatory, empty field = absent value, booleans as 0/1. Rows are sorted
//! by primary key so repeated runs are byte-identical.

pub mod ddl;
pub mod ethnicity;
pub mod load;
pub mod schema;

use std::path::{Path, PathBuf};

use crate::model::StudyRecord;
use crate::normalizer::{MatchStage, TermMapping};
use crate::terminology::TermDictionary;

pub use ddl::{generate_ddl, Dialect};
pub use ethnicity::{EthnicityMap, EthnicityOutcome, HarmonizedCategory};
pub use load::{bulk_load, ConnectionSpec, LoadError, LoadManifest, TableLoad};
pub use schema::{standard_schemas, validate_schemas, SchemaError, TableSchema};

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// One emitted table file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCsv {
    pub name: String,
    pub path: PathBuf,
    pub rows: u64,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EmitError + '_ {
    move |source| EmitError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn bool01(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Emit the fixed table set under `out_dir` (created if needed). Returns
/// one entry per table in load order.
pub fn emit_tables(
    studies: &[StudyRecord],
    mappings: &[TermMapping],
    dict: &TermDictionary,
    ethnicity_map: &EthnicityMap,
    out_dir: &Path,
) -> Result<Vec<TableCsv>, EmitError> {
    std::fs::create_dir_all(out_dir).map_err(|source| EmitError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut sorted_studies: Vec<&StudyRecord> = studies.iter().collect();
    sorted_studies.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));

    let mut out = Vec::new();
    out.push(write_clinical_trial(&sorted_studies, out_dir)?);
    out.push(write_term_dictionary(dict, out_dir)?);
    out.push(write_term_mapping(mappings, out_dir)?);
    out.push(write_conditions(&sorted_studies, out_dir)?);
    out.push(write_interventions(&sorted_studies, out_dir)?);
    out.push(write_arms(&sorted_studies, out_dir)?);
    out.push(write_arm_demographics(&sorted_studies, out_dir)?);
    out.push(write_ethnicity(&sorted_studies, ethnicity_map, out_dir)?);
    out.push(write_ae_counts(&sorted_studies, out_dir)?);
    Ok(out)
}

fn open_writer(out_dir: &Path, table: &str) -> Result<(csv::Writer<std::fs::File>, PathBuf), EmitError> {
    let path = out_dir.join(format!("{table}.csv"));
    let w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    Ok((w, path))
}

/// Rebuild the emitted-table inventory by reading `tables_dir` back, so the
/// load stage can run in isolation from the emit stage.
pub fn table_inventory(
    tables_dir: &Path,
    schemas: &[TableSchema],
) -> Result<Vec<TableCsv>, EmitError> {
    let mut tables = Vec::new();
    for schema in schemas {
        let path = tables_dir.join(format!("{}.csv", schema.name));
        let mut reader = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
        let mut rows = 0u64;
        for rec in reader.records() {
            rec.map_err(csv_err(&path))?;
            rows += 1;
        }
        tables.push(TableCsv {
            name: schema.name.to_string(),
            path,
            rows,
        });
    }
    Ok(tables)
}

fn write_clinical_trial(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "clinical_trial")?;
    w.write_record([
        "nct_id",
        "brief_title",
        "official_title",
        "summary",
        "registry_url",
        "status",
        "phase",
        "study_type",
        "minimum_age_days",
        "maximum_age_days",
        "eligibility_sex",
        "criteria_text",
        "healthy_volunteers",
        "countries",
    ])
    .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        w.write_record([
            s.nct_id.as_str(),
            s.brief_title.as_str(),
            s.official_title.as_deref().unwrap_or(""),
            s.summary.as_deref().unwrap_or(""),
            s.registry_url.as_str(),
            s.status.as_str(),
            s.phase.as_str(),
            s.study_type.as_str(),
            &opt_string(&s.eligibility.minimum_age.map(|a| a.to_days())),
            &opt_string(&s.eligibility.maximum_age.map(|a| a.to_days())),
            s.eligibility.sex.as_str(),
            s.eligibility.criteria_text.as_deref().unwrap_or(""),
            s.healthy_volunteers.map(bool01).unwrap_or(""),
            &s.countries.join(";"),
        ])
        .map_err(csv_err(&path))?;
        rows += 1;
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "clinical_trial".into(),
        path,
        rows,
    })
}

fn write_term_dictionary(dict: &TermDictionary, out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "term_dictionary")?;
    w.write_record(["code", "text", "level", "parent_pt_code", "soc_code", "umls_cui"])
        .map_err(csv_err(&path))?;
    let mut entries: Vec<_> = dict.entries().iter().collect();
    entries.sort_by_key(|e| (e.code.parse::<u64>().unwrap_or(u64::MAX), e.code.clone()));
    let mut rows = 0;
    for e in entries {
        w.write_record([
            e.code.as_str(),
            e.text.as_str(),
            e.level.as_str(),
            e.parent_pt_code.as_deref().unwrap_or(""),
            e.soc_code.as_deref().unwrap_or(""),
            e.umls_cui.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err(&path))?;
        rows += 1;
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "term_dictionary".into(),
        path,
        rows,
    })
}

fn write_term_mapping(mappings: &[TermMapping], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let path = out_dir.join("term_mapping.csv");
    let rows = write_mappings_csv(&path, mappings).map_err(csv_err(&path))?;
    Ok(TableCsv {
        name: "term_mapping".into(),
        path,
        rows,
    })
}

/// Write the mapping CSV interface (`reported_string, canonical_string,
/// matched_code, matched_pt_code, stage, similarity, stripped_suffix`),
/// similarity at six decimals, sorted by reported string.
pub fn write_mappings_csv(path: &Path, mappings: &[TermMapping]) -> Result<u64, csv::Error> {
    let mut sorted: Vec<&TermMapping> = mappings.iter().collect();
    sorted.sort_by(|a, b| a.reported_string.cmp(&b.reported_string));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "reported_string",
        "canonical_string",
        "matched_code",
        "matched_pt_code",
        "stage",
        "similarity",
        "stripped_suffix",
    ])?;
    let mut rows = 0;
    for m in sorted {
        w.write_record([
            m.reported_string.as_str(),
            m.canonical_string.as_str(),
            m.matched_code.as_deref().unwrap_or(""),
            m.matched_pt_code.as_deref().unwrap_or(""),
            m.stage.as_str(),
            &format!("{:.6}", m.similarity),
            m.stripped_suffix.as_deref().unwrap_or(""),
        ])?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}

/// Read a mapping CSV back; inverse of [`write_mappings_csv`] up to
/// similarity printing precision.
pub fn read_mappings_csv(path: &Path) -> Result<Vec<TermMapping>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        if record.len() != 7 {
            return Err(format!(
                "{}: row {}: expected 7 fields, got {}",
                path.display(),
                i + 2,
                record.len()
            ));
        }
        let opt = |s: &str| {
            if s.is_empty() {
                None
            } else {
                Some(s.to_string())
            }
        };
        let stage = match &record[4] {
            "exact" => MatchStage::Exact,
            "fuzzy" => MatchStage::Fuzzy,
            "unmapped" => MatchStage::Unmapped,
            other => {
                return Err(format!(
                    "{}: row {}: unknown stage '{other}'",
                    path.display(),
                    i + 2
                ))
            }
        };
        let similarity: f64 = record[5]
            .parse()
            .map_err(|_| format!("{}: row {}: bad similarity", path.display(), i + 2))?;
        out.push(TermMapping {
            reported_string: record[0].to_string(),
            canonical_string: record[1].to_string(),
            matched_code: opt(&record[2]),
            matched_pt_code: opt(&record[3]),
            stage,
            similarity,
            stripped_suffix: opt(&record[6]),
        });
    }
    Ok(out)
}

fn write_conditions(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ct_conditions")?;
    w.write_record(["nct_id", "seq", "condition_raw"])
        .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        for (i, c) in s.conditions.iter().enumerate() {
            w.write_record([s.nct_id.as_str(), &(i + 1).to_string(), c.as_str()])
                .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ct_conditions".into(),
        path,
        rows,
    })
}

fn write_interventions(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ct_interventions")?;
    w.write_record(["nct_id", "seq", "intervention_type", "name", "arm_labels"])
        .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        for (i, iv) in s.interventions.iter().enumerate() {
            w.write_record([
                s.nct_id.as_str(),
                &(i + 1).to_string(),
                iv.intervention_type.as_str(),
                iv.name.as_str(),
                &iv.arm_refs.join(";"),
            ])
            .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ct_interventions".into(),
        path,
        rows,
    })
}

fn write_arms(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ct_arms")?;
    w.write_record(["arm_key", "nct_id", "ordinal", "label", "arm_type", "participants_started"])
        .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        for (i, a) in s.arms.iter().enumerate() {
            w.write_record([
                a.arm_key.as_str(),
                s.nct_id.as_str(),
                &(i + 1).to_string(),
                a.label.as_str(),
                a.arm_type.as_str(),
                &opt_string(&a.participants_started),
            ])
            .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ct_arms".into(),
        path,
        rows,
    })
}

fn write_arm_demographics(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ct_arm_demographics")?;
    w.write_record(["arm_key", "female_count", "male_count", "age_mean", "age_sd", "age_median"])
        .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        for a in &s.arms {
            let age = a.age_summary.unwrap_or_default();
            w.write_record([
                a.arm_key.as_str(),
                &opt_string(&a.sex_counts.map(|c| c.female)),
                &opt_string(&a.sex_counts.map(|c| c.male)),
                &opt_string(&age.mean),
                &opt_string(&age.sd),
                &opt_string(&age.median),
            ])
            .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ct_arm_demographics".into(),
        path,
        rows,
    })
}

fn write_ethnicity(
    studies: &[&StudyRecord],
    map: &EthnicityMap,
    out_dir: &Path,
) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ethnicity_harmonization")?;
    w.write_record(["arm_key", "seq", "raw_ethnicity", "participant_count", "harmonized"])
        .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        for a in &s.arms {
            for (i, e) in a.ethnicity_counts.iter().enumerate() {
                let outcome = map.harmonize(&e.raw);
                w.write_record([
                    a.arm_key.as_str(),
                    &(i + 1).to_string(),
                    e.raw.as_str(),
                    &e.count.to_string(),
                    outcome.column_value(),
                ])
                .map_err(csv_err(&path))?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ethnicity_harmonization".into(),
        path,
        rows,
    })
}

fn write_ae_counts(studies: &[&StudyRecord], out_dir: &Path) -> Result<TableCsv, EmitError> {
    let (mut w, path) = open_writer(out_dir, "ct_ae_counts")?;
    w.write_record([
        "nct_id",
        "seq",
        "arm_key",
        "arm_ref_raw",
        "reported_term",
        "seriousness",
        "participants_affected",
        "participants_at_risk",
        "organ_system_raw",
        "participants_started",
        "resolved",
    ])
    .map_err(csv_err(&path))?;
    let mut rows = 0;
    for s in studies {
        let started_of = |key: &Option<String>| -> Option<u64> {
            key.as_ref().and_then(|k| {
                s.arms
                    .iter()
                    .find(|a| &a.arm_key == k)
                    .and_then(|a| a.participants_started)
            })
        };
        for (i, r) in s.ae_rows.iter().enumerate() {
            w.write_record([
                s.nct_id.as_str(),
                &(i + 1).to_string(),
                r.resolved_arm_key.as_deref().unwrap_or(""),
                r.arm_ref.as_str(),
                r.reported_term.as_str(),
                r.seriousness.as_str(),
                &r.participants_affected.to_string(),
                &opt_string(&r.participants_at_risk),
                r.organ_system_raw.as_deref().unwrap_or(""),
                &opt_string(&started_of(&r.resolved_arm_key)),
                bool01(r.resolved_arm_key.is_some()),
            ])
            .map_err(csv_err(&path))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| EmitError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(TableCsv {
        name: "ct_ae_counts".into(),
        path,
        rows,
    })
}
