//! Schema model for the emitted tables: names, semantic column types,
//! primary keys and foreign keys. DDL generation and the bulk loader both
//! consume this description, so the two can never drift apart.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticType {
    Identifier,
    Text,
    Integer,
    Real,
    Boolean,
    Enum(Vec<&'static str>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub ty: SemanticType,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub columns: Vec<&'static str>,
    pub ref_table: &'static str,
    pub ref_columns: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub name: &'static str,
    pub columns: Vec<ColumnSpec>,
    pub primary_key: Vec<&'static str>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name).collect()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("table {table}: primary key column {column} not declared")]
    MissingPrimaryKeyColumn { table: String, column: String },
    #[error("table {table}: primary key column {column} must be non-nullable")]
    NullablePrimaryKeyColumn { table: String, column: String },
    #[error("table {table}: foreign key references undeclared table {ref_table}")]
    DanglingForeignKeyTable { table: String, ref_table: String },
    #[error("table {table}: foreign key references unknown column {ref_table}.{ref_column}")]
    DanglingForeignKeyColumn {
        table: String,
        ref_table: String,
        ref_column: String,
    },
    #[error("table {table}: foreign key uses undeclared local column {column}")]
    UnknownForeignKeyColumn { table: String, column: String },
}

/// Validate primary keys and foreign-key references across a schema set.
pub fn validate_schemas(schemas: &[TableSchema]) -> Result<(), SchemaError> {
    for schema in schemas {
        for pk in &schema.primary_key {
            match schema.column(pk) {
                None => {
                    return Err(SchemaError::MissingPrimaryKeyColumn {
                        table: schema.name.to_string(),
                        column: pk.to_string(),
                    })
                }
                Some(c) if c.nullable => {
                    return Err(SchemaError::NullablePrimaryKeyColumn {
                        table: schema.name.to_string(),
                        column: pk.to_string(),
                    })
                }
                Some(_) => {}
            }
        }
        for fk in &schema.foreign_keys {
            for col in &fk.columns {
                if schema.column(col).is_none() {
                    return Err(SchemaError::UnknownForeignKeyColumn {
                        table: schema.name.to_string(),
                        column: col.to_string(),
                    });
                }
            }
            let Some(target) = schemas.iter().find(|s| s.name == fk.ref_table) else {
                return Err(SchemaError::DanglingForeignKeyTable {
                    table: schema.name.to_string(),
                    ref_table: fk.ref_table.to_string(),
                });
            };
            for col in &fk.ref_columns {
                if target.column(col).is_none() {
                    return Err(SchemaError::DanglingForeignKeyColumn {
                        table: schema.name.to_string(),
                        ref_table: fk.ref_table.to_string(),
                        ref_column: col.to_string(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn col(name: &'static str, ty: SemanticType, nullable: bool) -> ColumnSpec {
    ColumnSpec { name, ty, nullable }
}

const STATUS_VALUES: &[&str] = &["recruiting", "completed", "withdrawn", "withheld", "other"];
const PHASE_VALUES: &[&str] = &[
    "early_phase1",
    "phase1",
    "phase1_2",
    "phase2",
    "phase2_3",
    "phase3",
    "phase4",
    "not_applicable",
    "unknown",
];
const STUDY_TYPE_VALUES: &[&str] = &["interventional", "observational", "expanded_access", "other"];
const SEX_VALUES: &[&str] = &["all", "female", "male", "unspecified"];
const ARM_TYPE_VALUES: &[&str] = &[
    "placebo",
    "active",
    "comparator",
    "sham",
    "no_intervention",
    "other",
];
const INTERVENTION_TYPE_VALUES: &[&str] =
    &["drug", "biological", "device", "procedure", "behavioral", "other"];
const SERIOUSNESS_VALUES: &[&str] = &["serious", "other"];
const LEVEL_VALUES: &[&str] = &["PT", "LLT"];
const STAGE_VALUES: &[&str] = &["exact", "fuzzy", "unmapped"];
const HARMONIZED_VALUES: &[&str] = &[
    "hispanic_or_latino",
    "not_hispanic_or_latino",
    "unknown_or_not_reported",
    "unharmonized",
];

/// The fixed table set, in parents-before-children load order.
pub fn standard_schemas() -> Vec<TableSchema> {
    use SemanticType::*;
    vec![
        TableSchema {
            name: "clinical_trial",
            columns: vec![
                col("nct_id", Identifier, false),
                col("brief_title", Text, false),
                col("official_title", Text, true),
                col("summary", Text, true),
                col("registry_url", Text, false),
                col("status", Enum(STATUS_VALUES.to_vec()), false),
                col("phase", Enum(PHASE_VALUES.to_vec()), false),
                col("study_type", Enum(STUDY_TYPE_VALUES.to_vec()), false),
                col("minimum_age_days", Real, true),
                col("maximum_age_days", Real, true),
                col("eligibility_sex", Enum(SEX_VALUES.to_vec()), false),
                col("criteria_text", Text, true),
                col("healthy_volunteers", Boolean, true),
                col("countries", Text, true),
            ],
            primary_key: vec!["nct_id"],
            foreign_keys: vec![],
        },
        TableSchema {
            name: "term_dictionary",
            columns: vec![
                col("code", Identifier, false),
                col("text", Text, false),
                col("level", Enum(LEVEL_VALUES.to_vec()), false),
                col("parent_pt_code", Identifier, true),
                col("soc_code", Identifier, true),
                col("umls_cui", Identifier, true),
            ],
            primary_key: vec!["code"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["parent_pt_code"],
                ref_table: "term_dictionary",
                ref_columns: vec!["code"],
            }],
        },
        TableSchema {
            name: "term_mapping",
            columns: vec![
                // Identifier, not text: primary-key and foreign-key columns
                // must be indexable under both dialects.
                col("reported_string", Identifier, false),
                col("canonical_string", Text, false),
                col("matched_code", Identifier, true),
                col("matched_pt_code", Identifier, true),
                col("stage", Enum(STAGE_VALUES.to_vec()), false),
                col("similarity", Real, false),
                col("stripped_suffix", Text, true),
            ],
            primary_key: vec!["reported_string"],
            foreign_keys: vec![
                ForeignKey {
                    columns: vec!["matched_code"],
                    ref_table: "term_dictionary",
                    ref_columns: vec!["code"],
                },
                ForeignKey {
                    columns: vec!["matched_pt_code"],
                    ref_table: "term_dictionary",
                    ref_columns: vec!["code"],
                },
            ],
        },
        TableSchema {
            name: "ct_conditions",
            columns: vec![
                col("nct_id", Identifier, false),
                col("seq", Integer, false),
                col("condition_raw", Text, false),
            ],
            primary_key: vec!["nct_id", "seq"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["nct_id"],
                ref_table: "clinical_trial",
                ref_columns: vec!["nct_id"],
            }],
        },
        TableSchema {
            name: "ct_interventions",
            columns: vec![
                col("nct_id", Identifier, false),
                col("seq", Integer, false),
                col("intervention_type", Enum(INTERVENTION_TYPE_VALUES.to_vec()), false),
                col("name", Text, false),
                col("arm_labels", Text, true),
            ],
            primary_key: vec!["nct_id", "seq"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["nct_id"],
                ref_table: "clinical_trial",
                ref_columns: vec!["nct_id"],
            }],
        },
        TableSchema {
            name: "ct_arms",
            columns: vec![
                col("arm_key", Identifier, false),
                col("nct_id", Identifier, false),
                col("ordinal", Integer, false),
                col("label", Text, false),
                col("arm_type", Enum(ARM_TYPE_VALUES.to_vec()), false),
                col("participants_started", Integer, true),
            ],
            primary_key: vec!["arm_key"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["nct_id"],
                ref_table: "clinical_trial",
                ref_columns: vec!["nct_id"],
            }],
        },
        TableSchema {
            name: "ct_arm_demographics",
            columns: vec![
                col("arm_key", Identifier, false),
                col("female_count", Integer, true),
                col("male_count", Integer, true),
                col("age_mean", Real, true),
                col("age_sd", Real, true),
                col("age_median", Real, true),
            ],
            primary_key: vec!["arm_key"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["arm_key"],
                ref_table: "ct_arms",
                ref_columns: vec!["arm_key"],
            }],
        },
        TableSchema {
            name: "ethnicity_harmonization",
            columns: vec![
                col("arm_key", Identifier, false),
                col("seq", Integer, false),
                col("raw_ethnicity", Text, false),
                col("participant_count", Integer, false),
                col("harmonized", Enum(HARMONIZED_VALUES.to_vec()), false),
            ],
            primary_key: vec!["arm_key", "seq"],
            foreign_keys: vec![ForeignKey {
                columns: vec!["arm_key"],
                ref_table: "ct_arms",
                ref_columns: vec!["arm_key"],
            }],
        },
        TableSchema {
            name: "ct_ae_counts",
            columns: vec![
                col("nct_id", Identifier, false),
                col("seq", Integer, false),
                col("arm_key", Identifier, true),
                col("arm_ref_raw", Text, false),
                col("reported_term", Identifier, false),
                col("seriousness", Enum(SERIOUSNESS_VALUES.to_vec()), false),
                col("participants_affected", Integer, false),
                col("participants_at_risk", Integer, true),
                col("organ_system_raw", Text, true),
                // Denormalized from ct_arms so arm-level proportions need a
                // single table scan.
                col("participants_started", Integer, true),
                col("resolved", Boolean, false),
            ],
            primary_key: vec!["nct_id", "seq"],
            foreign_keys: vec![
                ForeignKey {
                    columns: vec!["nct_id"],
                    ref_table: "clinical_trial",
                    ref_columns: vec!["nct_id"],
                },
                ForeignKey {
                    columns: vec!["arm_key"],
                    ref_table: "ct_arms",
                    ref_columns: vec!["arm_key"],
                },
                ForeignKey {
                    columns: vec!["reported_term"],
                    ref_table: "term_mapping",
                    ref_columns: vec!["reported_string"],
                },
            ],
        },
    ]
}
