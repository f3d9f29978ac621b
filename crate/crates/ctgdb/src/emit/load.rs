//! Bulk loading of emitted CSVs into a relational store.
//!
//! The embedded backend is SQLite, addressed as `sqlite:<path>`. Both
//! dialects' DDL scripts parse there (SQLite accepts backtick and
//! double-quote identifier quoting and arbitrary type names), so round-trip
//! verification covers each dialect's output. Loads run parents-first with
//! foreign keys enforced per row; the one self-referential table
//! (term_dictionary) is inserted PT-rows-first so every insert satisfies
//! its parent link.

use std::path::{Path, PathBuf};

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::ddl::{generate_ddl, Dialect};
use super::schema::TableSchema;
use super::TableCsv;
use crate::manifest::sha256_file;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("unsupported connection spec '{uri}': expected sqlite:<path> (set --db-uri or CTGDB_DB_URI)")]
    UnsupportedUri { uri: String },
    #[error("cannot open database: {0}")]
    Open(String),
    #[error("cannot apply DDL: {0}")]
    Ddl(String),
    #[error("schema error: {0}")]
    Schema(#[from] super::schema::SchemaError),
    #[error("no emitted CSV for table {0}")]
    MissingTable(String),
    #[error("cannot read {path}: {message}")]
    Csv { path: String, message: String },
}

/// Parsed connection spec. URI-style, currently `sqlite:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionSpec {
    pub sqlite_path: PathBuf,
}

impl ConnectionSpec {
    pub fn parse(uri: &str) -> Result<Self, LoadError> {
        match uri.split_once(':') {
            Some(("sqlite", path)) if !path.is_empty() => Ok(Self {
                sqlite_path: PathBuf::from(path),
            }),
            _ => Err(LoadError::UnsupportedUri { uri: uri.into() }),
        }
    }

    pub fn open(&self) -> Result<Connection, LoadError> {
        let conn =
            Connection::open(&self.sqlite_path).map_err(|e| LoadError::Open(e.to_string()))?;
        conn.pragma_update(None, "foreign_keys", true)
            .map_err(|e| LoadError::Open(e.to_string()))?;
        Ok(conn)
    }
}

/// Generate and apply one dialect's DDL script.
pub fn apply_ddl(
    conn: &Connection,
    dialect: Dialect,
    schemas: &[TableSchema],
) -> Result<(), LoadError> {
    let ddl = generate_ddl(dialect, schemas)?;
    conn.execute_batch(&ddl)
        .map_err(|e| LoadError::Ddl(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLoad {
    pub table: String,
    pub rows_written: u64,
    pub rows_loaded: u64,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadStatus {
    Success,
    Failed {
        table: String,
        /// 1-based data-row number within the table CSV.
        row: Option<u64>,
        message: String,
    },
}

/// Per-table outcome of one load run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadManifest {
    pub tables: Vec<TableLoad>,
    pub status: LoadStatus,
}

impl LoadManifest {
    pub fn is_success(&self) -> bool {
        self.status == LoadStatus::Success
    }
}

/// Load every schema table from its emitted CSV, in schema order. A failing
/// table aborts the remaining loads and marks the manifest failed; earlier
/// tables stay loaded.
pub fn bulk_load(
    conn: &mut Connection,
    schemas: &[TableSchema],
    tables: &[TableCsv],
) -> Result<LoadManifest, LoadError> {
    let mut loads = Vec::new();
    for schema in schemas {
        let csv = tables
            .iter()
            .find(|t| t.name == schema.name)
            .ok_or_else(|| LoadError::MissingTable(schema.name.to_string()))?;
        let checksum = sha256_file(&csv.path).map_err(|e| LoadError::Csv {
            path: csv.path.display().to_string(),
            message: e.to_string(),
        })?;
        match load_table(conn, schema, &csv.path) {
            Ok(rows_loaded) => {
                loads.push(TableLoad {
                    table: schema.name.to_string(),
                    rows_written: csv.rows,
                    rows_loaded,
                    checksum,
                });
            }
            Err(TableFailure::Fatal(e)) => return Err(e),
            Err(TableFailure::Row { row, message }) => {
                loads.push(TableLoad {
                    table: schema.name.to_string(),
                    rows_written: csv.rows,
                    rows_loaded: 0,
                    checksum,
                });
                return Ok(LoadManifest {
                    tables: loads,
                    status: LoadStatus::Failed {
                        table: schema.name.to_string(),
                        row: Some(row),
                        message,
                    },
                });
            }
        }
    }
    Ok(LoadManifest {
        tables: loads,
        status: LoadStatus::Success,
    })
}

enum TableFailure {
    Fatal(LoadError),
    Row { row: u64, message: String },
}

fn load_table(
    conn: &mut Connection,
    schema: &TableSchema,
    path: &Path,
) -> Result<u64, TableFailure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        TableFailure::Fatal(LoadError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })?;
    let n_cols = schema.columns.len();
    let mut rows: Vec<(u64, Vec<Option<String>>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rowno = i as u64 + 1;
        let record = record.map_err(|e| TableFailure::Row {
            row: rowno,
            message: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(TableFailure::Row {
                row: rowno,
                message: format!("expected {n_cols} fields, got {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|v| if v.is_empty() { None } else { Some(v.to_string()) })
            .collect();
        rows.push((rowno, values));
    }

    // Self-referential table: insert parent-level rows first so per-row
    // foreign-key checks pass. Original row numbers are kept for reporting.
    if schema
        .foreign_keys
        .iter()
        .any(|fk| fk.ref_table == schema.name)
    {
        if let Some(level_idx) = schema.columns.iter().position(|c| c.name == "level") {
            rows.sort_by_key(|(rowno, values)| {
                let is_parent = values[level_idx].as_deref() == Some("PT");
                (!is_parent, *rowno)
            });
        }
    }

    let placeholders = vec!["?"; n_cols].join(", ");
    let columns = schema
        .columns
        .iter()
        .map(|c| format!("\"{}\"", c.name))
        .collect::<Vec<_>>()
        .join(", ");
    let sql = format!(
        "INSERT INTO \"{}\" ({columns}) VALUES ({placeholders})",
        schema.name
    );

    let tx = conn
        .transaction()
        .map_err(|e| TableFailure::Fatal(LoadError::Open(e.to_string())))?;
    {
        let mut stmt = tx
            .prepare(&sql)
            .map_err(|e| TableFailure::Fatal(LoadError::Ddl(e.to_string())))?;
        for (rowno, values) in &rows {
            let params = rusqlite::params_from_iter(values.iter());
            stmt.execute(params).map_err(|e| TableFailure::Row {
                row: *rowno,
                message: e.to_string(),
            })?;
        }
    }
    tx.commit()
        .map_err(|e| TableFailure::Fatal(LoadError::Open(e.to_string())))?;

    let loaded: i64 = conn
        .query_row(&format!("SELECT COUNT(*) FROM \"{}\"", schema.name), [], |r| {
            r.get(0)
        })
        .map_err(|e| TableFailure::Fatal(LoadError::Open(e.to_string())))?;
    Ok(loaded as u64)
}

/// Count rows in a loaded table.
pub fn count_rows(conn: &Connection, table: &str) -> Result<u64, rusqlite::Error> {
    conn.query_row(&format!("SELECT COUNT(*) FROM \"{table}\""), [], |r| {
        r.get::<_, i64>(0).map(|v| v as u64)
    })
}

/// Orphan rows for every declared foreign key: child rows whose non-null key
/// has no parent. Zero everywhere on a valid load.
pub fn orphan_counts(
    conn: &Connection,
    schemas: &[TableSchema],
) -> Result<Vec<(String, String, u64)>, rusqlite::Error> {
    let mut out = Vec::new();
    for schema in schemas {
        for fk in &schema.foreign_keys {
            let on = fk
                .columns
                .iter()
                .zip(&fk.ref_columns)
                .map(|(c, rc)| format!("child.\"{c}\" = parent.\"{rc}\""))
                .collect::<Vec<_>>()
                .join(" AND ");
            let not_null = fk
                .columns
                .iter()
                .map(|c| format!("child.\"{c}\" IS NOT NULL"))
                .collect::<Vec<_>>()
                .join(" AND ");
            let sql = format!(
                "SELECT COUNT(*) FROM \"{}\" child LEFT JOIN \"{}\" parent ON {on} \
                 WHERE {not_null} AND parent.\"{}\" IS NULL",
                schema.name, fk.ref_table, fk.ref_columns[0]
            );
            let count: i64 = conn.query_row(&sql, [], |r| r.get(0))?;
            out.push((schema.name.to_string(), fk.ref_table.to_string(), count as u64));
        }
    }
    Ok(out)
}

/// Verify the denormalized denominator: every resolved AE row must carry the
/// participants_started of its arm. Returns the number of mismatches.
pub fn denominator_mismatches(conn: &Connection) -> Result<u64, rusqlite::Error> {
    let sql = "SELECT COUNT(*) FROM \"ct_ae_counts\" c JOIN \"ct_arms\" a \
               ON c.\"arm_key\" = a.\"arm_key\" \
               WHERE c.\"participants_started\" IS NOT a.\"participants_started\"";
    conn.query_row(sql, [], |r| r.get::<_, i64>(0).map(|v| v as u64))
}

