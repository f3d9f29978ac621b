//! DDL generation from the schema model.
//!
//! Two SQL dialects are supported through a fixed spelling table (see
//! `docs/dialects.md`): identifier quoting and type names differ, the
//! logical schema does not. Output is deterministic, so generated scripts
//! can be committed and diffed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::schema::{validate_schemas, SchemaError, SemanticType, TableSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    Mysql,
    Postgres,
}

impl Dialect {
    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Mysql => "mysql",
            Dialect::Postgres => "postgres",
        }
    }

    pub fn parse(s: &str) -> Option<Dialect> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mysql" => Some(Dialect::Mysql),
            "postgres" | "postgresql" => Some(Dialect::Postgres),
            _ => None,
        }
    }

    fn quote(self, ident: &str) -> String {
        match self {
            Dialect::Mysql => format!("`{ident}`"),
            Dialect::Postgres => format!("\"{ident}\""),
        }
    }

    fn type_spelling(self, ty: &SemanticType) -> String {
        match (self, ty) {
            (_, SemanticType::Identifier) => "VARCHAR(255)".into(),
            (_, SemanticType::Text) => "TEXT".into(),
            (_, SemanticType::Integer) => "BIGINT".into(),
            (Dialect::Mysql, SemanticType::Real) => "DOUBLE".into(),
            (Dialect::Postgres, SemanticType::Real) => "DOUBLE PRECISION".into(),
            (Dialect::Mysql, SemanticType::Boolean) => "TINYINT(1)".into(),
            (Dialect::Postgres, SemanticType::Boolean) => "BOOLEAN".into(),
            (Dialect::Mysql, SemanticType::Enum(_)) => "VARCHAR(64)".into(),
            (Dialect::Postgres, SemanticType::Enum(_)) => "TEXT".into(),
        }
    }
}

/// Render `CREATE TABLE` statements for every schema, after validating the
/// whole set. Nothing is emitted when validation fails.
pub fn generate_ddl(dialect: Dialect, schemas: &[TableSchema]) -> Result<String, SchemaError> {
    validate_schemas(schemas)?;
    let mut out = String::new();
    for schema in schemas {
        let mut lines: Vec<String> = Vec::new();
        for c in &schema.columns {
            let mut line = format!("  {} {}", dialect.quote(c.name), dialect.type_spelling(&c.ty));
            if !c.nullable {
                line.push_str(" NOT NULL");
            }
            if let SemanticType::Enum(values) = &c.ty {
                let list = values
                    .iter()
                    .map(|v| format!("'{v}'"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = write!(line, " CHECK ({} IN ({list}))", dialect.quote(c.name));
            }
            lines.push(line);
        }
        lines.push(format!(
            "  PRIMARY KEY ({})",
            quote_list(dialect, &schema.primary_key)
        ));
        for fk in &schema.foreign_keys {
            lines.push(format!(
                "  FOREIGN KEY ({}) REFERENCES {} ({})",
                quote_list(dialect, &fk.columns),
                dialect.quote(fk.ref_table),
                quote_list(dialect, &fk.ref_columns),
            ));
        }
        let _ = write!(
            out,
            "CREATE TABLE {} (\n{}\n);\n\n",
            dialect.quote(schema.name),
            lines.join(",\n")
        );
    }
    Ok(out)
}

fn quote_list(dialect: Dialect, names: &[&str]) -> String {
    names
        .iter()
        .map(|n| dialect.quote(n))
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emit::schema::standard_schemas;

    #[test]
    fn statement_contains_all_columns_in_order() {
        let schemas = standard_schemas();
        let ddl = generate_ddl(Dialect::Mysql, &schemas).unwrap();
        let trial = &schemas[0];
        let stmt_start = ddl.find("CREATE TABLE `clinical_trial`").unwrap();
        let mut cursor = stmt_start;
        for c in &trial.columns {
            let pos = ddl[cursor..]
                .find(&format!("`{}`", c.name))
                .unwrap_or_else(|| panic!("column {} missing", c.name));
            cursor += pos;
        }
    }

    #[test]
    fn logical_schema_identical_across_dialects() {
        let schemas = standard_schemas();
        let strip = |ddl: String| -> Vec<String> {
            ddl.replace(['`', '"'], "")
                .lines()
                .filter(|l| l.starts_with("CREATE TABLE") || l.starts_with("  "))
                .map(|l| {
                    // Keep only identifiers: first token of column lines.
                    l.trim().split_whitespace().next().unwrap_or("").to_string()
                })
                .collect()
        };
        let a = strip(generate_ddl(Dialect::Mysql, &schemas).unwrap());
        let b = strip(generate_ddl(Dialect::Postgres, &schemas).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn generation_is_deterministic() {
        let schemas = standard_schemas();
        let a = generate_ddl(Dialect::Postgres, &schemas).unwrap();
        let b = generate_ddl(Dialect::Postgres, &schemas).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dangling_foreign_key_blocks_output() {
        let mut schemas = standard_schemas();
        schemas[3].foreign_keys[0].ref_table = "missing";
        let err = generate_ddl(Dialect::Mysql, &schemas).unwrap_err();
        assert!(matches!(err, SchemaError::DanglingForeignKeyTable { .. }));
    }

    #[test]
    fn dialect_specific_spellings() {
        let schemas = standard_schemas();
        let mysql = generate_ddl(Dialect::Mysql, &schemas).unwrap();
        let pg = generate_ddl(Dialect::Postgres, &schemas).unwrap();
        assert!(mysql.contains("`healthy_volunteers` TINYINT(1)"));
        assert!(pg.contains("\"healthy_volunteers\" BOOLEAN"));
        assert!(mysql.contains("DOUBLE"));
        assert!(pg.contains("DOUBLE PRECISION"));
    }
}
