//! Warning log: line-delimited `key=value` records describing non-fatal
//! ingestion findings (skipped files, unresolved references, inconsistent
//! counts). Nothing in here ever aborts a run.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kv::KvRecord;

/// Stable warning codes. The string form is what lands in the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarnCode {
    MalformedXml,
    MissingNctId,
    DuplicateNctId,
    UnrecognizedElement,
    UnresolvedArmRef,
    AmbiguousArmRef,
    AgeRangeInconsistent,
    AffectedExceedsAtRisk,
    InvalidValue,
    GroupCountCapped,
}

impl WarnCode {
    pub fn as_str(self) -> &'static str {
        match self {
            WarnCode::MalformedXml => "malformed_xml",
            WarnCode::MissingNctId => "missing_nct_id",
            WarnCode::DuplicateNctId => "duplicate_nct_id",
            WarnCode::UnrecognizedElement => "unrecognized_element",
            WarnCode::UnresolvedArmRef => "unresolved_arm_ref",
            WarnCode::AmbiguousArmRef => "ambiguous_arm_ref",
            WarnCode::AgeRangeInconsistent => "age_range_inconsistent",
            WarnCode::AffectedExceedsAtRisk => "affected_exceeds_at_risk",
            WarnCode::InvalidValue => "invalid_value",
            WarnCode::GroupCountCapped => "group_count_capped",
        }
    }
}

impl fmt::Display for WarnCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One warning: `{file, nct_id?, code, message}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    /// Source file, relative to the input directory when known.
    pub file: String,
    pub nct_id: Option<String>,
    pub code: WarnCode,
    pub message: String,
}

impl Warning {
    pub fn new(file: impl Into<String>, code: WarnCode, message: impl Into<String>) -> Self {
        Self {
            file: file.into(),
            nct_id: None,
            code,
            message: message.into(),
        }
    }

    pub fn with_nct(mut self, nct_id: impl Into<String>) -> Self {
        self.nct_id = Some(nct_id.into());
        self
    }

    pub fn to_line(&self) -> String {
        let mut rec = KvRecord::new().with("file", &self.file);
        if let Some(nct) = &self.nct_id {
            rec.push("nct_id", nct);
        }
        rec.push("code", self.code);
        rec.push("message", &self.message);
        rec.to_line()
    }
}

/// Write warnings to `path`, one record per line, `\n` terminated.
pub fn write_warnings(path: &Path, warnings: &[Warning]) -> io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for w in warnings {
        writeln!(file, "{}", w.to_line())?;
    }
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_with_optional_nct_id() {
        let w = Warning::new("s1.xml", WarnCode::UnresolvedArmRef, "no arm labeled 'Arm Z'")
            .with_nct("NCT00000001");
        assert_eq!(
            w.to_line(),
            r#"file=s1.xml nct_id=NCT00000001 code=unresolved_arm_ref message="no arm labeled 'Arm Z'""#
        );
        let w = Warning::new("bad.xml", WarnCode::MalformedXml, "truncated");
        assert_eq!(w.to_line(), "file=bad.xml code=malformed_xml message=truncated");
    }
}
