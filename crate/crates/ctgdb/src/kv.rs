//! Line-delimited `key=value` records.
//!
//! This is the plain-text structured format used by the warning log, the
//! exclusion report and the run manifest. One record per line; fields are
//! space-separated `key=value` pairs in insertion order. Values containing
//! spaces, quotes or `=` are double-quoted with `\"` and `\\` escapes.
//! Empty-valued keys are written as `key=""`.

use std::fmt::Write as _;

/// A single record: ordered list of key/value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvRecord {
    pairs: Vec<(String, String)>,
}

impl KvRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    /// First value for `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// All values for `key`, in order (keys may repeat).
    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> {
        self.pairs
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Render as one line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.pairs.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}={}", k, quote(v));
        }
        out
    }

    /// Parse one line previously produced by [`KvRecord::to_line`].
    pub fn parse_line(line: &str) -> Result<Self, KvParseError> {
        let mut record = KvRecord::new();
        let mut chars = line.chars().peekable();
        loop {
            while matches!(chars.peek(), Some(' ')) {
                chars.next();
            }
            if chars.peek().is_none() {
                break;
            }
            let mut key = String::new();
            for c in chars.by_ref() {
                if c == '=' {
                    break;
                }
                key.push(c);
            }
            if key.is_empty() {
                return Err(KvParseError::EmptyKey);
            }
            let mut value = String::new();
            match chars.peek() {
                Some('"') => {
                    chars.next();
                    let mut closed = false;
                    while let Some(c) = chars.next() {
                        match c {
                            '\\' => match chars.next() {
                                Some(e) => value.push(e),
                                None => return Err(KvParseError::UnterminatedQuote),
                            },
                            '"' => {
                                closed = true;
                                break;
                            }
                            _ => value.push(c),
                        }
                    }
                    if !closed {
                        return Err(KvParseError::UnterminatedQuote);
                    }
                }
                _ => {
                    while let Some(&c) = chars.peek() {
                        if c == ' ' {
                            break;
                        }
                        value.push(c);
                        chars.next();
                    }
                }
            }
            record.push(&key, value);
        }
        Ok(record)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KvParseError {
    #[error("empty key in key=value record")]
    EmptyKey,
    #[error("unterminated quoted value")]
    UnterminatedQuote,
}

fn needs_quoting(v: &str) -> bool {
    v.is_empty() || v.chars().any(|c| c == ' ' || c == '"' || c == '=' || c == '\\')
}

fn quote(v: &str) -> String {
    if !needs_quoting(v) {
        return v.to_string();
    }
    let mut out = String::with_capacity(v.len() + 2);
    out.push('"');
    for c in v.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}
