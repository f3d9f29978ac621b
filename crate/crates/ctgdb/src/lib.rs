//! Pipeline library for transforming a clinical-trial registry XML archive
//! into an ontology-aligned relational dataset with cross-trial screening
//! statistics.
//!
//! The pipeline stages are:
//!
//! 1. [`ingest`] — parse registry XML files into typed [`model::StudyRecord`]s,
//!    apply inclusion filters, and tally exclusions.
//! 2. [`terminology`] — load a PT/LLT vocabulary and build lookup indices.
//! 3. [`normalizer`] — align reported adverse-event strings to vocabulary
//!    codes via exact and bigram fuzzy matching.
//! 4. [`emit`] — serialize everything into table-oriented CSVs, generate DDL,
//!    and bulk-load into a relational store.
//! 5. [`analytics`] — coverage reports, event grouping, arm proportions,
//!    pooled-placebo thresholds, and odds ratios.
//!
//! Stages communicate through files so each can be rerun in isolation; see
//! the `ctgdb` binary crate for the orchestration layer.

pub mod analytics;
pub mod emit;
pub mod ingest;
pub mod kv;
pub mod manifest;
pub mod model;
pub mod normalizer;
pub mod terminology;
pub mod warnlog;
