//! Stage implementations. Stages communicate exclusively through files
//! under the output directory, so any stage can be rerun in isolation:
//!
//! - `studies.jsonl`      one included study per line, sorted by nct_id
//! - `warnings.log`       ingestion warning records
//! - `exclusions.kv`      exclusion report
//! - `mapping.csv`        adverse-event term mappings
//! - `coverage.{txt,csv}` mapping coverage artifacts
//! - `mapping.conditions.csv`, `coverage.conditions.{txt,csv}`
//! - `tables/*.csv`       relational table set
//! - `schema.<dialect>.sql`
//! - `screening.<group>.*`
//! - `manifest.<stage>.kv`, `manifest.kv`

use std::path::{Path, PathBuf};

use ctgdb::analytics::{self, ScreenConfig};
use ctgdb::emit::{self, load as dbload, Dialect, EthnicityMap};
use ctgdb::ingest;
use ctgdb::manifest::{run_id_for, sha256_file, RunManifest};
use ctgdb::model::StudyRecord;
use ctgdb::normalizer::{normalize_corpus, TermMapping};
use ctgdb::terminology::{load_dictionary, TermDictionary};
use ctgdb::warnlog::write_warnings;

use crate::config::PipelineConfig;
use crate::CliError;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const LOCK_FILE: &str = ".ctgdb.lock";

/// One pipeline run per output directory, enforced via a lock file.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out).map_err(|e| {
            CliError::config(format!("cannot create output dir {}: {e}", out.display()))
        })?;
        let path = out.join(LOCK_FILE);
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::config(
                format!(
                    "output dir is locked by another run ({}); remove the file if that run crashed",
                    path.display()
                ),
            )),
            Err(e) => Err(CliError::config(format!(
                "cannot create lock {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn new_manifest(cfg: &PipelineConfig) -> RunManifest {
    let snapshot = cfg.snapshot();
    let mut m = RunManifest::new(&run_id_for(&snapshot), TOOL_VERSION);
    m.push_config(&snapshot);
    m
}

fn push_artifact(
    manifest: &mut RunManifest,
    out: &Path,
    rel: &str,
    rows: Option<u64>,
) -> Result<(), CliError> {
    let sha = sha256_file(&out.join(rel))
        .map_err(|e| CliError::other(format!("cannot hash {rel}: {e}")))?;
    manifest.push_artifact(rel, rows, &sha);
    Ok(())
}

fn write_text(out: &Path, rel: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(out.join(rel), text)
        .map_err(|e| CliError::other(format!("cannot write {rel}: {e}")))
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn run_ingest(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest, CliError> {
    let input = cfg.require_input_dir()?;
    let result = ingest::ingest_archive(input)
        .map_err(|e| CliError::config(e.to_string()))?;

    let mut lines = String::new();
    for s in &result.studies {
        lines.push_str(&serde_json::to_string(s).expect("study records serialize"));
        lines.push('\n');
    }
    write_text(out, "studies.jsonl", &lines)?;
    write_warnings(&out.join("warnings.log"), &result.warnings)
        .map_err(|e| CliError::other(format!("cannot write warnings.log: {e}")))?;
    write_text(out, "exclusions.kv", &format!("{}\n", result.report.to_kv_line()))?;

    let mut manifest = new_manifest(cfg);
    push_artifact(&mut manifest, out, "studies.jsonl", Some(result.studies.len() as u64))?;
    push_artifact(&mut manifest, out, "warnings.log", Some(result.warnings.len() as u64))?;
    push_artifact(&mut manifest, out, "exclusions.kv", None)?;
    manifest.push_summary(
        "success",
        &[
            ("stage", "ingest".into()),
            ("included", result.report.included.to_string()),
            ("total_seen", result.report.total_seen.to_string()),
        ],
    );
    manifest
        .write(&out.join("manifest.ingest.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;

    println!("{}", result.report.to_kv_line());
    log::info!(
        "ingest: {} studies included, {} warnings",
        result.report.included,
        result.warnings.len()
    );
    Ok(manifest)
}

pub fn read_studies(out: &Path) -> Result<Vec<StudyRecord>, CliError> {
    let path = out.join("studies.jsonl");
    let raw = std::fs::read_to_string(&path).map_err(|e| {
        CliError::config(format!(
            "cannot read {} (run the ingest stage first): {e}",
            path.display()
        ))
    })?;
    raw.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CliError::config(format!("corrupt record store: {e}")))
        })
        .collect()
}

fn load_vocab(cfg: &PipelineConfig) -> Result<TermDictionary, CliError> {
    let path = cfg.require_vocabulary()?;
    load_dictionary(path).map_err(|e| CliError::config(e.to_string()))
}

// ---------------------------------------------------------------------------
// normalize
// ---------------------------------------------------------------------------

pub fn run_normalize(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest, CliError> {
    let studies = read_studies(out)?;
    let dict = load_vocab(cfg)?;

    let ae_rows: Vec<(String, u64)> = studies
        .iter()
        .flat_map(|s| s.ae_rows.iter())
        .map(|r| (r.reported_term.clone(), r.participants_affected))
        .collect();
    let (mappings, coverage) = normalize_corpus(&ae_rows, &dict, &cfg.normalizer);
    let rows = emit::write_mappings_csv(&out.join("mapping.csv"), &mappings)
        .map_err(|e| CliError::other(format!("cannot write mapping.csv: {e}")))?;
    write_text(out, "coverage.txt", &coverage.render_table())?;
    coverage
        .write_csv(&out.join("coverage.csv"))
        .map_err(|e| CliError::other(format!("cannot write coverage.csv: {e}")))?;

    // Condition strings go through the same aligner; each occurrence weighs 1
    // since conditions carry no participant counts.
    let condition_rows: Vec<(String, u64)> = studies
        .iter()
        .flat_map(|s| s.conditions.iter())
        .map(|c| (c.clone(), 1))
        .collect();
    let (cond_mappings, cond_coverage) = normalize_corpus(&condition_rows, &dict, &cfg.normalizer);
    let cond_rows = emit::write_mappings_csv(&out.join("mapping.conditions.csv"), &cond_mappings)
        .map_err(|e| CliError::other(format!("cannot write mapping.conditions.csv: {e}")))?;
    write_text(out, "coverage.conditions.txt", &cond_coverage.render_table())?;
    cond_coverage
        .write_csv(&out.join("coverage.conditions.csv"))
        .map_err(|e| CliError::other(format!("cannot write coverage.conditions.csv: {e}")))?;

    let mut manifest = new_manifest(cfg);
    push_artifact(&mut manifest, out, "mapping.csv", Some(rows))?;
    push_artifact(&mut manifest, out, "coverage.txt", None)?;
    push_artifact(&mut manifest, out, "coverage.csv", None)?;
    push_artifact(&mut manifest, out, "mapping.conditions.csv", Some(cond_rows))?;
    push_artifact(&mut manifest, out, "coverage.conditions.txt", None)?;
    push_artifact(&mut manifest, out, "coverage.conditions.csv", None)?;
    manifest.push_summary(
        "success",
        &[
            ("stage", "normalize".into()),
            ("unique_terms", rows.to_string()),
        ],
    );
    manifest
        .write(&out.join("manifest.normalize.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;

    println!("{}", coverage.render_table());
    Ok(manifest)
}

fn read_mappings(out: &Path) -> Result<Vec<TermMapping>, CliError> {
    let path = out.join("mapping.csv");
    if !path.exists() {
        return Err(CliError::config(format!(
            "{} missing (run the normalize stage first)",
            path.display()
        )));
    }
    emit::read_mappings_csv(&path).map_err(CliError::config)
}

fn ethnicity_map(cfg: &PipelineConfig) -> Result<EthnicityMap, CliError> {
    match &cfg.ethnicity_map {
        Some(path) => EthnicityMap::load(path).map_err(|e| CliError::config(e.to_string())),
        None => Ok(EthnicityMap::builtin()),
    }
}

// ---------------------------------------------------------------------------
// emit
// ---------------------------------------------------------------------------

pub fn run_emit(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest, CliError> {
    let studies = read_studies(out)?;
    let mappings = read_mappings(out)?;
    let dict = load_vocab(cfg)?;
    let ethnicity = ethnicity_map(cfg)?;

    let tables_dir = out.join("tables");
    let tables = emit::emit_tables(&studies, &mappings, &dict, &ethnicity, &tables_dir)
        .map_err(|e| CliError::other(e.to_string()))?;

    let schemas = emit::standard_schemas();
    let mut manifest = new_manifest(cfg);
    for t in &tables {
        let rel = format!("tables/{}.csv", t.name);
        push_artifact(&mut manifest, out, &rel, Some(t.rows))?;
    }
    for dialect in &cfg.dialects {
        let ddl = emit::generate_ddl(*dialect, &schemas)
            .map_err(|e| CliError::other(e.to_string()))?;
        let rel = format!("schema.{}.sql", dialect.as_str());
        write_text(out, &rel, &ddl)?;
        push_artifact(&mut manifest, out, &rel, None)?;
    }
    manifest.push_summary(
        "success",
        &[("stage", "emit".into()), ("tables", tables.len().to_string())],
    );
    manifest
        .write(&out.join("manifest.emit.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;

    log::info!("emit: {} tables under {}", tables.len(), tables_dir.display());
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// load
// ---------------------------------------------------------------------------

/// Recreate the emitted-table inventory from `tables/` for stage isolation.
fn table_inventory(out: &Path) -> Result<Vec<emit::TableCsv>, CliError> {
    let schemas = emit::standard_schemas();
    let tables_dir = out.join("tables");
    if !tables_dir.is_dir() {
        return Err(CliError::config(format!(
            "{} missing (run the emit stage first)",
            tables_dir.display()
        )));
    }
    emit::table_inventory(&tables_dir, &schemas).map_err(|e| CliError::config(e.to_string()))
}

pub fn run_load(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest, CliError> {
    let uri = cfg.db_uri_resolved().ok_or_else(|| {
        CliError::config(format!(
            "no database connection configured: pass --db-uri sqlite:<path> or set {}",
            crate::config::DB_URI_ENV
        ))
    })?;
    let spec = dbload::ConnectionSpec::parse(&uri).map_err(|e| CliError::config(e.to_string()))?;
    if spec.sqlite_path.exists() {
        return Err(CliError::config(format!(
            "database file {} already exists; remove it or choose a fresh path",
            spec.sqlite_path.display()
        )));
    }
    let tables = table_inventory(out)?;
    let schemas = emit::standard_schemas();
    // The logical schema is dialect-independent; the load applies the first
    // configured dialect's spelling.
    let dialect = cfg.dialects.first().copied().unwrap_or(Dialect::Postgres);

    let mut conn = spec.open().map_err(|e| CliError::load(e.to_string()))?;
    dbload::apply_ddl(&conn, dialect, &schemas).map_err(|e| CliError::load(e.to_string()))?;
    let load_manifest =
        dbload::bulk_load(&mut conn, &schemas, &tables).map_err(|e| CliError::load(e.to_string()))?;

    let mut manifest = new_manifest(cfg);
    for t in &load_manifest.tables {
        manifest.push_table(&t.table, t.rows_written, t.rows_loaded, &t.checksum);
    }
    let (status, failure) = match &load_manifest.status {
        dbload::LoadStatus::Success => ("success", None),
        dbload::LoadStatus::Failed { table, row, message } => (
            "failed",
            Some(format!(
                "table {table}{}: {message}",
                row.map(|r| format!(" row {r}")).unwrap_or_default()
            )),
        ),
    };
    let mut summary = vec![
        ("stage", "load".to_string()),
        ("dialect", dialect.as_str().to_string()),
        ("db", uri.clone()),
    ];
    if let Some(f) = &failure {
        summary.push(("failure", f.clone()));
    }
    manifest.push_summary(status, &summary);
    manifest
        .write(&out.join("manifest.load.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;

    match failure {
        Some(f) => Err(CliError::load(format!("bulk load failed: {f}"))),
        None => {
            log::info!("load: {} tables into {uri}", load_manifest.tables.len());
            Ok(manifest)
        }
    }
}

// ---------------------------------------------------------------------------
// screen
// ---------------------------------------------------------------------------

fn group_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn run_screen(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest, CliError> {
    if cfg.event_groups.is_empty() {
        return Err(CliError::config(
            "no event group files configured (use --event-group or event_group=)",
        ));
    }
    let studies = read_studies(out)?;
    let mappings = read_mappings(out)?;
    let dict = load_vocab(cfg)?;

    let mut groups = Vec::new();
    for path in &cfg.event_groups {
        let loaded =
            analytics::load_event_groups(path).map_err(|e| CliError::config(e.to_string()))?;
        groups.extend(loaded);
    }
    if groups.is_empty() {
        return Err(CliError::config("event group files define no groups"));
    }
    for g in &groups {
        g.validate(&dict).map_err(|e| CliError::config(e.to_string()))?;
    }

    let screen_cfg = ScreenConfig {
        phase_restrict: cfg.phase_restrict,
        serious_only: cfg.serious_only,
    };
    let mut manifest = new_manifest(cfg);
    for group in &groups {
        let result = analytics::screen(&studies, &mappings, &dict, group, &screen_cfg)
            .map_err(|e| match e {
                analytics::AnalyticsError::EmptyPlaceboReference => CliError::analytic(e.to_string()),
                other => CliError::other(other.to_string()),
            })?;
        let stem = group_file_stem(&group.name);
        let arm_rel = format!("screening.{stem}.csv");
        analytics::write_screening_csv(&result, &out.join(&arm_rel))
            .map_err(|e| CliError::other(format!("cannot write {arm_rel}: {e}")))?;
        push_artifact(&mut manifest, out, &arm_rel, Some(result.arms.len() as u64))?;

        let products_rel = format!("screening.{stem}.products.csv");
        analytics::write_products_csv(&result, &out.join(&products_rel))
            .map_err(|e| CliError::other(format!("cannot write {products_rel}: {e}")))?;
        push_artifact(&mut manifest, out, &products_rel, Some(result.products.len() as u64))?;

        let pairs_rel = format!("screening.{stem}.pairs.csv");
        analytics::write_pairs_csv(&result, &out.join(&pairs_rel))
            .map_err(|e| CliError::other(format!("cannot write {pairs_rel}: {e}")))?;
        push_artifact(&mut manifest, out, &pairs_rel, Some(result.head_to_head.len() as u64))?;

        let annex_rel = format!("screening.{stem}.annex.kv");
        write_text(out, &annex_rel, &analytics::render_annex(&result))?;
        push_artifact(&mut manifest, out, &annex_rel, None)?;

        println!(
            "group={} arms={} placebo_arms={} q75={:.6} max={:.6} exceed_q75={} exceed_max={} products={}",
            group.name,
            result.arms.len(),
            result.reference.pooled_arms.len(),
            result.reference.q75,
            result.reference.max_p,
            result.arms.iter().filter(|a| a.exceeds_q75).count(),
            result.arms.iter().filter(|a| a.exceeds_max).count(),
            result.products.len(),
        );
        for p in &result.products {
            println!(
                "  product={} n_ae={} n_started={} p={:.6} or={:.6}{}",
                p.product_label,
                p.n_ae,
                p.n_started,
                p.p,
                p.or_vs_placebo.value,
                if p.or_vs_placebo.corrected { " (corrected)" } else { "" },
            );
        }
    }
    manifest.push_summary(
        "success",
        &[("stage", "screen".into()), ("groups", groups.len().to_string())],
    );
    manifest
        .write(&out.join("manifest.screen.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// all
// ---------------------------------------------------------------------------

pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let mut combined = new_manifest(cfg);
    let stages: Vec<RunManifest> = {
        let mut v = Vec::new();
        v.push(run_ingest(cfg, out)?);
        v.push(run_normalize(cfg, out)?);
        v.push(run_emit(cfg, out)?);
        if cfg.db_uri_resolved().is_some() {
            v.push(run_load(cfg, out)?);
        } else {
            log::info!("load: skipped (no db uri configured)");
        }
        if cfg.event_groups.is_empty() {
            log::info!("screen: skipped (no event groups configured)");
        } else {
            v.push(run_screen(cfg, out)?);
        }
        v
    };
    for stage in &stages {
        for rec in stage.records() {
            let kind = rec.get("record");
            if kind == Some("artifact") || kind == Some("table") || kind == Some("summary") {
                combined.push_record(rec.clone());
            }
        }
    }
    combined.push_summary("success", &[("stage", "all".into()), ("stages", stages.len().to_string())]);
    combined
        .write(&out.join("manifest.kv"))
        .map_err(|e| CliError::other(format!("cannot write manifest: {e}")))?;
    Ok(())
}
