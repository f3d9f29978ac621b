//! Subcommand behavior through the real binary: exit codes, stage
//! isolation, flag handling, and artifact determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctgdb"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn vocab() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/vocabulary.tsv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn ingest_counts_corpus10() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ingest",
        "--in",
        &path_str(&fixtures().join("corpus10")),
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("total_seen=10"), "{report}");
    assert!(report.contains("included=8"), "{report}");
    assert!(out_dir.path().join("studies.jsonl").exists());
    assert!(out_dir.path().join("exclusions.kv").exists());
    assert!(out_dir.path().join("manifest.ingest.kv").exists());
    assert!(!out_dir.path().join(".ctgdb.lock").exists(), "lock released");
}

#[test]
fn ingest_empty_dir_succeeds_with_zero_studies() {
    let input = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ingest",
        "--in",
        &path_str(input.path()),
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("total_seen=0"));
}

#[test]
fn ingest_missing_dir_exits_2() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ingest",
        "--in",
        "/no/such/corpus",
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn locked_output_dir_is_refused() {
    let out_dir = tempfile::tempdir().unwrap();
    std::fs::write(out_dir.path().join(".ctgdb.lock"), "").unwrap();
    let out = run(&[
        "ingest",
        "--in",
        &path_str(&fixtures().join("corpus10")),
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("locked"));
}

fn ingest_and_normalize(out_dir: &Path, extra: &[&str]) -> Output {
    let out = run(&[
        "ingest",
        "--in",
        &path_str(&fixtures().join("corpus")),
        "--out",
        &path_str(out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut args = vec![
        "normalize".to_string(),
        "--out".to_string(),
        path_str(out_dir),
        "--vocab".to_string(),
        path_str(&vocab()),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    bin().args(&args).output().expect("binary runs")
}

#[test]
fn normalize_produces_coverage_and_mapping() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("exact"), "{table}");
    assert!(out_dir.path().join("mapping.csv").exists());
    assert!(out_dir.path().join("coverage.csv").exists());
    assert!(out_dir.path().join("mapping.conditions.csv").exists());
    // Known corpus-wide split: 30 exact, 2 fuzzy, 3 unmapped.
    let csv = std::fs::read_to_string(out_dir.path().join("coverage.csv")).unwrap();
    assert!(csv.contains("exact,30,"), "{csv}");
    assert!(csv.contains("fuzzy,2,"), "{csv}");
    assert!(csv.contains("unmapped,3,"), "{csv}");
}

#[test]
fn no_fuzzy_flag_zeroes_the_fuzzy_category() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &["--no-fuzzy"]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(out_dir.path().join("coverage.csv")).unwrap();
    assert!(csv.contains("fuzzy,0,"), "{csv}");
    assert!(csv.contains("unmapped,5,"), "{csv}");
}

#[test]
fn out_of_range_threshold_exits_2() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &["--fuzzy-threshold", "1.01"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fuzzy_threshold"));
}

#[test]
fn normalize_without_vocabulary_exits_2() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ingest",
        "--in",
        &path_str(&fixtures().join("corpus10")),
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&["normalize", "--out", &path_str(out_dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("vocabulary"));
}

fn full_emit(out_dir: &Path) {
    let out = ingest_and_normalize(out_dir, &[]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "emit",
        "--out",
        &path_str(out_dir),
        "--vocab",
        &path_str(&vocab()),
        "--dialect",
        "both",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn emit_writes_full_table_set_and_is_byte_identical_on_rerun() {
    let out_dir = tempfile::tempdir().unwrap();
    full_emit(out_dir.path());
    for name in [
        "clinical_trial",
        "term_dictionary",
        "term_mapping",
        "ct_conditions",
        "ct_interventions",
        "ct_arms",
        "ct_arm_demographics",
        "ethnicity_harmonization",
        "ct_ae_counts",
    ] {
        assert!(
            out_dir.path().join(format!("tables/{name}.csv")).exists(),
            "missing {name}"
        );
    }
    assert!(out_dir.path().join("schema.mysql.sql").exists());
    assert!(out_dir.path().join("schema.postgres.sql").exists());

    let before: Vec<u8> = std::fs::read(out_dir.path().join("tables/ct_ae_counts.csv")).unwrap();
    let out = run(&[
        "emit",
        "--out",
        &path_str(out_dir.path()),
        "--vocab",
        &path_str(&vocab()),
        "--dialect",
        "both",
    ]);
    assert_eq!(code(&out), 0);
    let after: Vec<u8> = std::fs::read(out_dir.path().join("tables/ct_ae_counts.csv")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn load_without_connection_exits_2_with_guidance() {
    let out_dir = tempfile::tempdir().unwrap();
    full_emit(out_dir.path());
    let out = bin()
        .args(["load", "--out", &path_str(out_dir.path())])
        .env_remove("CTGDB_DB_URI")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--db-uri"));
    assert!(stderr(&out).contains("CTGDB_DB_URI"));
}

#[test]
fn load_uses_env_fallback_and_populates_db() {
    let out_dir = tempfile::tempdir().unwrap();
    full_emit(out_dir.path());
    let db = out_dir.path().join("ctgdb.sqlite");
    let out = bin()
        .args(["load", "--out", &path_str(out_dir.path())])
        .env("CTGDB_DB_URI", format!("sqlite:{}", db.display()))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let conn = rusqlite::Connection::open(&db).unwrap();
    let n: i64 = conn
        .query_row("SELECT COUNT(*) FROM clinical_trial", [], |r| r.get(0))
        .unwrap();
    assert_eq!(n, 24);

    // A second load against the same file must refuse to clobber it.
    let out = bin()
        .args(["load", "--out", &path_str(out_dir.path())])
        .env("CTGDB_DB_URI", format!("sqlite:{}", db.display()))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("already exists"));
}

#[test]
fn screen_without_placebo_arms_exits_4() {
    let out_dir = tempfile::tempdir().unwrap();
    // corpus10 has no placebo arms at all.
    let out = run(&[
        "ingest",
        "--in",
        &path_str(&fixtures().join("corpus10")),
        "--out",
        &path_str(out_dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "normalize",
        "--out",
        &path_str(out_dir.path()),
        "--vocab",
        &path_str(&vocab()),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "screen",
        "--out",
        &path_str(out_dir.path()),
        "--vocab",
        &path_str(&vocab()),
        "--event-group",
        &path_str(&fixtures().join("groups/gi_hemorrhage.tsv")),
    ]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("placebo"));
}

#[test]
fn screen_without_group_files_exits_2() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &[]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "screen",
        "--out",
        &path_str(out_dir.path()),
        "--vocab",
        &path_str(&vocab()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("event group"));
}

#[test]
fn phase_restriction_flag_changes_product_aggregates() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &[]);
    assert_eq!(code(&out), 0);
    let screen = |extra: &[&str]| {
        let mut args = vec![
            "screen".to_string(),
            "--out".to_string(),
            path_str(out_dir.path()),
            "--vocab".to_string(),
            path_str(&vocab()),
            "--event-group".to_string(),
            path_str(&fixtures().join("groups/gi_hemorrhage.tsv")),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    };

    let restricted = screen(&[]);
    assert_eq!(code(&restricted), 0, "{}", stderr(&restricted));
    let products =
        std::fs::read_to_string(out_dir.path().join("screening.gi_hemorrhage.products.csv"))
            .unwrap();
    // Phase-restricted: the phase-2 Alodrix and Cintrelo arms stay out.
    assert!(products.contains("Alodrix,3,22,300,"), "{products}");
    assert!(products.contains("Cintrelo,2,17,200,"), "{products}");

    let unrestricted = screen(&["--no-phase-restrict"]);
    assert_eq!(code(&unrestricted), 0);
    let products =
        std::fs::read_to_string(out_dir.path().join("screening.gi_hemorrhage.products.csv"))
            .unwrap();
    assert!(products.contains("Alodrix,4,31,400,"), "{products}");
    assert!(products.contains("Cintrelo,3,18,300,"), "{products}");
}

#[test]
fn serious_only_flag_drops_non_serious_rows() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = ingest_and_normalize(out_dir.path(), &[]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "screen",
        "--out",
        &path_str(out_dir.path()),
        "--vocab",
        &path_str(&vocab()),
        "--event-group",
        &path_str(&fixtures().join("groups/gi_hemorrhage.tsv")),
        "--serious-only",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // All GI-group fixture rows are serious, so the aggregates are unchanged.
    let products =
        std::fs::read_to_string(out_dir.path().join("screening.gi_hemorrhage.products.csv"))
            .unwrap();
    assert!(products.contains("Alodrix,3,22,300,"), "{products}");
}

#[test]
fn all_without_db_or_groups_skips_those_stages() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "all",
            "--in",
            &path_str(&fixtures().join("corpus")),
            "--out",
            &path_str(out_dir.path()),
            "--vocab",
            &path_str(&vocab()),
        ])
        .env_remove("CTGDB_DB_URI")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.path().join("manifest.kv").exists());
    assert!(!out_dir.path().join("ctgdb.sqlite").exists(), "no DB touched");
    assert!(out_dir
        .path()
        .read_dir()
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().starts_with("screening.")));
}

#[test]
fn config_file_drives_a_full_run() {
    let out_dir = tempfile::tempdir().unwrap();
    let cfg_path = out_dir.path().join("pipeline.conf");
    std::fs::write(
        &cfg_path,
        format!(
            "# fixture pipeline\ninput_dir={}\noutput_dir={}\nvocabulary={}\nevent_group={}\n",
            fixtures().join("corpus").display(),
            out_dir.path().join("build").display(),
            vocab().display(),
            fixtures().join("groups/gi_hemorrhage.tsv").display(),
        ),
    )
    .unwrap();
    let out = run(&["all", "--config", &path_str(&cfg_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.path().join("build/screening.gi_hemorrhage.csv").exists());
}
