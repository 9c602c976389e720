use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_entred");

fn entred(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("ENTRED_ORACLE")
        .env_remove("ENTRED_NER")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = entred(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Synthetic corpus, trigger map and lexicons in a fresh directory.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["-q", "corpus", "synth", "--out", "corpus.json", "--size", "120", "--seed", "5", "--triggers-out", "triggers.json"]);
    ok(dir.path(), &["-q", "lexicon", "synth", "--size", "500", "--out-dir", "lex"]);
    dir
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamps(mut v: Value) -> Value {
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    v
}

fn entre_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "-q",
        "entre",
        "run",
        "--corpus",
        "corpus.json",
        "--out",
        out,
        "--person-lexicon",
        "lex/person.txt",
        "--org-lexicon",
        "lex/organization.txt",
        "--oracle",
        "stub:memorizer=corpus.json",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = entred(dir.path(), &["corpus", "stats"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--corpus"));
}

#[test]
fn missing_oracle_is_a_usage_error() {
    let dir = workspace();
    let out = entred(dir.path(), &["audit", "shortcuts", "--corpus", "corpus.json"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(entred(dir.path(), &["entre", "run", "--help"]).status.code(), Some(0));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = workspace();
    ok(dir.path(), &entre_args("a/out.json", &["--seed", "11", "--max-iter", "20"]));
    ok(dir.path(), &entre_args("b/out.json", &["--seed", "11", "--max-iter", "20"]));
    let a = manifest(&dir.path().join("a/manifest.json"));
    let b = manifest(&dir.path().join("b/manifest.json"));
    for key in ["corpus", "trace"] {
        assert_eq!(a["outputs"][key]["sha256"], b["outputs"][key]["sha256"], "{key}");
    }
    assert_eq!(a["inputs"], b["inputs"]);
    assert_eq!(a["seed"], 11);

    ok(dir.path(), &entre_args("c/out.json", &["--seed", "12", "--max-iter", "20"]));
    let c = manifest(&dir.path().join("c/manifest.json"));
    assert_ne!(a["outputs"]["corpus"]["sha256"], c["outputs"]["corpus"]["sha256"]);
}

#[test]
fn config_file_matches_flags() {
    let dir = workspace();
    ok(dir.path(), &entre_args("flags/out.json", &["--seed", "3", "--max-iter", "7", "--initial-pass", "--roles", "subject"]));
    fs::write(
        dir.path().join("run.toml"),
        "seed = 3\nmax_iter = 7\ninitial-pass = true\nroles = [\"subject\"]\nunique-names = false\n",
    )
    .unwrap();
    let mut args = entre_args("config/out.json", &[]);
    args.extend_from_slice(&["--config", "run.toml"]);
    ok(dir.path(), &args);

    let a = without_timestamps(manifest(&dir.path().join("flags/manifest.json")));
    let mut b = without_timestamps(manifest(&dir.path().join("config/manifest.json")));
    // only the output locations differ
    b["config"]["out"] = a["config"]["out"].clone();
    for key in ["corpus", "trace"] {
        b["outputs"][key]["path"] = a["outputs"][key]["path"].clone();
    }
    assert_eq!(a, b);
}

#[test]
fn command_line_beats_config_file() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), "seed = 3\nmax-iter = 2\n").unwrap();
    let mut args = entre_args("out.json", &["--seed", "9"]);
    args.extend_from_slice(&["--config", "run.toml"]);
    ok(dir.path(), &args);
    let m = manifest(&dir.path().join("manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["max_iter"], 2);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = workspace();
    fs::write(dir.path().join("run.toml"), "[nested]\nseed = 1\n").unwrap();
    let mut args = entre_args("out.json", &[]);
    args.extend_from_slice(&["--config", "run.toml"]);
    assert_eq!(entred(dir.path(), &args).status.code(), Some(64));
}

#[test]
fn inputs_are_not_modified() {
    let dir = workspace();
    let files: Vec<PathBuf> =
        ["corpus.json", "lex/person.txt", "lex/organization.txt"].iter().map(|f| dir.path().join(f)).collect();
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    ok(dir.path(), &entre_args("out/out.json", &["--max-iter", "5"]));
    ok(dir.path(), &["-q", "corpus", "mask", "--corpus", "corpus.json", "--out", "masked.json", "--mode", "no-name-with-type"]);
    let after: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn stdio_stub_matches_in_process_stub() {
    let dir = workspace();
    let served = format!("cmd:{BIN} oracle serve --stub stub:context-reader=triggers.json");
    let remote = ok(dir.path(), &["-q", "eval", "score", "--corpus", "corpus.json", "--oracle", &served, "--workers", "2", "--batch-size", "7", "--format", "json"]);
    let local = ok(dir.path(), &["-q", "eval", "score", "--corpus", "corpus.json", "--oracle", "stub:context-reader=triggers.json", "--format", "json"]);
    assert_eq!(remote, local);
}

#[test]
fn oracle_can_come_from_the_environment() {
    let dir = workspace();
    let out = Command::new(BIN)
        .args(["-q", "eval", "score", "--corpus", "corpus.json", "--format", "json"])
        .current_dir(dir.path())
        .env("ENTRED_ORACLE", "stub:memorizer=corpus.json")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["f1"], 1.0);
}

#[test]
fn f1_floor_fails_the_run() {
    let dir = workspace();
    ok(dir.path(), &entre_args("out/out.json", &["--max-iter", "30"]));
    let args = ["-q", "eval", "robustness", "--before", "corpus.json", "--after", "out/out.json", "--oracle", "stub:memorizer=corpus.json", "--min-f1", "0.5"];
    let out = entred(dir.path(), &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below the floor"));
}

#[test]
fn unreachable_oracle_exits_with_oracle_code() {
    let dir = workspace();
    let out = entred(dir.path(), &["-q", "oracle", "handshake", "--oracle", "cmd:exit 3", "--retries", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = r#"[{"id":"a","token":["x","y"],"subj_start":0,"subj_end":0,"obj_start":5,"obj_end":5,
        "subj_type":"PERSON","obj_type":"ORGANIZATION","relation":"no_relation"}]"#;
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = entred(dir.path(), &["-q", "corpus", "validate", "--corpus", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("record 0 (a)"));
}

#[test]
fn validate_checks_label_set() {
    let dir = workspace();
    fs::write(dir.path().join("labels.txt"), "no_relation\n").unwrap();
    let out = entred(dir.path(), &["-q", "corpus", "validate", "--corpus", "corpus.json", "--labels", "labels.txt"]);
    assert_eq!(out.status.code(), Some(1));
    ok(dir.path(), &["-q", "corpus", "validate", "--corpus", "corpus.json"]);
}

#[test]
fn shortcut_reports_compare() {
    let dir = workspace();
    ok(dir.path(), &entre_args("out/out.json", &["--max-iter", "30"]));
    for (corpus, report) in [("corpus.json", "before.json"), ("out/out.json", "after.json")] {
        ok(dir.path(), &["-q", "audit", "shortcuts", "--corpus", corpus, "--oracle", "stub:memorizer=corpus.json", "--report", report]);
    }
    let text = ok(dir.path(), &["-q", "audit", "compare", "--before", "before.json", "--after", "after.json", "--format", "json"]);
    let cmp: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(cmp["overall"]["before"], 1.0);
    assert!(cmp["overall"]["after"].as_f64().unwrap() < 1.0);
}
