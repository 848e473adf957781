use std::path::Path;
use std::process::{Command, Output};

use journey_cli::error::{EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME};
use journey_core::story::ReportDocument;
use serde_json::Value;

fn journey(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_journey"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("JOURNEY_") {
            cmd.env_remove(k);
        }
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&journey(dir.path(), &["synth", "--cohort-size", "8", "--seed", "3", "--out", out]));
    }
    ok(&journey(dir.path(), &["synth", "--cohort-size", "8", "--seed", "4", "--out", "c"]));
    for f in ["graph.json", "records.ndjson", "catalog.json", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        if f == "records.ndjson" {
            assert_ne!(a, std::fs::read(dir.path().join("c").join(f)).unwrap());
        }
    }
    let bad = journey(dir.path(), &["synth", "--scenario", "nope", "--out", "d"]);
    assert_eq!(code(&bad), EXIT_CONFIG);
}

#[test]
fn pipeline_from_synth_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = ok(&journey(d, &["synth", "--cohort-size", "15", "--out", "data"]));
    assert_eq!(m["focal_student"], "steven");
    let agg = ok(&journey(d, &["aggregate", "--data", "data", "--student", "steven", "--unit", "U7", "--unit", "U3"]));
    assert_eq!(agg["entries"].as_array().unwrap().len(), 2);

    let focus = ["--data", "data", "--student", "steven", "--unit", "U7"];
    let mine = ok(&journey(d, &[&["mine", "--k", "4"][..], &focus].concat()));
    assert_eq!(mine["schema"], "journey-insights/1");
    assert_eq!(mine["insights"].as_array().unwrap().len(), 4);
    let scores: Vec<f64> = mine["insights"].as_array().unwrap().iter().map(|i| i["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let ex = ok(&journey(d, &[&["mine", "--mode", "exercise"][..], &focus].concat()));
    assert!(ex["insights"].as_array().unwrap().iter().all(|i| i["subspace"]["mode"] == "exercise"));

    let diag = ok(&journey(d, &[&["diagnose"][..], &focus].concat()));
    assert_eq!(diag["diagnoses"].as_array().unwrap().len(), 4);
    let s1205 = diag["feedback"].as_array().unwrap().iter().find(|f| f["objective"] == "S1205").unwrap();
    assert_eq!(s1205["category"], "remediate");
    assert!(!String::from_utf8_lossy(&journey(d, &[&["diagnose"][..], &focus].concat()).stdout).contains("\"steven\""));

    ok(&journey(d, &[&["report", "--out", "out/r1.json"][..], &focus].concat()));
    ok(&journey(d, &[&["report", "--out", "out/r2.json"][..], &focus].concat()));
    let read = |f: &str| ReportDocument::from_json(&std::fs::read_to_string(d.join("out").join(f)).unwrap()).unwrap();
    let (r1, r2) = (read("r1.json"), read("r2.json"));
    assert_eq!(r1.stages.len(), 12);
    assert_eq!(r1.canonical_json().unwrap(), r2.canonical_json().unwrap());
}

#[test]
fn aggregate_all_students() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "4", "--out", "data"]));
    let agg = ok(&journey(d, &["aggregate", "--data", "data", "--all-students", "--unit", "U1"]));
    assert_eq!(agg["entries"].as_array().unwrap().len(), 4);
    let missing = journey(d, &["aggregate", "--data", "data"]);
    assert_eq!(code(&missing), EXIT_CONFIG);
}

#[test]
fn stale_and_missing_entries_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "6", "--out", "data"]));
    let focus = ["mine", "--data", "data", "--student", "steven", "--unit", "U7"];
    assert_eq!(code(&journey(d, &focus)), EXIT_DATA);
    ok(&journey(d, &["aggregate", "--data", "data", "--student", "steven", "--unit", "U7"]));
    ok(&journey(d, &focus));
    // settings that feed aggregation make the entry stale
    let stale = journey(d, &[&focus[..], &["--set", "interval_width_days=14"]].concat());
    assert_eq!(code(&stale), EXIT_DATA);
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale"));
    // mining settings do not
    ok(&journey(d, &[&focus[..], &["--set", "permutations=99"]].concat()));
    assert_eq!(code(&journey(d, &["mine", "--data", "data", "--student", "steven", "--unit", "U99"])), EXIT_DATA);
}

#[test]
fn config_file_env_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "6", "--out", "data"]));
    std::fs::write(d.join("j.toml"), "top_k = 2\ncache_dir = \"from-file\"\n").unwrap();
    let agg = ok(&journey(d, &["--config", "j.toml", "aggregate", "--data", "data", "--student", "steven", "--unit", "U7"]));
    assert_eq!(agg["cache_dir"], "from-file");

    let mine = |extra_env: &[(&str, &str)], args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_journey"));
        cmd.current_dir(d).env("JOURNEY_CONFIG", "j.toml");
        for (k, v) in extra_env {
            cmd.env(k, v);
        }
        cmd.args(["mine", "--data", "data", "--student", "steven", "--unit", "U7"]).args(args);
        ok(&cmd.output().unwrap())["insights"].as_array().unwrap().len()
    };
    assert_eq!(mine(&[], &[]), 2);
    assert_eq!(mine(&[("JOURNEY_TOP_K", "3")], &[]), 3);
    assert_eq!(mine(&[("JOURNEY_TOP_K", "3")], &["--k", "5"]), 5);
    assert_eq!(mine(&[("JOURNEY_TOP_K", "3")], &["--set", "top_k=1"]), 1);

    let bad = journey(d, &["--config", "missing.toml", "mine", "--data", "data", "--student", "steven", "--unit", "U7"]);
    assert_eq!(code(&bad), EXIT_CONFIG);
}

#[test]
fn ingest_validates_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "3", "--out", "src"]));
    // shuffle the record file; ingest restores canonical order
    let text = std::fs::read_to_string(d.join("src/records.ndjson")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.reverse();
    std::fs::write(d.join("shuffled.ndjson"), lines.join("\n")).unwrap();
    let m = ok(&journey(d, &["ingest", "--graph", "src/graph.json", "--records", "shuffled.ndjson", "--out", "clean"]));
    assert_eq!(m["students"], 3);
    assert_eq!(std::fs::read_to_string(d.join("clean/records.ndjson")).unwrap(), text);

    let cyclic = r#"{"units":[{"id":"U","title":"U","objectives":["A","B"]}],"objectives":[{"id":"A","label":"A","unit_id":"U"},{"id":"B","label":"B","unit_id":"U"}],"edges":[["A","B"],["B","A"],["A","A"]]}"#;
    std::fs::write(d.join("bad.json"), cyclic).unwrap();
    let out = journey(d, &["ingest", "--graph", "bad.json", "--records", "shuffled.ndjson", "--out", "x"]);
    assert_eq!(code(&out), EXIT_DATA, "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("graph is invalid") && err.lines().count() >= 3, "{err}");

    std::fs::write(d.join("junk.ndjson"), "{\"not\": \"a record\"}\n").unwrap();
    let out = journey(d, &["ingest", "--graph", "src/graph.json", "--records", "junk.ndjson", "--out", "x"]);
    assert_eq!(code(&out), EXIT_DATA);
    let out = journey(d, &["ingest", "--graph", "src/graph.json", "--records", "nope.ndjson", "--out", "x"]);
    assert_eq!(code(&out), EXIT_DATA);
}

#[test]
fn serve_startup_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "3", "--out", "data"]));
    let out = journey(d, &["--cache-dir", "no-such-dir", "serve", "--data", "data", "--addr", "127.0.0.1:0"]);
    assert_eq!(code(&out), EXIT_DATA);

    ok(&journey(d, &["aggregate", "--data", "data", "--student", "steven", "--unit", "U7"]));
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let out = journey(d, &["serve", "--data", "data", "--addr", &addr]);
    assert_eq!(code(&out), EXIT_RUNTIME, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn llm_backend_without_endpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&journey(d, &["synth", "--cohort-size", "3", "--out", "data"]));
    ok(&journey(d, &["aggregate", "--data", "data", "--student", "steven", "--unit", "U7"]));
    let out = journey(d, &["report", "--backend", "llm", "--data", "data", "--student", "steven", "--unit", "U7"]);
    assert_eq!(code(&out), EXIT_CONFIG);
}
