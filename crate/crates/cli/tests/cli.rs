use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulcast"))
}

fn scenario(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_trace(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn run_writes_deliveries_two_rounds_after_the_broadcast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.jsonl");
    let o = run(&["run", "--scenario", scenario("fbc/fbc_basic.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let events = read_trace(&out);
    let outputs: Vec<&Value> = events.iter().filter(|e| e["label"] == "output").collect();
    assert_eq!(outputs.len(), 3);
    for e in outputs {
        assert_eq!(e["round"], 3);
        assert_eq!(e["payload"]["msg"], hex::encode("hello"));
    }
}

#[test]
fn compare_reports_equal() {
    let o = run(&["compare", "--scenario", scenario("sbc/sbc_midround.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("sbc_midround: equal"), "{}", stdout(&o));
}

#[test]
fn compare_json_is_machine_readable() {
    let o = run(&["compare", "--json", "--scenario", scenario("tle/tle_basic.json").to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "equal");
    assert_eq!(v["rules"]["normalize"], "strip_ciphers");
}

#[test]
fn audit_flags_a_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = run(&["run", "--scenario", scenario("fbc/fbc_basic.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let clean = run(&["audit", "--trace", out.to_str().unwrap()]);
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));

    let mut events = read_trace(&out);
    let budget = events.iter_mut().find(|e| e["label"] == "ro_batch").unwrap();
    budget["payload"]["used"] = Value::from(5);
    let text: String = events.iter().map(|e| format!("{e}\n")).collect();
    std::fs::write(&out, text).unwrap();
    let bad = run(&["audit", "--trace", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("violation [budget]"), "{}", stdout(&bad));
}

#[test]
fn malformed_json_reports_its_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, "{\n  \"seed\": 1,\n  \"n\": ,\n}\n").unwrap();
    let o = run(&["compare", "--scenario", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("s.json");
    std::fs::write(&f, r#"{"seed": 1, "n": 3, "stack": "carrier_pigeon"}"#).unwrap();
    assert_eq!(run(&["compare", "--scenario", f.to_str().unwrap()]).status.code(), Some(2));

    std::fs::write(&f, r#"{"seed": 1, "n": 3, "stack": "sbc", "params": {"phi": 2}}"#).unwrap();
    let o = run(&["run", "--scenario", f.to_str().unwrap(), "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let missing = run(&["audit", "--trace", dir.path().join("nope.jsonl").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn stats_respects_the_thread_cap() {
    let o = bin()
        .args(["stats", "--json", "--trials", "40", "--scenario"])
        .arg(scenario("durs/durs_basic.json"))
        .env("SBC_SIM_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["threads"], 1);
    assert_eq!(v["trials"], 40);
    assert_eq!(v["bit_frequency"].as_array().unwrap().len(), 256);
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("vote/vote_midround.json");
    let mut files = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let out = dir.path().join(name);
        assert!(run(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
        files.push(std::fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}
