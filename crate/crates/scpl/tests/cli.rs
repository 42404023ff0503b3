mod common;

use std::path::Path;
use std::process::{Command, Output};

fn scpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scpl")).args(args).output().expect("scpl runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn corpus(file: &str) -> String {
    common::corpus_path(file)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn check_reports_violations_with_positions() {
    for name in common::CONTRACTS {
        let out = scpl(&["check", &corpus(&format!("{name}.scpl"))]);
        assert_eq!(code(&out), 0, "{name}: {}", stderr(&out));
    }
    let out = scpl(&["check", &corpus("violations.scpl")]);
    assert_eq!(code(&out), 1);
    let diags: Vec<String> = stderr(&out).lines().filter(|l| l.contains("ExplicitND")).map(String::from).collect();
    assert_eq!(diags.len(), 3, "{diags:?}");
    for (d, line) in diags.iter().zip([8, 13, 18]) {
        assert!(d.starts_with(&format!("{}:{line}:1: ExplicitND", corpus("violations.scpl"))), "{d}");
    }
    let out = scpl(&["check", "--json", &corpus("violations.scpl")]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    assert!(json[0]["witness"]["theta"].is_object());
}

#[test]
fn check_distinguishes_unreadable_and_malformed_files() {
    assert_eq!(code(&scpl(&["check", "/no/such/contract.scpl"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scpl");
    std::fs::write(&bad, "agent --> agent(10)").unwrap();
    let out = scpl(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.scpl:1:"), "{}", stderr(&out));
    assert_eq!(code(&scpl(&["frobnicate"])), 2);
}

#[test]
fn run_prints_the_canonical_trace_and_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("th.txt");
    let out = scpl(&[
        "run",
        &corpus("tourists_hosts.scpl"),
        "--oracle",
        &corpus("tourists_hosts.script.json"),
        "--scheduler",
        "canonical",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(printed.lines().count(), 9);
    assert_eq!(std::fs::read_to_string(&trace).unwrap(), printed);
    // The reference trace, up to interleaving and the order in which the
    // two rival tourists reach nimrod.
    let golden = std::fs::read_to_string(corpus("tourists_hosts.golden.txt")).unwrap();
    let golden = golden.replace("udi", "@").replace("avigail", "udi").replace('@', "avigail");
    let strip = |s: &str| -> Vec<String> {
        let mut v: Vec<String> = s.lines().map(|l| l.split_once(" = ").unwrap().1.to_string()).collect();
        v.sort();
        v
    };
    assert_eq!(strip(&printed), strip(&golden));

    let jsonl = dir.path().join("th.jsonl");
    let out = scpl(&["verify", &corpus("tourists_hosts.scpl"), jsonl.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn zero_steps_give_an_empty_trace() {
    let out = scpl(&["run", &corpus("tourists_hosts.scpl"), "--max-steps", "0"]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn random_endowment_runs_verify_clean() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("e.jsonl");
    let out = scpl(&[
        "run",
        &corpus("endowment.scpl"),
        "--oracle",
        "random",
        "--scheduler",
        "random",
        "--seed",
        "11",
        "--max-steps",
        "500",
        "--trace",
        trace.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("e.txt").exists());
    let out = scpl(&["verify", "--json", &corpus("endowment.scpl"), trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"supply") && names.contains(&"balance-nonnegative"), "{names:?}");
}

#[test]
fn manifests_drive_runs_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(corpus("tourists_hosts.scpl"), dir.path().join("th.scpl")).unwrap();
    std::fs::copy(corpus("tourists_hosts.script.json"), dir.path().join("script.json")).unwrap();
    let manifest = dir.path().join("run.json");
    std::fs::write(&manifest, r#"{"contract": "th.scpl", "oracle": {"script": "script.json"}, "trace": "out.txt"}"#).unwrap();
    let out = scpl(&["run", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 9);
    assert!(dir.path().join("out.jsonl").exists());
    let out = scpl(&["run", manifest.to_str().unwrap(), "--oracle", "none"]);
    assert!(out.stdout.is_empty(), "with every human passing, nothing happens");
}

#[test]
fn contract_faults_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("fault.scpl");
    // The receiver matches `give(N)` but its condition fails.
    std::fs::write(
        &src,
        "activation [a#giver, b#taker].\n\
         giver --> give(1), giver(done).\n\
         taker, Giver(give(N)) --> taker(N) where N > 5.\n",
    )
    .unwrap();
    let out = scpl(&["run", src.to_str().unwrap(), "--oracle", "random"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("conditions failed"), "{}", stderr(&out));
    // Not runnable at all: exit 1.
    assert_eq!(code(&scpl(&["run", &corpus("violations.scpl")])), 1);
}

fn corrupt(lines: &[&str], f: impl FnOnce(&mut Vec<String>)) -> String {
    let mut v: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    f(&mut v);
    v.join("\n") + "\n"
}

#[test]
fn verify_rejects_corrupted_traces() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("th.jsonl");
    let run = scpl(&["run", "-q", &corpus("tourists_hosts.scpl"), "--oracle", &corpus("tourists_hosts.script.json"), "--trace", good.to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let text = std::fs::read_to_string(&good).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let check = |name: &str, body: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        let out = scpl(&["verify", &corpus("tourists_hosts.scpl"), p.to_str().unwrap()]);
        assert_eq!(code(&out), 1, "{name} passed verification");
        let report = String::from_utf8_lossy(&out.stdout).into_owned() + &stderr(&out);
        assert!(report.contains("FAIL") || report.contains("line"), "{report}");
    };
    check("deleted.jsonl", corrupt(&lines, |v| {
        v.remove(v.len() / 2);
    }));
    check("garbled.jsonl", corrupt(&lines, |v| v[0] = "{not json".into()));
    // Swap two acts signed by nimrod.
    let nimrod: Vec<usize> =
        lines.iter().enumerate().filter(|(_, l)| l.contains("\"act\"") && l.contains("\"agent\":\"nimrod\"")).map(|(i, _)| i).collect();
    assert!(nimrod.len() >= 2, "{text}");
    check("swapped.jsonl", corrupt(&lines, |v| v.swap(nimrod[0], nimrod[1])));
    assert_eq!(code(&scpl(&["verify", &corpus("tourists_hosts.scpl"), "/no/such/trace.jsonl"])), 2);
}

#[test]
fn serve_reports_a_busy_port() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = scpl(&["serve", &corpus("tourists_hosts.scpl"), "--port", &port, "--exit-on-halt"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("cannot listen"));
}

#[test]
fn serve_with_scripted_humans_halts_and_saves_an_audited_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("served.txt");
    let out = scpl(&[
        "serve",
        &corpus("tourists_hosts.scpl"),
        "--port",
        "0",
        "--oracle",
        &corpus("tourists_hosts.script.json"),
        "--exit-on-halt",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("events match the trace"));
    let run = scpl(&["run", &corpus("tourists_hosts.scpl"), "--oracle", &corpus("tourists_hosts.script.json")]);
    assert_eq!(std::fs::read(&trace).unwrap(), run.stdout);
    assert!(Path::new(&dir.path().join("served.jsonl")).exists());
}
