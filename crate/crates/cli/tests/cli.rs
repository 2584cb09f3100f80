use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use tracer_core::ledger::LOG_FILE;

fn tracer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracer")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs a bundled scenario into `dir` and returns the bound id of `name`.
fn run_into(dir: &Path, scenario: &str, name: &str) -> String {
    let out = tracer(&["scenario", "run", "--bundled", scenario, "--seed", "5", "--data-dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let prefix = format!("${name} = ");
    stdout(&out).lines().find_map(|l| l.trim().strip_prefix(&prefix).map(str::to_string)).expect("binding printed")
}

#[test]
fn bundled_scenarios_pass_and_wrong_winner_fails() {
    let list = tracer(&["scenario", "list"]);
    let names: Vec<String> = stdout(&list).lines().map(str::to_string).collect();
    assert_eq!(names, ["art-auction", "real-estate", "contention", "wrong-winner"]);

    for name in ["art-auction", "real-estate", "contention"] {
        let out = tracer(&["scenario", "run", "--bundled", name, "--seed", "1"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(stdout(&out).contains("all expectations hold"));
    }

    let out = tracer(&["scenario", "run", "--bundled", "wrong-winner", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("doneBuyer"), "{}", stderr(&out));
}

#[test]
fn malformed_scenario_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"name\": \"x\",\n  \"steps\": [ oops ]\n}\n").unwrap();
    let out = tracer(&["scenario", "run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("SCENARIO_PARSE_ERROR") && err.contains("line 3"), "{err}");
}

#[test]
fn canonical_format_prints_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = tracer(&[
        "scenario",
        "run",
        "--bundled",
        "contention",
        "--seed",
        "2",
        "--format",
        "canonical",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(out.stdout, fs::read(&trace).unwrap());
    for line in stdout(&out).lines() {
        serde_json::from_str::<serde_json::Value>(line).expect("each trace line is JSON");
    }
}

#[test]
fn provenance_from_a_persisted_run() {
    let dir = tempfile::tempdir().unwrap();
    let house = run_into(dir.path(), "real-estate", "house");
    let data = dir.path().to_str().unwrap();

    let out = tracer(&["query-provenance", "--data-dir", data, &house]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("renovation").count(), 3, "{text}");
    assert_eq!(text.matches(" owner ").count(), 2, "{text}");

    let out = tracer(&["query-provenance", "--data-dir", data, "--format", "canonical", &house]);
    let p: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(p["ownershipHistory"].as_array().unwrap().len(), 2);
    assert_eq!(p["renovations"].as_array().unwrap().len(), 3);

    let out = tracer(&["query-provenance", "--data-dir", data, "cmd-0000000000000000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown commodity"));

    // A directory that already holds a chain is not reused for a scenario.
    let out = tracer(&["scenario", "run", "--bundled", "contention", "--data-dir", data]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_chain_reports_clean_tampered_and_empty_stores() {
    let empty = tempfile::tempdir().unwrap();
    let out = tracer(&["verify-chain", "--data-dir", empty.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("1 blocks verified"), "{}", stdout(&out));

    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), "art-auction", "lot");
    let data = dir.path().to_str().unwrap();
    let out = tracer(&["verify-chain", "--data-dir", data, "--format", "canonical"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["ok"], true);

    let log = dir.path().join(LOG_FILE);
    let mut bytes = fs::read(&log).unwrap();
    let second_line = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let target = second_line + bytes[second_line..].iter().position(|&b| b.is_ascii_hexdigit() && b != b'0').unwrap();
    bytes[target] = b'0';
    fs::write(&log, &bytes).unwrap();
    let out = tracer(&["verify-chain", "--data-dir", data]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("first bad block 1"), "{}", stdout(&out));
}

#[test]
fn serve_resumes_a_scenario_store_and_refuses_a_corrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), "contention", "lot");

    let mut child = Command::new(env!("CARGO_BIN_EXE_tracer"))
        .args(["serve", "--data-dir", dir.path().to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut banner).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(banner.starts_with("listening on http://127.0.0.1:"), "{banner}");
    assert!(banner.contains("chain height 5"), "{banner}");
    let log = dir.path().join(LOG_FILE);
    let mut bytes = fs::read(&log).unwrap();
    let last = bytes.len() - 10;
    bytes[last] ^= 0x01;
    fs::write(&log, &bytes).unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_tracer"))
        .args(["serve", "--data-dir", dir.path().to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let status = loop {
        if let Some(status) = child.try_wait().unwrap() {
            break status;
        }
        if Instant::now() > deadline {
            child.kill().unwrap();
            panic!("serve kept running on a corrupted log");
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(!status.success());
    let out = child.wait_with_output().unwrap();
    assert!(stderr(&out).to_lowercase().contains("corrupt"), "{}", stderr(&out));
}
