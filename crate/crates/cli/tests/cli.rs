//! End-to-end tests for the `bal` binary: suite runs, golden comparison,
//! manifest governance, and the REPL sharing the harness execution path.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::tempdir;

fn bal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bal"))
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_with_stdin(mut cmd: Command, input: &str) -> Output {
    cmd.stdin(Stdio::piped());
    cmd.stdout(Stdio::piped());
    cmd.stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("binary spawns");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn run_suite_reproduces_the_reference_report_and_is_deterministic() {
    let dir = tempdir().unwrap();
    let out_a = dir.path().join("first");
    let out_b = dir.path().join("second");

    for out in [&out_a, &out_b] {
        let status = bal()
            .args(["run-suite", "--condition", "all", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }

    let report = fs::read_to_string(out_a.join("report.txt")).unwrap();
    assert!(report.contains("92% (23/25)"));
    assert!(report.contains("68% (17/25)"));
    assert!(report.contains("62.6%"));
    assert!(report.contains("0 held (4 auto-confirmed <10ms)"));

    for file in [
        "report.txt",
        "events-A.jsonl",
        "events-C.jsonl",
        "events-B.jsonl",
        "records-C.jsonl",
        "records-B.jsonl",
    ] {
        let first = fs::read(out_a.join(file)).unwrap();
        let second = fs::read(out_b.join(file)).unwrap();
        assert_eq!(first, second, "{file} differs between consecutive runs");
    }
}

#[test]
fn run_suite_compares_against_the_checked_in_golden_report() {
    let dir = tempdir().unwrap();
    let golden = repo_root().join("golden/reference_report.txt");
    let status = bal()
        .args(["run-suite", "--condition", "all", "--out"])
        .arg(dir.path().join("out"))
        .arg("--golden")
        .arg(&golden)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let tampered = dir.path().join("tampered.txt");
    let mut text = fs::read_to_string(&golden).unwrap();
    text.push_str("drift\n");
    fs::write(&tampered, text).unwrap();
    let status = bal()
        .args(["run-suite", "--condition", "all", "--out"])
        .arg(dir.path().join("out2"))
        .arg("--golden")
        .arg(&tampered)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn run_suite_loads_a_corpus_directory_and_runs_ablations() {
    let dir = tempdir().unwrap();
    let corpus = repo_root().join("corpus/v1");
    let output = bal()
        .args(["run-suite", "--condition", "abl-v", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Condition abl-v"));
}

#[test]
fn run_suite_rejects_an_unknown_condition_with_a_config_fault() {
    let dir = tempdir().unwrap();
    let status = bal()
        .args(["run-suite", "--condition", "zz", "--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn manifest_publish_list_rollback_flow() {
    let dir = tempdir().unwrap();
    let state = dir.path().join("manifests");

    for _ in 0..2 {
        let status = bal()
            .args(["manifest", "--dir"])
            .arg(&state)
            .arg("publish")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let output = bal()
        .args(["manifest", "--dir"])
        .arg(&state)
        .arg("list")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("v1"));
    assert!(stdout.contains("v2 (active)"));

    let status = bal()
        .args(["manifest", "--dir"])
        .arg(&state)
        .args(["rollback", "--version", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let output = bal()
        .args(["manifest", "--dir"])
        .arg(&state)
        .arg("list")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&output.stdout).contains("v1 (active)"));

    let status = bal()
        .args(["manifest", "--dir"])
        .arg(&state)
        .args(["rollback", "--version", "99"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn published_manifest_files_stay_metadata_only() {
    let dir = tempdir().unwrap();
    let state = dir.path().join("manifests");
    bal()
        .args(["manifest", "--dir"])
        .arg(&state)
        .arg("publish")
        .status()
        .unwrap();
    let doc = fs::read_to_string(state.join("manifest-v1.json")).unwrap();
    for marker in ["permission", "validate", "execute", "finalUserFacing"] {
        assert!(!doc.contains(marker), "marker {marker} leaked into the manifest file");
    }
    assert!(doc.contains("\"inputSchema\""));
}

#[test]
fn repl_refuses_restricted_requests_without_touching_the_store() {
    let output = run_with_stdin(
        {
            let mut cmd = bal();
            cmd.args(["repl", "--role", "restricted", "--workspace", "ws-a"]);
            cmd
        },
        "Delete the Globex client account.\nsnapshot\nquit\n",
    );
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("I don't have that capability yet."));
    assert!(stdout.contains("store unchanged"));
}

#[test]
fn repl_multi_step_confirmation_produces_the_same_event_log_as_the_harness() {
    let dir = tempdir().unwrap();

    // Harness side: the Condition-C event stream for s4-a.
    let out = dir.path().join("suite");
    bal()
        .args(["run-suite", "--condition", "C", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    let events = fs::read_to_string(out.join("events-C.jsonl")).unwrap();
    let harness_lines: Vec<&str> = events
        .lines()
        .filter(|l| l.contains("\"traceId\":\"tr-C-s4-a\""))
        .collect();
    assert!(!harness_lines.is_empty());

    // REPL side: replay the same conversation interactively.
    let log_path = dir.path().join("repl-events.jsonl");
    let output = run_with_stdin(
        {
            let mut cmd = bal();
            cmd.args(["repl", "--role", "standard", "--workspace", "ws-a", "--log"]);
            cmd.arg(&log_path);
            cmd
        },
        "Create a new client Vertex Labs (ops@vertexlabs.example, 555-0111) and invoice them $3,500 for onboarding.\nc\nc\nquit\n",
    );
    assert!(output.status.success());
    let repl_log = fs::read_to_string(&log_path).unwrap();
    let repl_lines: Vec<&str> = repl_log.lines().collect();
    assert_eq!(repl_lines, harness_lines);
}

#[test]
fn repl_cancel_leaves_the_store_unchanged() {
    let output = run_with_stdin(
        {
            let mut cmd = bal();
            cmd.args(["repl", "--role", "standard", "--workspace", "ws-a"]);
            cmd
        },
        "Create client Summit Partners (hello@summit.example, 555-0133) and invoice them $2,000.\nx\nx\nsnapshot\nquit\n",
    );
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Planned actions awaiting your approval"));
    assert!(stdout.contains("store unchanged"));
}

#[test]
fn repl_offers_help_for_unknown_utterances() {
    let output = run_with_stdin(
        {
            let mut cmd = bal();
            cmd.args(["repl"]);
            cmd
        },
        "please do something undefined\nquit\n",
    );
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("no scripted conversation matches"));
}

#[test]
fn corpus_root_env_variable_selects_the_corpus() {
    let dir = tempdir().unwrap();
    let corpus: &Path = &repo_root().join("corpus/v1");
    let status = bal()
        .args(["run-suite", "--condition", "C", "--out"])
        .arg(dir.path().join("out"))
        .env("BAL_CORPUS_ROOT", corpus)
        .status()
        .unwrap();
    assert!(status.success());
}
