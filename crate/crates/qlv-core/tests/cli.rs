//! Exercises the `qlv` binary: exit codes, output formats and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qlv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qlv"))
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    qlv().args(args).output().expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

const HONEST_SCENARIO: &str = r#"{
  "geometry": {
    "dimension": 1,
    "stations": [
      {"id": "alice", "position": [0.0, 0.0]},
      {"id": "bob", "position": [100000.0, 0.0]}
    ],
    "device": [30000.0, 0.0]
  },
  "L": 100,
  "K": 20,
  "decoherenceChannel": {"family": "phaseDamping", "p": 0.0},
  "storageRates": {"alice": 0.0, "bob": 0.0},
  "deviceBehavior": {"kind": "honest"},
  "timingTolerance": 1e-6,
  "seed": 42
}"#;

#[test]
fn curves_row_count_and_anchor_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "curves.json",
        r#"{
          "channels": [{"family": "phaseDamping"}],
          "numQubits": [2, 6],
          "grid": {"start": 0.0, "end": 0.5, "points": 101}
        }"#,
    );
    let out = dir.path().join("curves.csv");
    let output = run(&[
        "curves",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 0, "{output:?}");

    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 202, "header plus 2 N values x 101 points");

    // The N=2 phase-damping row at p = 0.1 holds mean fidelity 0.905.
    let row = lines
        .iter()
        .find(|l| l.starts_with("phaseDamping,-,2,1.0000000000000001e-1,"))
        .expect("p=0.1 row present");
    let mean: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((mean - 0.905).abs() < 1e-10);
}

#[test]
fn curves_respects_grid_override_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "random.json",
        r#"{
          "channels": [{"family": "randomNoise", "trials": 200, "seed": 7}],
          "numQubits": [2],
          "grid": {"start": 0.0, "end": 0.5, "points": 101}
        }"#,
    );
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "curves",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--grid",
            "0:0.4:9",
            "--quiet",
        ]);
        assert_eq!(exit_code(&output), 0);
    }
    let a = fs::read(&out_a).unwrap();
    let b = fs::read(&out_b).unwrap();
    assert_eq!(a, b, "reruns must be byte-identical");
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 9);
}

#[test]
fn invalid_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "bad.json",
        r#"{"channels": [{"family": "phaseDamping"}], "numQubits": [2], "gird": {}}"#,
    );
    let out = dir.path().join("x.csv");
    let output = run(&[
        "curves",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("gird"), "message should name the field: {stderr}");
}

#[test]
fn protocol_honest_accepts_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "honest.json", HONEST_SCENARIO);
    let out = dir.path().join("verdict.json");
    let output = run(&[
        "protocol",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 0);

    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(verdict["accept"], serde_json::json!(true));

    let trace_path = dir.path().join("verdict.json.trace.jsonl");
    let trace = fs::read_to_string(&trace_path).unwrap();
    for line in trace.lines() {
        let event: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["seq", "time_s", "kind", "actor", "payload"] {
            assert!(event.get(key).is_some(), "trace line missing {key}");
        }
    }
}

#[test]
fn displaced_device_exits_3_with_timing_reason() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = HONEST_SCENARIO.replace(
        r#""deviceBehavior": {"kind": "honest"}"#,
        r#""deviceBehavior": {"kind": "displaced", "actualPosition": [31000.0, 0.0]}"#,
    );
    let config = write(dir.path(), "displaced.json", &scenario);
    let out = dir.path().join("verdict.json");
    let output = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 3);
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(verdict["reject_reasons"], serde_json::json!(["timing"]));
}

#[test]
fn cloner_exits_3_with_error_rate_reason() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = HONEST_SCENARIO
        .replace(
            r#""deviceBehavior": {"kind": "honest"}"#,
            r#""deviceBehavior": {"kind": "cloner", "cloneFidelity": 0.7}"#,
        )
        .replace(r#""K": 20"#, r#""K": 100"#)
        .replace(r#""L": 100"#, r#""L": 200"#);
    let config = write(dir.path(), "cloner.json", &scenario);
    let out = dir.path().join("verdict.json");
    let output = run(&[
        "attack",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 3);
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(verdict["reject_reasons"], serde_json::json!(["error-rate"]));
}

#[test]
fn protocol_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "honest.json", HONEST_SCENARIO);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(format!("{name}.json"));
        let trace = dir.path().join(format!("{name}.jsonl"));
        let output = run(&[
            "protocol",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(exit_code(&output), 0);
        outputs.push((fs::read(&out).unwrap(), fs::read(&trace).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_override_changes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "honest.json", HONEST_SCENARIO);
    let mut traces = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("v{seed}.json"));
        let trace = dir.path().join(format!("t{seed}.jsonl"));
        let output = run(&[
            "protocol",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
            "--seed",
            seed,
            "--quiet",
        ]);
        assert_eq!(exit_code(&output), 0);
        traces.push(fs::read(&trace).unwrap());
    }
    assert_ne!(traces[0], traces[1]);
}

#[test]
fn compare_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "compare.json",
        r#"{
          "channel": {"family": "amplitudeDamping"},
          "numStations": [3],
          "grid": {"start": 0.0, "end": 0.2, "points": 21}
        }"#,
    );
    let out = dir.path().join("compare.csv");
    let output = run(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(exit_code(&output), 0);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 21);
    // GHZ instance probability leads Bell's everywhere on this grid.
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        let bell: f64 = cells[6].parse().unwrap();
        let ghz: f64 = cells[7].parse().unwrap();
        assert!(ghz >= bell - 1e-12, "{line}");
    }
    // p = 0 rows: both probabilities exactly 1.
    let first = lines[1].split(',').collect::<Vec<_>>();
    assert_eq!(first[6].parse::<f64>().unwrap(), 1.0);
    assert_eq!(first[7].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn selftest_passes_on_fresh_checkout() {
    let output = run(&["selftest"]);
    assert_eq!(exit_code(&output), 0, "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    for group in [
        "kraus-completeness",
        "oracle-equivalence",
        "general-z-reductions",
        "trace-and-positivity",
        "scalar-fidelity-forms",
        "states-orthonormality",
        "pauli-frames",
    ] {
        assert!(stdout.contains(&format!("PASS {group}")), "{stdout}");
    }
}

#[test]
fn missing_config_file_exits_2() {
    let output = run(&["protocol", "--config", "/nonexistent.json", "--out", "/tmp/x.json"]);
    assert_eq!(exit_code(&output), 2);
}
