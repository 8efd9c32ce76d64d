use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bhqt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bhqt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error record");
    serde_json::from_str(line).expect("error record is JSON")
}

fn run_in(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--out", out];
    args.extend_from_slice(extra);
    bhqt(&args)
}

#[test]
fn lists_all_protocols_alphabetically() {
    let out = bhqt(&["list-protocols", "--json"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = doc
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "conditional-transport",
            "echo",
            "noon-ramsey",
            "phonon-swap",
            "ramp-sweep",
            "reversibility",
            "sensing"
        ]
    );
    for e in doc.as_array().unwrap() {
        assert!(!e["required_fields"].as_array().unwrap().is_empty());
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bhqt(&["run", "--protocol", "echo", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");
}

#[test]
fn unknown_protocol_and_preset() {
    let out = bhqt(&["run", "--protocol", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bhqt(&["run", "--protocol", "echo", "--preset", "nine_qubit"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = error_record(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("five_qubit") && msg.contains("seven_qubit"), "{msg}");
}

#[test]
fn missing_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("out");
    let out = run_in(&dest, &["--config", "/nonexistent/exp.toml", "--protocol", "echo"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dest.exists());
}

#[test]
fn invalid_config_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("out");
    let out = run_in(
        &dest,
        &[
            "--preset",
            "five_qubit",
            "--protocol",
            "conditional-transport",
            "--set",
            "ramp.tau_fraction=0.9",
            "--set",
            "lattice.ancilla_site=9",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "config");
    let details: Vec<&str> = rec["error"]["details"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d.as_str().unwrap())
        .collect();
    assert!(details.iter().any(|d| d.contains("tau_fraction")), "{details:?}");
    assert!(details.iter().any(|d| d.contains("ancilla_site")), "{details:?}");
    assert!(!dest.exists());
}

#[test]
fn bad_set_syntax_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(
        &tmp.path().join("o"),
        &["--preset", "five_qubit", "--protocol", "sensing", "--set", "ancilla"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transport_run_writes_results_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("out");
    let out = run_in(
        &dest,
        &[
            "--preset",
            "five_qubit",
            "--protocol",
            "conditional-transport",
            "--set",
            "protocol.ancilla=ground",
            "--seed",
            "7",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dest.join("results.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let meta: Value = serde_json::from_slice(&std::fs::read(dest.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["protocol"], "conditional-transport");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["source"], "preset:five_qubit");
    assert_eq!(meta["points"].as_array().unwrap().len(), 1);
    assert_eq!(meta["points"][0]["config"]["protocol"]["ancilla"], "ground");
    assert!(meta["versions"]["bhqt-core"].is_string());
    assert!(!dest.join("spectrum.csv").exists());
}

#[test]
fn sweep_adds_prefix_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("out");
    let out = run_in(
        &dest,
        &[
            "--preset",
            "five_qubit",
            "--protocol",
            "noon-ramsey",
            "--set",
            "ramp.t_ramp_ns=120,240",
            "--set",
            "ramsey.hold_points=101",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dest.join("results.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "ramp.t_ramp_ns");
    assert_ne!(&header[1], "ramsey.hold_points");
    let firsts: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(firsts.len(), 202);
    assert_eq!(firsts[0], "120");
    assert_eq!(firsts[201], "240");
    assert!(dest.join("spectrum.csv").exists());
    let meta: Value = serde_json::from_slice(&std::fs::read(dest.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["sweep_keys"], serde_json::json!(["ramp.t_ramp_ns"]));
}

#[test]
fn results_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for jobs in ["1", "2"] {
        let dest = tmp.path().join(format!("j{jobs}"));
        let out = run_in(
            &dest,
            &[
                "--preset",
                "five_qubit",
                "--protocol",
                "reversibility",
                "--jobs",
                jobs,
                "--shots",
                "8",
                "--set",
                "noise.enabled=true",
                "--set",
                "reversibility.max_pairs=2",
                "--set",
                "run.seed=1,2",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(std::fs::read(dest.join("results.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn rerun_into_existing_directory_replaces_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("out");
    let args = ["--preset", "five_qubit", "--protocol", "conditional-transport"];
    assert!(run_in(&dest, &args).status.success());
    assert!(run_in(&dest, &args).status.success());
    let leftovers: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".bhqt-"))
        .collect();
    assert!(leftovers.is_empty());
}
