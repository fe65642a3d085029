//! End-to-end checks of the `relaydes` binary: flag parsing, exit codes,
//! config-file merging, and byte-level determinism of the emitted files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn relaydes() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaydes"))
}

fn run_args(args: &[&str]) -> Output {
    relaydes().args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).expect("output file exists")
}

fn tmp(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("relaydes-test-{}-{name}", std::process::id()));
    path
}

#[test]
fn run_writes_csv_with_exact_header() {
    let out = tmp("basic.csv");
    let output = run_args(&[
        "run",
        "--n",
        "1",
        "--n-c",
        "2",
        "--design",
        "single-relay",
        "--snr-start",
        "10",
        "--snr-stop",
        "15",
        "--snr-step",
        "5",
        "--trials",
        "5",
        "--symbols",
        "200",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = read(&out);
    assert!(text.starts_with(
        "design,snr_db,n_b,n_s,n_r,n_c,n_d,trials,symbols,errors,asep,ci95,mean_cost\n"
    ));
    assert_eq!(text.trim_end().lines().count(), 3);
    std::fs::remove_file(out).ok();
}

#[test]
fn validation_errors_exit_one() {
    // trials = 0 is a validation error
    let output = run_args(&[
        "run",
        "--n",
        "1",
        "--trials",
        "0",
        "--out",
        "/tmp/never-written.csv",
    ]);
    assert_eq!(output.status.code(), Some(1));

    // inconsistent dimensions: n_b > n_s
    let output = run_args(&[
        "run",
        "--n-b",
        "3",
        "--n-s",
        "2",
        "--n-r",
        "3",
        "--n-d",
        "3",
        "--out",
        "/tmp/x.csv",
    ]);
    assert_eq!(output.status.code(), Some(1));

    // unknown flag
    let output = run_args(&["run", "--definitely-not-a-flag"]);
    assert_eq!(output.status.code(), Some(1));

    // missing output path
    let output = run_args(&["run", "--n", "1", "--trials", "2", "--symbols", "10"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn identical_runs_are_byte_identical_across_threads() {
    let out1 = tmp("det1.csv");
    let out2 = tmp("det2.csv");
    let base = [
        "run",
        "--n",
        "1",
        "--n-c",
        "2",
        "--design",
        "all",
        "--snr-start",
        "5",
        "--snr-stop",
        "10",
        "--snr-step",
        "5",
        "--trials",
        "8",
        "--symbols",
        "100",
        "--seed",
        "99",
    ];
    let mut a = base.to_vec();
    a.extend(["--threads", "1", "--out", out1.to_str().unwrap()]);
    let mut b = base.to_vec();
    b.extend(["--threads", "4", "--out", out2.to_str().unwrap()]);
    assert!(run_args(&a).status.success());
    assert!(run_args(&b).status.success());
    assert_eq!(read(&out1), read(&out2));
    std::fs::remove_file(out1).ok();
    std::fs::remove_file(out2).ok();
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let config_path = tmp("config.json");
    let out_config = tmp("from-config.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{"design": "single-relay", "n": 1, "n_c": 2, "snr_start": 10.0,
                "snr_stop": 10.0, "snr_step": 5.0, "trials": 4, "symbols": 100,
                "seed": 5, "format": "json", "out": "{}"}}"#,
            out_config.display()
        ),
    )
    .unwrap();

    let output = run_args(&["run", "--config", config_path.to_str().unwrap()]);
    assert!(output.status.success(), "{output:?}");
    let text = read(&out_config);
    assert!(text.trim_start().starts_with('['));
    assert!(text.contains("\"design\": \"single-relay\""));

    // --seed on the command line overrides the file; a different seed
    // changes the channel draws and therefore the bytes
    let out_override = tmp("override.json");
    let output = run_args(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        out_override.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_ne!(read(&out_config), read(&out_override));

    // malformed config is a validation error
    std::fs::write(&config_path, "{not json").unwrap();
    let output = run_args(&["run", "--config", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));

    std::fs::remove_file(config_path).ok();
    std::fs::remove_file(out_config).ok();
    std::fs::remove_file(out_override).ok();
}

#[test]
fn verify_suites_pass() {
    for sub in ["verify-hessian", "verify-alloc"] {
        let output = run_args(&[sub]);
        assert!(output.status.success(), "{sub}: {output:?}");
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(stdout.contains("PASS"));
        assert!(!stdout.contains("FAIL"));
    }
}

#[test]
fn verify_lemma1_passes() {
    let output = run_args(&["verify-lemma1"]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("all checks passed"));
}
